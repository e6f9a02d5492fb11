//! Delimited text tables with a provenance comment line.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rbsmc::metamodel::{observation_name, LinearObservationModel, TrainingSet};
use rbsmc::prior::BlockLayout;

use crate::error::{HarnessError, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Identifies the run that produced a file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub scenario_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn header(&self) -> String {
        format!("# rbsmc {VERSION} scenario={} seed={}", self.scenario_hash, self.seed)
    }
}

/// Accumulates rows and writes them as CSV under a provenance line.
pub struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path, provenance: &Provenance) -> Result<()> {
        let io = |e| HarnessError::io(path, e);
        let mut out = BufWriter::new(File::create(path).map_err(io)?);
        writeln!(out, "{}", provenance.header()).map_err(io)?;
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| HarnessError::io(path, e.into());
        w.write_record(&self.columns).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row).map_err(csv_err)?;
        }
        w.flush().map_err(io)
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x}")
}

/// A parsed table: header names and string rows.
pub struct Loaded {
    pub path: PathBuf,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Loaded {
    pub fn column(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| HarnessError::format(&self.path, format!("missing column `{name}`")))
    }

    pub fn float(&self, row: usize, col: usize) -> Result<f64> {
        self.rows[row][col]
            .parse()
            .map_err(|_| HarnessError::format(&self.path, format!("row {}: `{}` is not a number", row + 1, self.rows[row][col])))
    }

    pub fn index(&self, row: usize, col: usize) -> Result<usize> {
        self.rows[row][col]
            .parse()
            .map_err(|_| HarnessError::format(&self.path, format!("row {}: `{}` is not an index", row + 1, self.rows[row][col])))
    }
}

pub fn read_table(path: &Path) -> Result<Loaded> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
    let bad = |e: csv::Error| HarnessError::format(path, e.to_string());
    let columns = reader.headers().map_err(bad)?.iter().map(String::from).collect();
    let rows = reader
        .records()
        .map(|r| r.map(|rec| rec.iter().map(String::from).collect()).map_err(bad))
        .collect::<Result<_>>()?;
    Ok(Loaded { path: path.to_path_buf(), columns, rows })
}

/// Long format `k, component, value` for one vector per frequency.
pub fn write_vectors(path: &Path, provenance: &Provenance, vectors: &[DVector<f64>], names: &[String]) -> Result<()> {
    let mut t = Table::new(["k", "component", "value"]);
    for (k, v) in vectors.iter().enumerate() {
        for (i, x) in v.iter().enumerate() {
            t.push(vec![k.to_string(), names[i].clone(), num(*x)]);
        }
    }
    t.write(path, provenance)
}

/// Inverse of [`write_vectors`]; rows must list components in `names` order.
pub fn read_vectors(path: &Path, frequencies: usize, names: &[String]) -> Result<Vec<DVector<f64>>> {
    let t = read_table(path)?;
    let (ck, cc, cv) = (t.column("k")?, t.column("component")?, t.column("value")?);
    if t.rows.len() != frequencies * names.len() {
        return Err(HarnessError::format(
            path,
            format!("expected {} rows ({frequencies} frequencies × {} components), found {}", frequencies * names.len(), names.len(), t.rows.len()),
        ));
    }
    let mut out = vec![DVector::zeros(names.len()); frequencies];
    for r in 0..t.rows.len() {
        let (k, i) = (r / names.len(), r % names.len());
        if t.index(r, ck)? != k || t.rows[r][cc] != names[i] {
            return Err(HarnessError::format(path, format!("row {}: expected k={k}, component {}", r + 1, names[i])));
        }
        out[k][i] = t.float(r, cv)?;
    }
    Ok(out)
}

pub fn observation_names(angles: usize) -> Vec<String> {
    (0..4 * angles).map(|i| observation_name(i, angles)).collect()
}

pub fn state_names(layout: &BlockLayout) -> Vec<String> {
    (0..layout.state_dim()).map(|i| layout.component_name(i)).collect()
}

/// Fitted models as `k, matrix, row, col, value` with `matrix ∈ {a, y0, r}`.
pub fn write_models(path: &Path, provenance: &Provenance, models: &[LinearObservationModel]) -> Result<()> {
    let mut t = Table::new(["k", "matrix", "row", "col", "value"]);
    for (k, m) in models.iter().enumerate() {
        let mut matrix = |name: &str, mat: &DMatrix<f64>| {
            for i in 0..mat.nrows() {
                for j in 0..mat.ncols() {
                    t.push(vec![k.to_string(), name.into(), i.to_string(), j.to_string(), num(mat[(i, j)])]);
                }
            }
        };
        matrix("a", &m.a);
        matrix("y0", &DMatrix::from_column_slice(m.y0.len(), 1, m.y0.as_slice()));
        matrix("r", &m.r);
    }
    t.write(path, provenance)
}

pub fn read_models(path: &Path, frequencies: usize, obs_dim: usize, state_dim: usize) -> Result<Vec<LinearObservationModel>> {
    let t = read_table(path)?;
    let cols = [t.column("k")?, t.column("matrix")?, t.column("row")?, t.column("col")?, t.column("value")?];
    let mut a = vec![DMatrix::from_element(obs_dim, state_dim, f64::NAN); frequencies];
    let mut y0 = vec![DVector::from_element(obs_dim, f64::NAN); frequencies];
    let mut r = vec![DMatrix::from_element(obs_dim, obs_dim, f64::NAN); frequencies];
    for row in 0..t.rows.len() {
        let k = t.index(row, cols[0])?;
        let (i, j) = (t.index(row, cols[2])?, t.index(row, cols[3])?);
        let v = t.float(row, cols[4])?;
        let name = t.rows[row][cols[1]].as_str();
        let fits = k < frequencies
            && match name {
                "a" => i < obs_dim && j < state_dim,
                "y0" => i < obs_dim && j == 0,
                "r" => i < obs_dim && j < obs_dim,
                _ => false,
            };
        if !fits {
            return Err(HarnessError::format(path, format!("row {}: entry {name}[{i},{j}] at k={k} does not fit the layout", row + 1)));
        }
        match name {
            "a" => a[k][(i, j)] = v,
            "y0" => y0[k][i] = v,
            _ => r[k][(i, j)] = v,
        }
    }
    if a.iter().chain(&r).any(|m| m.iter().any(|x| x.is_nan())) || y0.iter().any(|v| v.iter().any(|x| x.is_nan())) {
        return Err(HarnessError::format(path, "model file is missing entries"));
    }
    a.into_iter()
        .zip(y0)
        .zip(r)
        .map(|((a, y0), r)| LinearObservationModel::new(a, y0, r).map_err(|e| HarnessError::format(path, e.to_string())))
        .collect()
}

/// Training pairs, wide: `k, <state names>, <observation names>`.
pub fn write_training(path: &Path, provenance: &Provenance, sets: &[TrainingSet], layout: &BlockLayout, angles: usize) -> Result<()> {
    let mut columns = vec!["k".to_string()];
    columns.extend(state_names(layout));
    columns.extend(observation_names(angles));
    let mut t = Table::new(columns);
    for (k, s) in sets.iter().enumerate() {
        for row in 0..s.len() {
            let mut r = vec![k.to_string()];
            r.extend(s.states.row(row).iter().map(|&x| num(x)));
            r.extend(s.observations.row(row).iter().map(|&x| num(x)));
            t.push(r);
        }
    }
    t.write(path, provenance)
}

pub fn read_training(path: &Path, frequencies: usize, layout: &BlockLayout, angles: usize) -> Result<Vec<TrainingSet>> {
    let t = read_table(path)?;
    let ck = t.column("k")?;
    let state_cols = state_names(layout).iter().map(|n| t.column(n)).collect::<Result<Vec<_>>>()?;
    let obs_cols = observation_names(angles).iter().map(|n| t.column(n)).collect::<Result<Vec<_>>>()?;
    let mut rows: BTreeMap<usize, Vec<usize>> = (0..frequencies).map(|k| (k, Vec::new())).collect();
    for r in 0..t.rows.len() {
        let k = t.index(r, ck)?;
        rows.get_mut(&k).ok_or_else(|| HarnessError::format(path, format!("row {}: frequency {k} out of range", r + 1)))?.push(r);
    }
    rows.values()
        .map(|rs| {
            let grab = |cols: &[usize]| -> Result<DMatrix<f64>> {
                let mut m = DMatrix::zeros(rs.len(), cols.len());
                for (i, &r) in rs.iter().enumerate() {
                    for (j, &c) in cols.iter().enumerate() {
                        m[(i, j)] = t.float(r, c)?;
                    }
                }
                Ok(m)
            };
            let set = TrainingSet::new(grab(&state_cols)?, grab(&obs_cols)?).map_err(|e| HarnessError::format(path, e.to_string()))?;
            Ok(set.with_state_names(state_names(layout)))
        })
        .collect()
}

/// Writes the echoed configuration under a TOML comment carrying provenance.
pub fn write_echo(path: &Path, provenance: &Provenance, text: &str) -> Result<()> {
    std::fs::write(path, format!("{}\n{text}", provenance.header())).map_err(|e| HarnessError::io(path, e))
}

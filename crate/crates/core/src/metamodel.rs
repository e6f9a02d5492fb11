//! Linear-Gaussian observation model `Y_k | X_k ~ N(A_k·X_k + Y0_k, R_k)`:
//! least-squares fitting from training pairs, linearity-error analysis and a
//! synthetic nonlinear solver used to produce training data.
//!
//! Observation vectors are ordered `[Re TM (M), Im TM (M), Re TE (M), Im TE (M)]`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::gaussian::{psd_factor, relative_asymmetry, standard_normal_vector, symmetrize, SYMMETRY_TOL};
use crate::par::{self, Execution};
use crate::rng::{stream, substream};

/// Labels of the four observation parts, in vector order.
pub const OBSERVATION_PARTS: [&str; 4] = ["re.tm", "im.tm", "re.te", "im.te"];

/// Canonical name `part.pol.angle` of observation component `i` with `m` angles.
pub fn observation_name(i: usize, m: usize) -> String {
    format!("{}.{}", OBSERVATION_PARTS[i / m], i % m + 1)
}

/// `(A_k, Y0_k, R_k)` at one frequency. `R_k` must be symmetric positive
/// semi-definite; it may be singular when measurements are noiseless.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearObservationModel {
    pub a: DMatrix<f64>,
    pub y0: DVector<f64>,
    pub r: DMatrix<f64>,
}

impl LinearObservationModel {
    pub fn new(a: DMatrix<f64>, y0: DVector<f64>, mut r: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != y0.len() || r.nrows() != y0.len() || r.ncols() != y0.len() {
            return Err(Error::Dimension(format!(
                "A is {}x{}, Y0 has {} rows, R is {}x{}",
                a.nrows(),
                a.ncols(),
                y0.len(),
                r.nrows(),
                r.ncols()
            )));
        }
        if a.nrows() % 4 != 0 {
            return Err(Error::Dimension(format!("observation length {} is not divisible by 4", a.nrows())));
        }
        let asym = relative_asymmetry(&r);
        if asym > SYMMETRY_TOL {
            return Err(Error::NotSymmetric(asym));
        }
        symmetrize(&mut r);
        let min = r.clone().symmetric_eigenvalues().min();
        if min < -1e-9 * r.trace().abs().max(f64::MIN_POSITIVE) {
            return Err(Error::NotPositiveDefinite(format!("noise covariance has eigenvalue {min:e}")));
        }
        Ok(Self { a, y0, r })
    }

    pub fn obs_dim(&self) -> usize {
        self.y0.len()
    }

    pub fn state_dim(&self) -> usize {
        self.a.ncols()
    }

    /// Number of incidence angles `M`.
    pub fn angles(&self) -> usize {
        self.obs_dim() / 4
    }
}

/// Draws `A·x + Y0 + w` with `w ~ N(0, R)`.
pub fn observe<R: Rng + ?Sized>(model: &LinearObservationModel, x: &DVector<f64>, rng: &mut R) -> DVector<f64> {
    let z = standard_normal_vector(model.obs_dim(), rng);
    &model.a * x + &model.y0 + psd_factor(&model.r) * z
}

/// `N_E` training couples `(X, Y)`, stored row-wise.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    pub states: DMatrix<f64>,
    pub observations: DMatrix<f64>,
    /// Names used in rank-deficiency reports; `x1, x2, …` when unset.
    pub state_names: Vec<String>,
}

impl TrainingSet {
    pub fn new(states: DMatrix<f64>, observations: DMatrix<f64>) -> Result<Self> {
        if states.nrows() != observations.nrows() {
            return Err(Error::Dimension(format!(
                "{} state rows against {} observation rows",
                states.nrows(),
                observations.nrows()
            )));
        }
        let state_names = (1..=states.ncols()).map(|j| format!("x{j}")).collect();
        Ok(Self { states, observations, state_names })
    }

    pub fn from_pairs(pairs: &[(DVector<f64>, DVector<f64>)]) -> Result<Self> {
        let first = pairs.first().ok_or_else(|| Error::InvalidParameter("empty training set".into()))?;
        let (n, m) = (first.0.len(), first.1.len());
        if pairs.iter().any(|(x, y)| x.len() != n || y.len() != m) {
            return Err(Error::Dimension("training pairs have inconsistent lengths".into()));
        }
        let states = DMatrix::from_fn(pairs.len(), n, |i, j| pairs[i].0[j]);
        let observations = DMatrix::from_fn(pairs.len(), m, |i, j| pairs[i].1[j]);
        Self::new(states, observations)
    }

    pub fn with_state_names(mut self, names: Vec<String>) -> Self {
        self.state_names = names;
        self
    }

    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `[1 | X]`, one row per couple.
    pub fn design(&self) -> DMatrix<f64> {
        let (rows, cols) = self.states.shape();
        DMatrix::from_fn(rows, cols + 1, |i, j| if j == 0 { 1.0 } else { self.states[(i, j - 1)] })
    }

    fn resampled(&self, rows: &[usize]) -> Self {
        Self {
            states: self.states.select_rows(rows),
            observations: self.observations.select_rows(rows),
            state_names: self.state_names.clone(),
        }
    }
}

/// Least-squares estimate of `(A, Y0)` with the `N_E × 4M` residual matrix.
#[derive(Clone, Debug)]
pub struct MetamodelFit {
    pub a: DMatrix<f64>,
    pub y0: DVector<f64>,
    pub residuals: DMatrix<f64>,
}

impl MetamodelFit {
    /// Number of regression coefficients per observation component (`4N + 1`).
    pub fn n_params(&self) -> usize {
        self.a.ncols() + 1
    }

    /// Completes the fit into an observation model with noise covariance `r`.
    pub fn into_model(self, r: DMatrix<f64>) -> Result<LinearObservationModel> {
        LinearObservationModel::new(self.a, self.y0, r)
    }
}

/// Relative size of a QR pivot below which its column counts as dependent.
const RANK_TOL: f64 = 1e-9;

/// Ordinary least squares with intercept, one regression per observation
/// component (they share the design, so a single QR serves all of them).
pub fn fit_linear_metamodel(data: &TrainingSet) -> Result<MetamodelFit> {
    let n_params = data.states.ncols() + 1;
    if data.len() <= n_params {
        return Err(Error::InvalidParameter(format!(
            "{} training couples cannot determine {n_params} coefficients",
            data.len()
        )));
    }
    let design = data.design();
    let qr = design.clone().qr();
    let r = qr.r();
    let scale = r.diagonal().amax();
    let deficient: Vec<String> = (0..n_params)
        .filter(|&j| !(r[(j, j)].abs() > RANK_TOL * scale))
        .map(|j| if j == 0 { "intercept".to_string() } else { data.state_names[j - 1].clone() })
        .collect();
    if !deficient.is_empty() {
        return Err(Error::RankDeficient(deficient));
    }
    let qty = qr.q().transpose() * &data.observations;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::RankDeficient(vec!["triangular solve".into()]))?;
    let residuals = &data.observations - &design * &beta;
    let y0 = beta.row(0).transpose();
    let a = beta.rows(1, n_params - 1).transpose();
    Ok(MetamodelFit { a, y0, residuals })
}

/// Empirical covariance of the regression residuals.
#[derive(Clone, Debug)]
pub struct ResidualCovariance {
    pub matrix: DMatrix<f64>,
    /// Too few residual degrees of freedom: only per-component variances kept.
    pub diagonal_only: bool,
    /// Whether the matrix could serve on its own as a noise covariance.
    pub positive_definite: bool,
}

/// Residual covariance with denominator `N_E − n_params`; falls back to a
/// diagonal of variances when that is smaller than the observation dimension.
pub fn residual_covariance(residuals: &DMatrix<f64>, n_params: usize) -> ResidualCovariance {
    let (rows, dim) = residuals.shape();
    let dof = rows.saturating_sub(n_params).max(1) as f64;
    let diagonal_only = rows.saturating_sub(n_params) < dim;
    let mut matrix = residuals.transpose() * residuals / dof;
    if diagonal_only {
        matrix = DMatrix::from_diagonal(&matrix.diagonal());
    }
    symmetrize(&mut matrix);
    let positive_definite = matrix.clone().cholesky().is_some();
    ResidualCovariance { matrix, diagonal_only, positive_definite }
}

/// Per-coefficient spread of bootstrap refits.
#[derive(Clone, Debug)]
pub struct BootstrapSummary {
    pub a_sd: DMatrix<f64>,
    pub y0_sd: DVector<f64>,
    pub a_lo: DMatrix<f64>,
    pub a_hi: DMatrix<f64>,
    pub y0_lo: DVector<f64>,
    pub y0_hi: DVector<f64>,
    pub replicates: usize,
    pub skipped: usize,
}

/// Linear-interpolated quantile of an ascending slice.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Pair-resampling bootstrap of the least-squares fit with `b` replicates.
///
/// Each replicate draws from its own substream, so the result does not depend
/// on how replicates are scheduled. Rank-deficient resamples are skipped; more
/// than 10% skipped is an error.
pub fn bootstrap_linearity_error<R: Rng + ?Sized>(
    data: &TrainingSet,
    b: usize,
    rng: &mut R,
    exec: Execution,
) -> Result<BootstrapSummary> {
    if b < 100 {
        return Err(Error::InvalidParameter(format!("bootstrap needs at least 100 replicates, got {b}")));
    }
    let seed: u64 = rng.random();
    let n = data.len();
    let fits = par::map_indexed(exec, b, |rep| {
        let mut r = substream(seed, &[stream::BOOTSTRAP, rep as u64]);
        let rows: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
        fit_linear_metamodel(&data.resampled(&rows))
    });
    let mut kept = Vec::with_capacity(b);
    let mut skipped = 0;
    for fit in fits {
        match fit {
            Ok(f) => kept.push(f),
            Err(Error::RankDeficient(_)) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if skipped * 10 > b {
        return Err(Error::BootstrapSkips { skipped, total: b });
    }

    let (rows, cols) = kept[0].a.shape();
    let summarize = |values: &mut Vec<f64>| {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
        values.sort_by(f64::total_cmp);
        (var.sqrt(), quantile_sorted(values, 0.025), quantile_sorted(values, 0.975))
    };
    let mut a_sd = DMatrix::zeros(rows, cols);
    let mut a_lo = DMatrix::zeros(rows, cols);
    let mut a_hi = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let mut v: Vec<f64> = kept.iter().map(|f| f.a[(i, j)]).collect();
            (a_sd[(i, j)], a_lo[(i, j)], a_hi[(i, j)]) = summarize(&mut v);
        }
    }
    let mut y0_sd = DVector::zeros(rows);
    let mut y0_lo = DVector::zeros(rows);
    let mut y0_hi = DVector::zeros(rows);
    for i in 0..rows {
        let mut v: Vec<f64> = kept.iter().map(|f| f.y0[i]).collect();
        (y0_sd[i], y0_lo[i], y0_hi[i]) = summarize(&mut v);
    }
    Ok(BootstrapSummary { a_sd, y0_sd, a_lo, a_hi, y0_lo, y0_hi, replicates: kept.len(), skipped })
}

/// Seeded stand-in for the electromagnetic solver: an affine map that varies
/// smoothly with incidence angle and frequency, plus a quadratic term scaled
/// by the nonlinearity `γ`.
#[derive(Clone, Debug)]
pub struct SyntheticSolver {
    a: Vec<DMatrix<f64>>,
    y0: Vec<DVector<f64>>,
    directions: DMatrix<f64>,
    centers: Vec<DVector<f64>>,
}

impl SyntheticSolver {
    /// `centers[k]` is the expansion point of the quadratic term at frequency
    /// `k` (typically the prior mean); its length fixes the state dimension.
    pub fn new(angles: usize, centers: Vec<DVector<f64>>, seed: u64) -> Result<Self> {
        if angles == 0 || centers.is_empty() {
            return Err(Error::InvalidParameter("solver needs at least one angle and one frequency".into()));
        }
        let n = centers[0].len();
        let m = 4 * angles;
        let k_count = centers.len();
        let mut rng = substream(seed, &[stream::SOLVER]);
        let tau = std::f64::consts::TAU;
        let normal = |r: &mut crate::rng::StreamRng| standard_normal_vector(1, r)[0];

        // per (observation part, state column): amplitude, phase, angular rate, frequency drift
        let coef: Vec<[f64; 4]> = (0..4 * n)
            .map(|_| {
                let amp = normal(&mut rng) / (n as f64 / 4.0).sqrt();
                [amp, tau * rng.random::<f64>(), 0.5 + 7.5 * rng.random::<f64>(), rng.random::<f64>() * 2.0 - 1.0]
            })
            .collect();
        let offset: Vec<[f64; 4]> = (0..4)
            .map(|_| [normal(&mut rng), tau * rng.random::<f64>(), 0.5 + 7.5 * rng.random::<f64>(), rng.random::<f64>() * 2.0 - 1.0])
            .collect();
        let directions = DMatrix::from_fn(m, n, |_, _| normal(&mut rng) / (n as f64).sqrt());

        let angle = |j: usize| std::f64::consts::PI * (j as f64 + 0.5) / angles as f64;
        let position = |k: usize| if k_count > 1 { k as f64 / (k_count - 1) as f64 } else { 0.0 };
        let wave = |c: &[f64; 4], j: usize, k: usize| {
            c[0] * (c[2] * angle(j) + c[1] + c[3] * std::f64::consts::PI * position(k)).cos()
        };
        let a = (0..k_count)
            .map(|k| DMatrix::from_fn(m, n, |row, col| wave(&coef[(row / angles) * n + col], row % angles, k)))
            .collect();
        let y0 = (0..k_count)
            .map(|k| DVector::from_fn(m, |row, _| wave(&offset[row / angles], row % angles, k)))
            .collect();
        Ok(Self { a, y0, directions, centers })
    }

    pub fn frequencies(&self) -> usize {
        self.a.len()
    }

    pub fn a_star(&self, k: usize) -> &DMatrix<f64> {
        &self.a[k]
    }

    pub fn y0_star(&self, k: usize) -> &DVector<f64> {
        &self.y0[k]
    }

    /// Noiseless response `A*_k·x + Y0*_k + γ·q(x)` with
    /// `q_i(x) = (u_i·(x − c_k))²`.
    pub fn evaluate(&self, k: usize, x: &DVector<f64>, gamma: f64) -> DVector<f64> {
        let mut y = &self.a[k] * x + &self.y0[k];
        if gamma != 0.0 {
            let proj = &self.directions * (x - &self.centers[k]);
            y += proj.map(|p| gamma * p * p);
        }
        y
    }
}

/// Noiseless solver output for one state; see [`SyntheticSolver::evaluate`].
pub fn synth_solver_oracle(solver: &SyntheticSolver, k: usize, x: &DVector<f64>, gamma: f64) -> DVector<f64> {
    solver.evaluate(k, x, gamma)
}

//! Block-structured per-frequency priors and the inter-frequency
//! generalised AR process built on their square roots.
//!
//! The state at one frequency stacks the four material properties,
//! property-major: `[ε′(N), ε″(N), μ′(N), μ″(N)]`. Within a property, areas
//! are enumerated block by block.

use std::fmt;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{spd_sqrt_of, standard_normal_vector, SpdMatrix, SqrtMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    EpsRe,
    EpsIm,
    MuRe,
    MuIm,
}

impl Property {
    pub const ALL: [Property; 4] = [Property::EpsRe, Property::EpsIm, Property::MuRe, Property::MuIm];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Property::EpsRe => "eps_re",
            Property::EpsIm => "eps_im",
            Property::MuRe => "mu_re",
            Property::MuIm => "mu_im",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Partition of the `N` areas into `N_b` contiguous blocks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockLayout {
    areas_per_block: Vec<usize>,
    offsets: Vec<usize>,
}

impl BlockLayout {
    pub fn new(areas_per_block: Vec<usize>) -> Result<Self> {
        if areas_per_block.is_empty() {
            return Err(Error::InvalidParameter("layout needs at least one block".into()));
        }
        if let Some(b) = areas_per_block.iter().position(|&n| n == 0) {
            return Err(Error::InvalidParameter(format!("block {} has no areas", b + 1)));
        }
        let offsets = areas_per_block
            .iter()
            .scan(0, |acc, &n| {
                let start = *acc;
                *acc += n;
                Some(start)
            })
            .collect();
        Ok(Self { areas_per_block, offsets })
    }

    pub fn areas_per_block(&self) -> &[usize] {
        &self.areas_per_block
    }

    pub fn n_blocks(&self) -> usize {
        self.areas_per_block.len()
    }

    pub fn n_areas(&self) -> usize {
        self.areas_per_block.iter().sum()
    }

    pub fn state_dim(&self) -> usize {
        4 * self.n_areas()
    }

    /// Global area indices belonging to block `b`.
    pub fn block_areas(&self, b: usize) -> Range<usize> {
        self.offsets[b]..self.offsets[b] + self.areas_per_block[b]
    }

    pub fn block_of(&self, area: usize) -> usize {
        self.offsets.partition_point(|&o| o <= area) - 1
    }

    /// Position of `(property, area)` in the state vector.
    pub fn index(&self, property: Property, area: usize) -> usize {
        property.index() * self.n_areas() + area
    }

    /// State index ranges of the `4·N_b` (property, block) groups, with their
    /// property and block.
    pub fn groups(&self) -> impl Iterator<Item = (Property, usize, Range<usize>)> + '_ {
        Property::ALL.into_iter().flat_map(move |p| {
            (0..self.n_blocks()).map(move |b| {
                let areas = self.block_areas(b);
                let base = p.index() * self.n_areas();
                (p, b, base + areas.start..base + areas.end)
            })
        })
    }

    /// Canonical column name `property.block.area` (1-based block and area).
    pub fn component_name(&self, index: usize) -> String {
        let n = self.n_areas();
        let property = Property::ALL[index / n];
        let area = index % n;
        format!("{}.{}.{}", property, self.block_of(area) + 1, area + 1)
    }
}

/// Prior reference values and uncertainty for one frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorSpec {
    /// Per block, the reference `[ε′, ε″, μ′, μ″]`.
    pub reference: Vec<[f64; 4]>,
    pub sigma_abs: f64,
    pub sigma_rel: f64,
    pub spatial_correlation: f64,
}

impl PriorSpec {
    pub fn validate(&self, layout: &BlockLayout) -> Result<()> {
        if self.reference.len() != layout.n_blocks() {
            return Err(Error::Dimension(format!(
                "{} reference rows for {} blocks",
                self.reference.len(),
                layout.n_blocks()
            )));
        }
        if !(self.sigma_abs >= 0.0) || !(self.sigma_rel >= 0.0) || !(self.sigma_abs + self.sigma_rel > 0.0) {
            return Err(Error::InvalidParameter("uncertainties must be non-negative and not both zero".into()));
        }
        if !(0.0..=1.0).contains(&self.spatial_correlation) {
            return Err(Error::InvalidParameter("spatial correlation out of [0,1]".into()));
        }
        Ok(())
    }

    pub fn mean(&self, layout: &BlockLayout) -> DVector<f64> {
        let mut m = DVector::zeros(layout.state_dim());
        for (p, b, range) in layout.groups() {
            m.rows_mut(range.start, range.len()).fill(self.reference[b][p.index()]);
        }
        m
    }
}

/// Gaussian prior `N(m_k, P_k)` at one frequency with the symmetric root of `P_k`.
#[derive(Clone, Debug)]
pub struct MarginalPrior {
    pub mean: DVector<f64>,
    pub cov: SpdMatrix,
    pub sqrt: SqrtMatrix,
}

impl MarginalPrior {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Builds the block-diagonal prior for one frequency.
///
/// Each component gets `σ_i = σ_abs + σ_rel·|m_i|`; inside one (property,
/// block) group `Cov(i, j) = σ_i·σ_j·ρ_S^|i−j|` with `|i−j|` the area index
/// distance. Everything across groups is uncorrelated.
pub fn build_spatial_covariance(layout: &BlockLayout, spec: &PriorSpec) -> Result<MarginalPrior> {
    spec.validate(layout)?;
    let mean = spec.mean(layout);
    let dim = layout.state_dim();
    let sigma: Vec<f64> = mean.iter().map(|m| spec.sigma_abs + spec.sigma_rel * m.abs()).collect();
    let mut cov = DMatrix::zeros(dim, dim);
    let mut roots = Vec::new();
    for (p, b, range) in layout.groups() {
        let n = range.len();
        let block = DMatrix::from_fn(n, n, |i, j| {
            let (gi, gj) = (range.start + i, range.start + j);
            sigma[gi] * sigma[gj] * spec.spatial_correlation.powi(i.abs_diff(j) as i32)
        });
        let root = spd_sqrt_of(&block).map_err(|e| match e {
            Error::NotPositiveDefinite(msg) => {
                Error::NotPositiveDefinite(format!("prior block ({p}, block {}): {msg}", b + 1))
            }
            other => other,
        })?;
        cov.view_mut((range.start, range.start), (n, n)).copy_from(&block);
        roots.push((range.start, root));
    }
    Ok(MarginalPrior { mean, cov: SpdMatrix::new(cov)?, sqrt: SqrtMatrix::block_diagonal(dim, &roots) })
}

/// Which of the three frequential-correlation parameterisations is used.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RhoCase {
    /// One ρ shared by every component.
    Scalar,
    /// One ρ per block, shared by the four properties.
    PerBlock,
    /// One ρ per (property, block), ordered property-major.
    PerBlockProperty,
}

impl RhoCase {
    pub fn dim(self, layout: &BlockLayout) -> usize {
        match self {
            RhoCase::Scalar => 1,
            RhoCase::PerBlock => layout.n_blocks(),
            RhoCase::PerBlockProperty => 4 * layout.n_blocks(),
        }
    }

    /// Short label of component `i`, used for file headers.
    pub fn component_name(self, i: usize, layout: &BlockLayout) -> String {
        match self {
            RhoCase::Scalar => "rho".to_string(),
            RhoCase::PerBlock => format!("rho.{}", i + 1),
            RhoCase::PerBlockProperty => {
                let nb = layout.n_blocks();
                format!("rho.{}.{}", Property::ALL[i / nb], i % nb + 1)
            }
        }
    }
}

/// The frequential-correlation hyperparameter ρ.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationParam {
    pub case: RhoCase,
    pub values: Vec<f64>,
}

impl CorrelationParam {
    pub fn new(case: RhoCase, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || (case == RhoCase::Scalar && values.len() != 1) {
            return Err(Error::Dimension(format!("{} values for {case:?}", values.len())));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParameter(format!("rho component {v} outside [0,1]")));
        }
        Ok(Self { case, values })
    }

    pub fn scalar(rho: f64) -> Result<Self> {
        Self::new(RhoCase::Scalar, vec![rho])
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Diagonal of `D_ρ` (length `4N`).
pub fn expand_rho(rho: &CorrelationParam, layout: &BlockLayout) -> Result<DVector<f64>> {
    let expected = rho.case.dim(layout);
    if rho.values.len() != expected {
        return Err(Error::Dimension(format!(
            "rho has {} components, {:?} on {} blocks needs {expected}",
            rho.values.len(),
            rho.case,
            layout.n_blocks()
        )));
    }
    let nb = layout.n_blocks();
    let mut d = DVector::zeros(layout.state_dim());
    for (p, b, range) in layout.groups() {
        let v = match rho.case {
            RhoCase::Scalar => rho.values[0],
            RhoCase::PerBlock => rho.values[b],
            RhoCase::PerBlockProperty => rho.values[p.index() * nb + b],
        };
        d.rows_mut(range.start, range.len()).fill(v);
    }
    Ok(d)
}

/// Affine Gaussian transition `X_{k+1} = M_k·X_k + b_k + w`, `w ~ N(0, Q_k)`.
#[derive(Clone, Debug)]
pub struct TransitionModel {
    pub m: DMatrix<f64>,
    pub b: DVector<f64>,
    pub q: DMatrix<f64>,
}

fn check_priors(priors: &[MarginalPrior], dim: usize) -> Result<()> {
    if priors.is_empty() {
        return Err(Error::InvalidParameter("at least one frequency is required".into()));
    }
    if let Some(k) = priors.iter().position(|p| p.dim() != dim) {
        return Err(Error::Dimension(format!("prior {k} has dimension {}, expected {dim}", priors[k].dim())));
    }
    Ok(())
}

/// `H_{k+1}·H_k^{-1}`, the ρ-free part of the transition matrix.
pub fn root_ratio(priors: &[MarginalPrior], k: usize) -> DMatrix<f64> {
    priors[k + 1].sqrt.matrix() * priors[k].sqrt.inverse()
}

/// Transition from frequency `k` to `k + 1` (0-based, `k + 1 < K`) for a
/// given diagonal of `D_ρ`.
pub fn transition_from_diagonal(d: &DVector<f64>, priors: &[MarginalPrior], k: usize) -> Result<TransitionModel> {
    check_priors(priors, d.len())?;
    if k + 1 >= priors.len() {
        return Err(Error::InvalidParameter(format!("transition index {k} needs k + 1 < K = {}", priors.len())));
    }
    let mut m = root_ratio(priors, k);
    for (i, &di) in d.iter().enumerate() {
        m.row_mut(i).scale_mut(di);
    }
    let b = &priors[k + 1].mean - &m * &priors[k].mean;
    let s: Vec<f64> = d.iter().map(|v| (1.0 - v * v).max(0.0).sqrt()).collect();
    let next = priors[k + 1].cov.matrix();
    let q = DMatrix::from_fn(d.len(), d.len(), |i, j| s[i] * next[(i, j)] * s[j]);
    Ok(TransitionModel { m, b, q })
}

pub fn transition_model(
    rho: &CorrelationParam,
    layout: &BlockLayout,
    priors: &[MarginalPrior],
    k: usize,
) -> Result<TransitionModel> {
    transition_from_diagonal(&expand_rho(rho, layout)?, priors, k)
}

/// All `K − 1` transitions for one ρ.
pub fn transition_models(
    rho: &CorrelationParam,
    layout: &BlockLayout,
    priors: &[MarginalPrior],
) -> Result<Vec<TransitionModel>> {
    let d = expand_rho(rho, layout)?;
    (0..priors.len().saturating_sub(1)).map(|k| transition_from_diagonal(&d, priors, k)).collect()
}

/// Draws `X_1, …, X_K` from the generalised AR process.
pub fn sample_prior_trajectory<R: Rng + ?Sized>(
    rho: &CorrelationParam,
    layout: &BlockLayout,
    priors: &[MarginalPrior],
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    let d = expand_rho(rho, layout)?;
    check_priors(priors, d.len())?;
    let dim = d.len();
    let s = d.map(|v| (1.0 - v * v).max(0.0).sqrt());
    let mut states = Vec::with_capacity(priors.len());
    let first = &priors[0].mean + priors[0].sqrt.matrix() * standard_normal_vector(dim, rng);
    states.push(first);
    for k in 0..priors.len() - 1 {
        let dev = &states[k] - &priors[k].mean;
        let carried = (root_ratio(priors, k) * dev).component_mul(&d);
        let fresh = (priors[k + 1].sqrt.matrix() * standard_normal_vector(dim, rng)).component_mul(&s);
        states.push(&priors[k + 1].mean + carried + fresh);
    }
    Ok(states)
}

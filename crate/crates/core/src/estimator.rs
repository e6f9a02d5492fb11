//! Posterior summaries of the states obtained by mixing the exact
//! conditional posteriors `p(X | ρ_i, Y)` over the final particle cloud.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::gaussian::symmetrize;
use crate::kalman::{kalman_filter, rts_smoother, BackwardSampler, FilterOutput, GaussianBelief};
use crate::par::{try_map_indexed, Execution};
use crate::prior::{transition_models, BlockLayout, CorrelationParam, Property, TransitionModel};
use crate::rng::substream;
use crate::scenario::Scenario;
use crate::smc::ParticleCloud;

fn rho_key(rho: &CorrelationParam) -> Vec<u64> {
    rho.values.iter().map(|v| v.to_bits()).collect()
}

/// Distinct ρ values (by bit pattern) in first-appearance order, and the
/// index of each particle's value in that list.
fn distinct(rhos: &[&CorrelationParam]) -> (Vec<CorrelationParam>, Vec<usize>) {
    let mut seen = HashMap::new();
    let mut unique = Vec::new();
    let index = rhos
        .iter()
        .map(|rho| {
            *seen.entry(rho_key(rho)).or_insert_with(|| {
                unique.push((*rho).clone());
                unique.len() - 1
            })
        })
        .collect();
    (unique, index)
}

fn filter_for(scenario: &Scenario, rho: &CorrelationParam) -> Result<(FilterOutput, Vec<TransitionModel>)> {
    let transitions = transition_models(rho, &scenario.layout, &scenario.priors)?;
    let out = kalman_filter(&scenario.priors, &transitions, &scenario.observation_models, &scenario.observations)?;
    Ok((out, transitions))
}

fn wrap(rho: &CorrelationParam) -> impl Fn(Error) -> Error + '_ {
    move |e| Error::Smoothing { rho: rho.values.clone(), source: Box::new(e) }
}

/// Smoothed marginals `p(X_k | ρ, Y)` for one ρ.
pub fn conditional_moments(scenario: &Scenario, rho: &CorrelationParam) -> Result<Vec<GaussianBelief>> {
    let (out, transitions) = filter_for(scenario, rho).map_err(wrap(rho))?;
    rts_smoother(&out, &transitions).map_err(wrap(rho))
}

/// Per-frequency posterior means and covariances of the states.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorSummary {
    pub layout: BlockLayout,
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
}

impl PosteriorSummary {
    /// Moments of the two-level mixture `Σ_i w_i·N(μ_i, Σ_i)` at each frequency.
    pub fn from_mixture(layout: BlockLayout, weights: &[f64], components: &[&[GaussianBelief]]) -> Result<Self> {
        if weights.len() != components.len() || components.is_empty() {
            return Err(Error::Dimension(format!("{} weights for {} components", weights.len(), components.len())));
        }
        let k_count = components[0].len();
        let n = layout.state_dim();
        let mut means = Vec::with_capacity(k_count);
        let mut covs = Vec::with_capacity(k_count);
        for k in 0..k_count {
            let mut mean = DVector::zeros(n);
            let mut cov = DMatrix::zeros(n, n);
            for (w, c) in weights.iter().zip(components) {
                mean.axpy(*w, &c[k].mean, 1.0);
                cov += &c[k].cov * *w;
            }
            for (w, c) in weights.iter().zip(components) {
                let d = &c[k].mean - &mean;
                cov.ger(*w, &d, &d, 1.0);
            }
            symmetrize(&mut cov);
            means.push(mean);
            covs.push(cov);
        }
        Ok(Self { layout, means, covs })
    }

    /// The no-data summary: the prior marginals `(m_k, P_k)`.
    pub fn prior(scenario: &Scenario) -> Self {
        Self {
            layout: scenario.layout.clone(),
            means: scenario.priors.iter().map(|p| p.mean.clone()).collect(),
            covs: scenario.priors.iter().map(|p| p.cov.matrix().clone()).collect(),
        }
    }

    pub fn frequencies(&self) -> usize {
        self.means.len()
    }

    pub fn std(&self, k: usize, component: usize) -> f64 {
        self.covs[k][(component, component)].max(0.0).sqrt()
    }
}

/// Rao-Blackwellised moments `E[X_k|Y]` and `Cov[X_k|Y]` over the cloud.
/// The smoother runs once per distinct ρ value.
pub fn rb_moments(cloud: &ParticleCloud, scenario: &Scenario, exec: Execution) -> Result<PosteriorSummary> {
    let rhos: Vec<&CorrelationParam> = cloud.particles.iter().map(|p| &p.rho).collect();
    let (unique, index) = distinct(&rhos);
    let smoothed = try_map_indexed(exec, unique.len(), |i| conditional_moments(scenario, &unique[i]))?;
    let components: Vec<&[GaussianBelief]> = index.iter().map(|&i| smoothed[i].as_slice()).collect();
    PosteriorSummary::from_mixture(scenario.layout.clone(), &cloud.weights, &components)
}

/// Index `i` with probability `weights[i]`.
fn pick<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cumulative = 0.0;
    for (i, w) in weights.iter().enumerate() {
        cumulative += w;
        if u < cumulative {
            return i;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}

/// `n` joint trajectory draws from `p(X | Y)`: a particle is picked by
/// weight, then a trajectory is drawn from `p(X | ρ_i, Y)`. Draw `j` uses
/// the substream `(seed, j)`.
pub fn posterior_samples(
    cloud: &ParticleCloud,
    scenario: &Scenario,
    n: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<Vec<DVector<f64>>>> {
    let picks: Vec<usize> = (0..n).map(|j| pick(&cloud.weights, &mut substream(seed, &[j as u64, 0]))).collect();
    let picked: Vec<&CorrelationParam> = picks.iter().map(|&i| &cloud.particles[i].rho).collect();
    let (unique, index) = distinct(&picked);
    let samplers = try_map_indexed(exec, unique.len(), |i| {
        let rho = &unique[i];
        let (out, transitions) = filter_for(scenario, rho).map_err(wrap(rho))?;
        BackwardSampler::new(&out, &transitions).map_err(wrap(rho))
    })?;
    try_map_indexed(exec, n, |j| Ok::<_, Error>(samplers[index[j]].sample(&mut substream(seed, &[j as u64, 1]))))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProfileRow {
    pub k: usize,
    pub mean: f64,
    pub std: f64,
}

/// The `(property, area)` component across frequencies with its marginal
/// standard deviation.
pub fn frequency_profiles(summary: &PosteriorSummary, area: usize, property: Property) -> Result<Vec<ProfileRow>> {
    if area >= summary.layout.n_areas() {
        return Err(Error::InvalidParameter(format!("area {area} out of range ({} areas)", summary.layout.n_areas())));
    }
    let i = summary.layout.index(property, area);
    Ok((0..summary.frequencies())
        .map(|k| ProfileRow { k, mean: summary.means[k][i], std: summary.std(k, i) })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RhoHistogram {
    /// `bins + 1` uniform edges on `[0, 1]`.
    pub edges: Vec<f64>,
    /// Weighted counts; they sum to the number of particles.
    pub counts: Vec<f64>,
    /// Density heights integrating to one.
    pub heights: Vec<f64>,
}

/// Weighted histogram of each ρ component on `[0, 1]`; the value 1.0 falls
/// in the last bin.
pub fn rho_histograms(cloud: &ParticleCloud, bins: usize) -> Result<Vec<RhoHistogram>> {
    if bins < 2 {
        return Err(Error::InvalidParameter(format!("histograms need at least 2 bins, got {bins}")));
    }
    let n = cloud.len() as f64;
    let dim = cloud.particles[0].rho.dim();
    let edges: Vec<f64> = (0..=bins).map(|i| i as f64 / bins as f64).collect();
    Ok((0..dim)
        .map(|j| {
            let mut counts = vec![0.0; bins];
            for (p, w) in cloud.particles.iter().zip(&cloud.weights) {
                let bin = ((p.rho.values[j] * bins as f64) as usize).min(bins - 1);
                counts[bin] += w * n;
            }
            let heights = counts.iter().map(|c| c / n * bins as f64).collect();
            RhoHistogram { edges: edges.clone(), counts, heights }
        })
        .collect())
}

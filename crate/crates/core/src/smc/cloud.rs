use rand::Rng;

use crate::error::{Error, Result};
use crate::prior::CorrelationParam;

#[derive(Clone, Debug, PartialEq)]
pub struct Particle {
    pub rho: CorrelationParam,
    /// Cached `log p(Y | ρ)`.
    pub log_lik: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleCloud {
    pub particles: Vec<Particle>,
    pub weights: Vec<f64>,
    /// Current temperature.
    pub alpha: f64,
    pub generation: usize,
}

impl ParticleCloud {
    /// Equally weighted cloud at temperature `alpha`.
    pub fn uniform(particles: Vec<Particle>, alpha: f64) -> Result<Self> {
        if particles.len() < 2 {
            return Err(Error::InvalidParameter(format!("cloud needs at least 2 particles, got {}", particles.len())));
        }
        let n = particles.len();
        Ok(Self { particles, weights: vec![1.0 / n as f64; n], alpha, generation: 0 })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn ess(&self) -> f64 {
        ess(&self.weights)
    }
}

/// Effective sample size `1 / Σ w²` of normalised weights.
pub fn ess(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Normalises `exp(log_w)` with the log-sum-exp shift. `None` when no weight
/// survives.
fn normalise_log_weights(log_w: &[f64]) -> Option<Vec<f64>> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let mut w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return None;
    }
    w.iter_mut().for_each(|x| *x /= total);
    Some(w)
}

fn incremental_log_weights(cloud: &ParticleCloud, delta: f64) -> Vec<f64> {
    cloud
        .weights
        .iter()
        .zip(&cloud.particles)
        .map(|(w, p)| if delta == 0.0 { w.ln() } else { w.ln() + delta * p.log_lik })
        .collect()
}

fn ess_at(cloud: &ParticleCloud, alpha: f64) -> f64 {
    normalise_log_weights(&incremental_log_weights(cloud, alpha - cloud.alpha)).map_or(0.0, |w| ess(&w))
}

/// Largest `α′ ∈ (α, 1]` whose reweighted cloud keeps `ESS ≥ τ·N_p`, by bisection.
pub fn next_temperature(cloud: &ParticleCloud, ess_fraction: f64) -> f64 {
    let target = ess_fraction * cloud.len() as f64;
    if ess_at(cloud, 1.0) >= target {
        return 1.0;
    }
    let (mut lo, mut hi) = (cloud.alpha, 1.0);
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        if ess_at(cloud, mid) >= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo > cloud.alpha {
        lo
    } else {
        hi
    }
}

/// `w_i ∝ w_i·exp((α′ − α)·log_lik_i)`, then moves the cloud to `α′`.
pub fn reweight(cloud: &mut ParticleCloud, alpha: f64) -> Result<()> {
    if alpha == cloud.alpha {
        return Ok(());
    }
    let weights = normalise_log_weights(&incremental_log_weights(cloud, alpha - cloud.alpha)).ok_or(Error::DegenerateWeights)?;
    cloud.weights = weights;
    cloud.alpha = alpha;
    Ok(())
}

/// Offspring counts of systematic resampling with offset `u ∈ [0, 1)`.
pub fn systematic_counts(weights: &[f64], u: f64) -> Vec<usize> {
    let n = weights.len();
    let mut counts = vec![0; n];
    let mut cumulative = 0.0;
    let mut next = 0;
    for (i, w) in weights.iter().enumerate() {
        cumulative += w * n as f64;
        // the last particle absorbs rounding in the cumulative sum
        let edge = if i + 1 == n { f64::INFINITY } else { cumulative };
        while next < n && (next as f64 + u) < edge {
            counts[i] += 1;
            next += 1;
        }
    }
    counts
}

/// Systematic resampling with a single uniform draw; weights reset to `1/N_p`.
pub fn resample_systematic<R: Rng + ?Sized>(cloud: &mut ParticleCloud, rng: &mut R) {
    let counts = systematic_counts(&cloud.weights, rng.random::<f64>());
    let mut particles = Vec::with_capacity(cloud.len());
    for (p, &c) in cloud.particles.iter().zip(&counts) {
        particles.extend(std::iter::repeat_n(p, c).cloned());
    }
    let n = particles.len();
    cloud.particles = particles;
    cloud.weights = vec![1.0 / n as f64; n];
}

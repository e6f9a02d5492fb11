use rand::Rng;

use super::cloud::Particle;
use super::prior::RhoPrior;
use super::RhoLikelihood;
use crate::gaussian::standard_normal_vector;
use crate::prior::CorrelationParam;

pub const RHO_CLAMP: f64 = 1e-9;

fn clamp_rho(x: f64) -> f64 {
    x.clamp(RHO_CLAMP, 1.0 - RHO_CLAMP)
}

pub fn logit(x: f64) -> f64 {
    let x = clamp_rho(x);
    (x / (1.0 - x)).ln()
}

pub fn logistic(u: f64) -> f64 {
    clamp_rho(1.0 / (1.0 + (-u).exp()))
}

/// Log density of the tempered target `p(Y|ρ)^α·p(ρ)` expressed on the logit
/// scale, i.e. including the Jacobian `Π ρ_j(1 − ρ_j)`.
pub fn log_target(rho: &CorrelationParam, log_lik: f64, alpha: f64, prior: &RhoPrior) -> f64 {
    let jacobian: f64 = rho.values.iter().map(|&x| {
        let x = clamp_rho(x);
        (x * (1.0 - x)).ln()
    }).sum();
    let tempered = if alpha == 0.0 { 0.0 } else { alpha * log_lik };
    tempered + prior.ln_pdf(rho) + jacobian
}

/// Metropolis-Hastings acceptance probability of moving `from → to`.
pub fn acceptance_probability(from: &Particle, to: &Particle, alpha: f64, prior: &RhoPrior) -> f64 {
    let log_ratio = log_target(&to.rho, to.log_lik, alpha, prior) - log_target(&from.rho, from.log_lik, alpha, prior);
    if log_ratio >= 0.0 {
        1.0
    } else {
        log_ratio.exp()
    }
}

/// Gaussian random-walk proposal on the logit scale. Components with a zero
/// increment are kept bit for bit.
pub fn propose<R: Rng + ?Sized>(rho: &CorrelationParam, step: f64, rng: &mut R) -> CorrelationParam {
    let z = standard_normal_vector(rho.dim(), rng);
    let values = rho
        .values
        .iter()
        .zip(z.iter())
        .map(|(&x, &e)| {
            let delta = step * e;
            if delta == 0.0 {
                x
            } else {
                logistic(logit(x) + delta)
            }
        })
        .collect();
    CorrelationParam { case: rho.case, values }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MoveStats {
    pub proposed: usize,
    pub accepted: usize,
    /// Proposals whose likelihood evaluation failed (rejected).
    pub failed: usize,
    pub evaluations: usize,
}

impl std::ops::AddAssign for MoveStats {
    fn add_assign(&mut self, o: Self) {
        self.proposed += o.proposed;
        self.accepted += o.accepted;
        self.failed += o.failed;
        self.evaluations += o.evaluations;
    }
}

/// `steps` MH moves of one particle leaving `p(Y|ρ)^α·p(ρ)` invariant.
pub fn mh_chain<L, R>(
    particle: &Particle,
    alpha: f64,
    step: f64,
    steps: usize,
    prior: &RhoPrior,
    likelihood: &L,
    rng: &mut R,
) -> (Particle, MoveStats)
where
    L: RhoLikelihood + ?Sized,
    R: Rng + ?Sized,
{
    let mut current = particle.clone();
    let mut stats = MoveStats::default();
    for _ in 0..steps {
        stats.proposed += 1;
        let rho = propose(&current.rho, step, rng);
        let u: f64 = rng.random();
        let candidate = if rho == current.rho {
            Particle { rho, log_lik: current.log_lik }
        } else {
            stats.evaluations += 1;
            match likelihood.log_likelihood(&rho) {
                Ok(log_lik) => Particle { rho, log_lik },
                Err(_) => {
                    stats.failed += 1;
                    continue;
                }
            }
        };
        if u < acceptance_probability(&current, &candidate, alpha, prior) {
            current = candidate;
            stats.accepted += 1;
        }
    }
    (current, stats)
}

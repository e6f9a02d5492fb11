//! Tempered sequential Monte Carlo over ρ with the states integrated out.
//!
//! The cloud moves through `η_n ∝ p(Y|ρ)^{α_n}·p(ρ)` from the prior
//! (`α = 0`) to the posterior (`α = 1`): adaptive temperature choice,
//! reweighting, systematic resampling and random-walk Metropolis moves on
//! the logit scale.

mod cloud;
mod mutation;
mod prior;
mod sampler;

pub use cloud::{ess, next_temperature, resample_systematic, reweight, systematic_counts, Particle, ParticleCloud};
pub use mutation::{acceptance_probability, log_target, logistic, logit, mh_chain, propose, MoveStats, RHO_CLAMP};
pub use prior::{ComponentPrior, RhoPrior};
pub use sampler::{init_cloud, mh_mutate, run_smc, run_smc_observed, GenerationDiagnostics, SmcConfig, SmcRun};

use crate::error::Result;
use crate::kalman::{kalman_filter, WhitenedModel};
use crate::prior::{transition_models, CorrelationParam};
use crate::scenario::Scenario;

/// `ρ ↦ log p(Y | ρ)`.
pub trait RhoLikelihood: Sync {
    fn log_likelihood(&self, rho: &CorrelationParam) -> Result<f64>;
}

impl RhoLikelihood for WhitenedModel {
    fn log_likelihood(&self, rho: &CorrelationParam) -> Result<f64> {
        WhitenedModel::log_likelihood(self, rho)
    }
}

/// Likelihood through the generic Joseph-form filter; slower than
/// [`WhitenedModel`] and used as its reference.
pub struct KalmanLikelihood<'a>(pub &'a Scenario);

impl RhoLikelihood for KalmanLikelihood<'_> {
    fn log_likelihood(&self, rho: &CorrelationParam) -> Result<f64> {
        let s = self.0;
        let transitions = transition_models(rho, &s.layout, &s.priors)?;
        Ok(kalman_filter(&s.priors, &transitions, &s.observation_models, &s.observations)?.log_likelihood)
    }
}

/// Any closure can serve as a likelihood.
pub struct FnLikelihood<F>(pub F);

impl<F> RhoLikelihood for FnLikelihood<F>
where
    F: Fn(&CorrelationParam) -> Result<f64> + Sync,
{
    fn log_likelihood(&self, rho: &CorrelationParam) -> Result<f64> {
        (self.0)(rho)
    }
}

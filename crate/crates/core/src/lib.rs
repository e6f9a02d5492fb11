//! Rao-Blackwellised tempered sequential Monte Carlo for recovering
//! per-area, per-frequency material parameters from a conditionally
//! linear-Gaussian state-space model.
//!
//! Given the frequential-correlation hyperparameter ρ the model is linear
//! Gaussian, so the states are integrated out exactly by Kalman recursions
//! ([`kalman`]) and only ρ is sampled, by a tempered particle sampler
//! ([`smc`]). Posterior summaries of the states are then mixtures of Kalman
//! smoother outputs over the final particle cloud ([`estimator`]).

pub mod dense;
pub mod error;
pub mod estimator;
pub mod fixtures;
pub mod gaussian;
pub mod kalman;
pub mod metamodel;
pub mod par;
pub mod prior;
pub mod rng;
pub mod scenario;
pub mod smc;

pub use error::{Error, Result};
pub use scenario::Scenario;

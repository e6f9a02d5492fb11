//! Exact inference conditional on ρ: Kalman filtering with the marginal
//! likelihood, Rauch–Tung–Striebel smoothing and forward-filter
//! backward-sampling.

mod filter;
mod smoother;
mod whitened;

pub use filter::{kalman_filter, FilterOutput, GaussianBelief};
pub use smoother::{backward_sample, rts_smoother, BackwardSampler};
pub use whitened::WhitenedModel;

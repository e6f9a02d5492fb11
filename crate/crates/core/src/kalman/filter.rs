use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussian::{log_density_from_factor, symmetrize};
use crate::metamodel::LinearObservationModel;
use crate::prior::{MarginalPrior, TransitionModel};

/// Gaussian belief about `X_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub k: usize,
}

#[derive(Clone, Debug)]
pub struct FilterOutput {
    /// `p(X_k | Y_1..Y_{k-1})`; the first entry is the prior at frequency 0.
    pub predicted: Vec<GaussianBelief>,
    /// `p(X_k | Y_1..Y_k)`.
    pub filtered: Vec<GaussianBelief>,
    pub log_likelihood: f64,
}

fn check_inputs(
    priors: &[MarginalPrior],
    transitions: &[TransitionModel],
    models: &[LinearObservationModel],
    observations: &[DVector<f64>],
) -> Result<()> {
    let k = models.len();
    if k == 0 || priors.is_empty() {
        return Err(Error::InvalidParameter("filter needs at least one frequency".into()));
    }
    if observations.len() != k || transitions.len() + 1 != k {
        return Err(Error::Dimension(format!(
            "{k} observation models, {} observations, {} transitions",
            observations.len(),
            transitions.len()
        )));
    }
    let n = priors[0].dim();
    for (f, (model, y)) in models.iter().zip(observations).enumerate() {
        if model.state_dim() != n || y.len() != model.obs_dim() {
            return Err(Error::Dimension(format!("frequency {f}: inconsistent observation model")));
        }
    }
    if transitions.iter().any(|t| t.m.nrows() != n || t.m.ncols() != n || t.b.len() != n || t.q.nrows() != n) {
        return Err(Error::Dimension("transition dimensions disagree with the prior".into()));
    }
    Ok(())
}

/// Affine Kalman filter started from the first prior.
///
/// The log-likelihood is `Σ_k log N(ν_k; 0, S_k)` with innovation
/// `ν_k = Y_k − A_k·x̂_k − Y0_k` and `S_k = A_k·Σ_k·A_kᵀ + R_k`. Covariance
/// updates use the Joseph form and are re-symmetrised after every step.
pub fn kalman_filter(
    priors: &[MarginalPrior],
    transitions: &[TransitionModel],
    models: &[LinearObservationModel],
    observations: &[DVector<f64>],
) -> Result<FilterOutput> {
    check_inputs(priors, transitions, models, observations)?;
    let n = priors[0].dim();
    let identity = DMatrix::<f64>::identity(n, n);
    let mut predicted = Vec::with_capacity(models.len());
    let mut filtered: Vec<GaussianBelief> = Vec::with_capacity(models.len());
    let mut log_likelihood = 0.0;

    for (k, (model, y)) in models.iter().zip(observations).enumerate() {
        let prior = if k == 0 {
            GaussianBelief { mean: priors[0].mean.clone(), cov: priors[0].cov.matrix().clone(), k }
        } else {
            let t = &transitions[k - 1];
            let prev = &filtered[k - 1];
            let mut cov = &t.m * &prev.cov * t.m.transpose() + &t.q;
            symmetrize(&mut cov);
            GaussianBelief { mean: &t.m * &prev.mean + &t.b, cov, k }
        };

        let a_sigma = &model.a * &prior.cov;
        let mut s = &a_sigma * model.a.transpose() + &model.r;
        symmetrize(&mut s);
        let chol = s.cholesky().ok_or(Error::InnovationNotPositiveDefinite(k))?;
        let innovation = y - &model.a * &prior.mean - &model.y0;
        log_likelihood += log_density_from_factor(&innovation, &chol.l());

        // K = Σ Aᵀ S⁻¹
        let gain = chol.solve(&a_sigma).transpose();
        let mean = &prior.mean + &gain * &innovation;
        let i_ka = &identity - &gain * &model.a;
        let mut cov = &i_ka * &prior.cov * i_ka.transpose() + &gain * &model.r * gain.transpose();
        symmetrize(&mut cov);

        predicted.push(prior);
        filtered.push(GaussianBelief { mean, cov, k });
    }

    if !log_likelihood.is_finite() {
        return Err(Error::NotPositiveDefinite(format!("non-finite log-likelihood {log_likelihood}")));
    }
    Ok(FilterOutput { predicted, filtered, log_likelihood })
}

//! Dense joint-Gaussian reference computations for small scenarios.
//!
//! Given ρ, the concatenated state `X = (X_1, …, X_K)` is Gaussian with
//! block covariance `Cov(X_i, X_j) = H_i·D^|i−j|·H_jᵀ`, and `Y` follows
//! through the linear observation model. Materialising these matrices gives
//! exact answers that the recursive filters are checked against.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussian::{symmetrize, GaussianDist, SpdMatrix};
use crate::prior::{expand_rho, BlockLayout, CorrelationParam, MarginalPrior};
use crate::scenario::Scenario;

/// Default cap on `4NK + 4MK` for dense computations.
pub const DEFAULT_DENSE_CAP: usize = 2000;

fn check_cap(scenario: &Scenario, cap: usize) -> Result<()> {
    let dim = scenario.state_dim() * scenario.frequencies() + scenario.obs_dims().sum::<usize>();
    if dim > cap {
        return Err(Error::DenseCapExceeded { dim, cap });
    }
    Ok(())
}

/// Mean and covariance of the concatenated state `(X_1, …, X_K)`.
pub fn dense_joint_state(
    layout: &BlockLayout,
    priors: &[MarginalPrior],
    rho: &CorrelationParam,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let d = expand_rho(rho, layout)?;
    let n = d.len();
    let k = priors.len();
    let mut mean = DVector::zeros(n * k);
    let mut cov = DMatrix::zeros(n * k, n * k);
    for i in 0..k {
        mean.rows_mut(i * n, n).copy_from(&priors[i].mean);
        for j in 0..k {
            let lag = i.abs_diff(j) as i32;
            let mut left = priors[i].sqrt.matrix().clone();
            for c in 0..n {
                left.column_mut(c).scale_mut(d[c].powi(lag));
            }
            let block = left * priors[j].sqrt.matrix().transpose();
            cov.view_mut((i * n, j * n), (n, n)).copy_from(&block);
        }
    }
    symmetrize(&mut cov);
    Ok((mean, cov))
}

/// Joint moments of `(X, Y)`: state mean/covariance, observation
/// mean/covariance and the state–observation cross-covariance.
struct JointMoments {
    x_mean: DVector<f64>,
    x_cov: DMatrix<f64>,
    y_mean: DVector<f64>,
    y_cov: DMatrix<f64>,
    xy_cov: DMatrix<f64>,
}

fn joint_moments(scenario: &Scenario, rho: &CorrelationParam, cap: usize) -> Result<JointMoments> {
    check_cap(scenario, cap)?;
    let (x_mean, x_cov) = dense_joint_state(&scenario.layout, &scenario.priors, rho)?;
    let n = scenario.state_dim();
    let k = scenario.frequencies();
    let offsets: Vec<usize> = scenario
        .obs_dims()
        .scan(0, |acc, m| {
            let start = *acc;
            *acc += m;
            Some(start)
        })
        .collect();
    let total: usize = scenario.obs_dims().sum();

    // block-diagonal observation matrix
    let mut a = DMatrix::zeros(total, n * k);
    let mut y_mean = DVector::zeros(total);
    let mut noise = DMatrix::zeros(total, total);
    for (f, model) in scenario.observation_models.iter().enumerate() {
        let m = model.obs_dim();
        a.view_mut((offsets[f], f * n), (m, n)).copy_from(&model.a);
        noise.view_mut((offsets[f], offsets[f]), (m, m)).copy_from(&model.r);
        y_mean.rows_mut(offsets[f], m).copy_from(&(&model.a * &scenario.priors[f].mean + &model.y0));
    }
    let xy_cov = &x_cov * a.transpose();
    let mut y_cov = &a * &xy_cov + noise;
    symmetrize(&mut y_cov);
    Ok(JointMoments { x_mean, x_cov, y_mean, y_cov, xy_cov })
}

/// Exact Gaussian law of the concatenated observation `(Y_1, …, Y_K)`.
pub fn dense_joint_y_distribution(scenario: &Scenario, rho: &CorrelationParam, cap: usize) -> Result<GaussianDist> {
    let jm = joint_moments(scenario, rho, cap)?;
    GaussianDist::new(jm.y_mean, SpdMatrix::new(jm.y_cov)?)
}

/// Exact `log p(Y | ρ)` from the dense joint law.
pub fn dense_log_likelihood(scenario: &Scenario, rho: &CorrelationParam, cap: usize) -> Result<f64> {
    let dist = dense_joint_y_distribution(scenario, rho, cap)?;
    let y = DVector::from_iterator(
        scenario.obs_dims().sum(),
        scenario.observations.iter().flat_map(|v| v.iter().copied()),
    );
    crate::gaussian::log_mvn_density(&y, &dist)
}

/// Exact conditional moments `E(X_k | ρ, Y)` and `Cov(X_k | ρ, Y)` for every
/// frequency, by Gaussian conditioning of the dense joint law.
pub fn dense_conditional_states(
    scenario: &Scenario,
    rho: &CorrelationParam,
    cap: usize,
) -> Result<Vec<(DVector<f64>, DMatrix<f64>)>> {
    let jm = joint_moments(scenario, rho, cap)?;
    let y = DVector::from_iterator(jm.y_mean.len(), scenario.observations.iter().flat_map(|v| v.iter().copied()));
    let chol = Cholesky::new(jm.y_cov.clone())
        .ok_or_else(|| Error::NotPositiveDefinite("dense observation covariance".into()))?;
    let gain_t = chol.solve(&jm.xy_cov.transpose());
    let mean = &jm.x_mean + gain_t.transpose() * (y - &jm.y_mean);
    let mut cov = &jm.x_cov - &jm.xy_cov * gain_t;
    symmetrize(&mut cov);
    let n = scenario.state_dim();
    Ok((0..scenario.frequencies())
        .map(|k| (mean.rows(k * n, n).into_owned(), cov.view((k * n, k * n), (n, n)).into_owned()))
        .collect())
}

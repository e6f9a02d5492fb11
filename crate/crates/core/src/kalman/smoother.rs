use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

use super::filter::{FilterOutput, GaussianBelief};
use crate::error::{Error, Result};
use crate::gaussian::{standard_normal_vector, symmetrize, SpdSolver};
use crate::prior::TransitionModel;

/// Backward gain `J_k = Σ_k·M_kᵀ·(Σ⁻_{k+1})⁻¹`.
fn backward_gain(out: &FilterOutput, transitions: &[TransitionModel], k: usize) -> Result<DMatrix<f64>> {
    let solver = SpdSolver::new(&out.predicted[k + 1].cov).ok_or(Error::SingularPredictedCovariance(k + 1))?;
    let m_sigma = &transitions[k].m * &out.filtered[k].cov;
    Ok(solver.solve(&m_sigma).transpose())
}

fn check_lengths(out: &FilterOutput, transitions: &[TransitionModel]) -> Result<()> {
    if out.filtered.len() != transitions.len() + 1 || out.predicted.len() != out.filtered.len() {
        return Err(Error::Dimension(format!(
            "{} filtered beliefs with {} transitions",
            out.filtered.len(),
            transitions.len()
        )));
    }
    Ok(())
}

/// Rauch–Tung–Striebel smoother: the marginals `p(X_k | ρ, Y)`.
pub fn rts_smoother(out: &FilterOutput, transitions: &[TransitionModel]) -> Result<Vec<GaussianBelief>> {
    check_lengths(out, transitions)?;
    let k_count = out.filtered.len();
    let mut smoothed = out.filtered.clone();
    for k in (0..k_count - 1).rev() {
        let gain = backward_gain(out, transitions, k)?;
        let next = &smoothed[k + 1];
        let pred = &out.predicted[k + 1];
        let mean = &out.filtered[k].mean + &gain * (&next.mean - &pred.mean);
        let mut cov = &out.filtered[k].cov + &gain * (&next.cov - &pred.cov) * gain.transpose();
        symmetrize(&mut cov);
        smoothed[k] = GaussianBelief { mean, cov, k };
    }
    Ok(smoothed)
}

/// Factor of a PSD matrix in which eigenvalues below `1e-12·scale` count as
/// exact zeros, so deterministic directions stay deterministic.
fn floored_factor(m: &DMatrix<f64>, scale: f64) -> DMatrix<f64> {
    let mut sym = m.clone();
    symmetrize(&mut sym);
    let eig = SymmetricEigen::new(sym);
    let floor = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let mut factor = eig.eigenvectors;
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let s = if lambda > floor { lambda.sqrt() } else { 0.0 };
        factor.column_mut(j).scale_mut(s);
    }
    factor
}

struct BackwardStep {
    gain: DMatrix<f64>,
    /// `μ_k − J_k·μ⁻_{k+1}`
    offset: DVector<f64>,
    factor: DMatrix<f64>,
}

/// Precomputed forward-filter backward-sampling plan for one ρ.
///
/// `X_K` is drawn from the last filtered belief, then each
/// `X_k | X_{k+1}, Y_1..Y_k` in turn, giving exact draws of `p(X | ρ, Y)`.
pub struct BackwardSampler {
    last_mean: DVector<f64>,
    last_factor: DMatrix<f64>,
    steps: Vec<BackwardStep>,
}

impl BackwardSampler {
    pub fn new(out: &FilterOutput, transitions: &[TransitionModel]) -> Result<Self> {
        check_lengths(out, transitions)?;
        let k_count = out.filtered.len();
        let last = &out.filtered[k_count - 1];
        let last_factor = floored_factor(&last.cov, last.cov.trace());
        let steps = (0..k_count - 1)
            .map(|k| {
                let gain = backward_gain(out, transitions, k)?;
                let filt = &out.filtered[k];
                let pred = &out.predicted[k + 1];
                let offset = &filt.mean - &gain * &pred.mean;
                let cond = &filt.cov - &gain * &pred.cov * gain.transpose();
                Ok(BackwardStep { factor: floored_factor(&cond, filt.cov.trace()), gain, offset })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { last_mean: last.mean.clone(), last_factor, steps })
    }

    pub fn frequencies(&self) -> usize {
        self.steps.len() + 1
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<DVector<f64>> {
        let n = self.last_mean.len();
        let mut states = vec![DVector::zeros(n); self.frequencies()];
        let last = self.steps.len();
        states[last] = &self.last_mean + &self.last_factor * standard_normal_vector(n, rng);
        for (k, step) in self.steps.iter().enumerate().rev() {
            let noise = &step.factor * standard_normal_vector(n, rng);
            states[k] = &step.offset + &step.gain * &states[k + 1] + noise;
        }
        states
    }
}

/// One joint posterior trajectory draw given ρ.
pub fn backward_sample<R: Rng + ?Sized>(
    out: &FilterOutput,
    transitions: &[TransitionModel],
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    Ok(BackwardSampler::new(out, transitions)?.sample(rng))
}

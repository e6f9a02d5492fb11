//! Small randomised scenarios for tests, oracles and benchmarks.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::Result;
use crate::gaussian::{standard_normal_vector, symmetrize};
use crate::metamodel::{observe, LinearObservationModel};
use crate::prior::{build_spatial_covariance, sample_prior_trajectory, BlockLayout, CorrelationParam, PriorSpec, RhoCase};
use crate::rng::substream;
use crate::scenario::Scenario;

/// Shape of a random scenario.
#[derive(Clone, Debug)]
pub struct RandomScenario {
    pub areas_per_block: Vec<usize>,
    pub frequencies: usize,
    pub angles: usize,
    /// Standard deviation of the (diagonal part of the) observation noise.
    pub noise: f64,
}

impl RandomScenario {
    pub fn new(areas_per_block: Vec<usize>, frequencies: usize, angles: usize) -> Self {
        Self { areas_per_block, frequencies, angles, noise: 0.1 }
    }

    /// Random priors drifting over frequency, random `(A_k, Y0_k, R_k)` and
    /// measurements simulated from the model under `truth`.
    pub fn build(&self, truth: &CorrelationParam, seed: u64) -> Result<Scenario> {
        let layout = BlockLayout::new(self.areas_per_block.clone())?;
        let mut rng = substream(seed, &[0xf1]);
        let nb = layout.n_blocks();
        let base: Vec<[f64; 4]> = (0..nb)
            .map(|_| [2.0 + 3.0 * rng.random::<f64>(), 0.5 * rng.random::<f64>(), 1.0 + rng.random::<f64>(), 0.3 * rng.random::<f64>()])
            .collect();
        let drift: Vec<[f64; 4]> = (0..nb).map(|_| std::array::from_fn(|_| 0.1 * (rng.random::<f64>() - 0.5))).collect();
        let sigma_abs = 0.05 + 0.1 * rng.random::<f64>();
        let sigma_rel = 0.1 * rng.random::<f64>();
        let rho_s = 0.9 * rng.random::<f64>();
        let priors = (0..self.frequencies)
            .map(|k| {
                let reference = base
                    .iter()
                    .zip(&drift)
                    .map(|(b, d)| std::array::from_fn(|p| b[p] + d[p] * k as f64))
                    .collect();
                build_spatial_covariance(&layout, &PriorSpec { reference, sigma_abs, sigma_rel, spatial_correlation: rho_s })
            })
            .collect::<Result<Vec<_>>>()?;

        let n = layout.state_dim();
        let m = 4 * self.angles;
        let models = (0..self.frequencies)
            .map(|_| {
                let a = DMatrix::from_fn(m, n, |_, _| standard_normal_vector(1, &mut rng)[0]);
                let y0 = standard_normal_vector(m, &mut rng);
                let f = DMatrix::from_fn(m, 2, |_, _| 0.5 * self.noise * standard_normal_vector(1, &mut rng)[0]);
                let mut r = DMatrix::identity(m, m) * self.noise.powi(2) + &f * f.transpose();
                symmetrize(&mut r);
                LinearObservationModel::new(a, y0, r)
            })
            .collect::<Result<Vec<_>>>()?;
        let states = sample_prior_trajectory(truth, &layout, &priors, &mut rng)?;
        let observations: Vec<DVector<f64>> =
            models.iter().zip(&states).map(|(model, x)| observe(model, x, &mut rng)).collect();
        Scenario::new(layout, priors, models, observations)
    }
}

/// A uniformly drawn ρ of the given case.
pub fn random_rho<R: Rng + ?Sized>(case: RhoCase, layout: &BlockLayout, rng: &mut R) -> CorrelationParam {
    let values = (0..case.dim(layout)).map(|_| rng.random::<f64>()).collect();
    CorrelationParam::new(case, values).expect("uniform draws lie in [0,1]")
}

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussian::{log_density_from_factor, symmetrize};
use crate::prior::{expand_rho, BlockLayout, CorrelationParam};
use crate::scenario::Scenario;

/// Likelihood engine working in whitened coordinates `Z_k = H_k⁻¹·(X_k − m_k)`.
///
/// Because `D_ρ` commutes with every `H_k`, the AR process becomes
/// `Z_1 ~ N(0, I)`, `Z_{k+1} = D_ρ·Z_k + √(I − D_ρ²)·V_k`: a diagonal
/// transition. The observation model turns into `Y_k = (A_k·H_k)·Z_k + c_k + w`
/// with `c_k = A_k·m_k + Y0_k`. Everything ρ-independent is computed once, so a
/// likelihood evaluation costs `O(K·n²·m)` with no `n³` products.
#[derive(Clone, Debug)]
pub struct WhitenedModel {
    layout: BlockLayout,
    /// `A_k·H_k`
    design: Vec<DMatrix<f64>>,
    noise: Vec<DMatrix<f64>>,
    /// `Y_k − A_k·m_k − Y0_k`
    centred: Vec<DVector<f64>>,
}

impl WhitenedModel {
    pub fn new(scenario: &Scenario) -> Self {
        let (design, (noise, centred)) = scenario
            .observation_models
            .iter()
            .zip(&scenario.priors)
            .zip(&scenario.observations)
            .map(|((model, prior), y)| {
                let design = &model.a * prior.sqrt.matrix();
                let centred = y - &model.a * &prior.mean - &model.y0;
                (design, (model.r.clone(), centred))
            })
            .unzip();
        Self { layout: scenario.layout.clone(), design, noise, centred }
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn frequencies(&self) -> usize {
        self.design.len()
    }

    pub fn log_likelihood(&self, rho: &CorrelationParam) -> Result<f64> {
        self.log_likelihood_diagonal(&expand_rho(rho, &self.layout)?)
    }

    /// `log p(Y | ρ)` for the diagonal `d` of `D_ρ`.
    pub fn log_likelihood_diagonal(&self, d: &DVector<f64>) -> Result<f64> {
        let n = self.layout.state_dim();
        if d.len() != n {
            return Err(Error::Dimension(format!("diagonal has length {}, state is {n}", d.len())));
        }
        let mut z = DVector::zeros(n);
        let mut sigma = DMatrix::identity(n, n);
        let mut total = 0.0;
        for k in 0..self.frequencies() {
            if k > 0 {
                z.component_mul_assign(d);
                for j in 0..n {
                    for i in 0..n {
                        sigma[(i, j)] *= d[i] * d[j];
                    }
                    sigma[(j, j)] += 1.0 - d[j] * d[j];
                }
            }
            let b = &self.design[k];
            // B·Σ, whose transpose is Σ·Bᵀ since Σ is symmetric
            let b_sigma = b * &sigma;
            let mut s = &self.noise[k] + &b_sigma * b.transpose();
            symmetrize(&mut s);
            let chol = s.cholesky().ok_or(Error::InnovationNotPositiveDefinite(k))?;
            let lower = chol.l();
            let innovation = &self.centred[k] - b * &z;
            total += log_density_from_factor(&innovation, &lower);

            // W = L⁻¹·B·Σ so that K·S·Kᵀ = Wᵀ·W and K·ν = Wᵀ·L⁻¹·ν
            let w = lower
                .solve_lower_triangular(&b_sigma)
                .expect("Cholesky factor has a positive diagonal");
            let e = lower
                .solve_lower_triangular(&innovation)
                .expect("Cholesky factor has a positive diagonal");
            z.gemv_tr(1.0, &w, &e, 1.0);
            sigma.gemm_tr(-1.0, &w, &w, 1.0);
            symmetrize(&mut sigma);
        }
        if !total.is_finite() {
            return Err(Error::NotPositiveDefinite(format!("non-finite log-likelihood {total}")));
        }
        Ok(total)
    }
}

//! Dense Gaussian linear algebra: SPD square roots, multivariate normal
//! sampling and log-densities.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Relative tolerance on `|a_ij - a_ji|` accepted as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Eigenvalues below this fraction of the largest one are treated as zero.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// Replaces `m` with `(m + mᵀ) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Largest `|a_ij - a_ji|` relative to the largest entry magnitude.
pub fn relative_asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax();
    if scale == 0.0 {
        return 0.0;
    }
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / scale
}

fn check_square(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!("expected a square matrix, got {}x{}", m.nrows(), m.ncols())));
    }
    Ok(())
}

/// A symmetric positive-definite matrix together with its Cholesky factor.
#[derive(Clone, Debug)]
pub struct SpdMatrix {
    matrix: DMatrix<f64>,
    lower: DMatrix<f64>,
}

impl SpdMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        check_square(&matrix)?;
        let asym = relative_asymmetry(&matrix);
        if asym > SYMMETRY_TOL {
            return Err(Error::NotSymmetric(asym));
        }
        let mut matrix = matrix;
        symmetrize(&mut matrix);
        let chol = Cholesky::new(matrix.clone())
            .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorization failed".into()))?;
        Ok(Self { lower: chol.l(), matrix })
    }

    pub fn identity(dim: usize) -> Self {
        Self { matrix: DMatrix::identity(dim, dim), lower: DMatrix::identity(dim, dim) }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Lower Cholesky factor `L` with `L·Lᵀ = self`.
    pub fn cholesky_lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.lower.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.matrix
    }
}

/// The symmetric positive-definite square root `H` of an SPD matrix `P`
/// (`H·Hᵀ = H² = P`), with its inverse.
#[derive(Clone, Debug)]
pub struct SqrtMatrix {
    root: DMatrix<f64>,
    inverse: DMatrix<f64>,
}

impl SqrtMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.root
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn dim(&self) -> usize {
        self.root.nrows()
    }

    /// Assembles a block-diagonal root from roots of the diagonal blocks.
    /// `blocks` lists `(offset, root)` pairs covering disjoint index ranges.
    pub fn block_diagonal(dim: usize, blocks: &[(usize, SqrtMatrix)]) -> Self {
        let mut root = DMatrix::zeros(dim, dim);
        let mut inverse = DMatrix::zeros(dim, dim);
        for (offset, b) in blocks {
            let n = b.dim();
            root.view_mut((*offset, *offset), (n, n)).copy_from(&b.root);
            inverse.view_mut((*offset, *offset), (n, n)).copy_from(&b.inverse);
        }
        Self { root, inverse }
    }
}

/// Unique symmetric positive-definite square root by symmetric
/// eigendecomposition, `H = U·diag(√λ)·Uᵀ`.
///
/// Eigenvalues at or below `EIGEN_FLOOR · λ_max` are rejected rather than
/// clamped.
pub fn spd_sqrt(p: &SpdMatrix) -> Result<SqrtMatrix> {
    spd_sqrt_of(p.matrix())
}

pub(crate) fn spd_sqrt_of(p: &DMatrix<f64>) -> Result<SqrtMatrix> {
    check_square(p)?;
    let asym = relative_asymmetry(p);
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    let eig = SymmetricEigen::new(p.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) || min <= EIGEN_FLOOR * max {
        return Err(Error::NotPositiveDefinite(format!("eigenvalues span [{min:e}, {max:e}]")));
    }
    let u = &eig.eigenvectors;
    let rebuild = |f: &dyn Fn(f64) -> f64| {
        let mut scaled = u.clone();
        for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
            scaled.column_mut(j).scale_mut(f(lambda));
        }
        let mut m = scaled * u.transpose();
        symmetrize(&mut m);
        m
    };
    Ok(SqrtMatrix { root: rebuild(&|l| l.sqrt()), inverse: rebuild(&|l| 1.0 / l.sqrt()) })
}

/// A factor `L` with `L·Lᵀ ≈ m` for a symmetric positive semi-definite `m`.
///
/// Cholesky is tried first; on failure the eigendecomposition is used with
/// negative eigenvalues (numerical noise) set to zero.
pub fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(chol) = Cholesky::new(m.clone()) {
        return chol.l();
    }
    let mut sym = m.clone();
    symmetrize(&mut sym);
    let eig = SymmetricEigen::new(sym);
    let mut factor = eig.eigenvectors;
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        factor.column_mut(j).scale_mut(lambda.max(0.0).sqrt());
    }
    factor
}

/// Solves against a symmetric positive-definite matrix, falling back to the
/// eigendecomposition when Cholesky fails on a numerically borderline input.
pub(crate) enum SpdSolver {
    Cholesky(Cholesky<f64, Dyn>),
    Eigen { vectors: DMatrix<f64>, inv_values: DVector<f64> },
}

impl SpdSolver {
    /// Returns `None` when the matrix is singular (eigenvalues under the floor).
    pub(crate) fn new(m: &DMatrix<f64>) -> Option<Self> {
        if let Some(chol) = Cholesky::new(m.clone()) {
            return Some(Self::Cholesky(chol));
        }
        let mut sym = m.clone();
        symmetrize(&mut sym);
        let eig = SymmetricEigen::new(sym);
        let max = eig.eigenvalues.max();
        if !(max > 0.0) || eig.eigenvalues.min() <= EIGEN_FLOOR * max {
            return None;
        }
        Some(Self::Eigen { inv_values: eig.eigenvalues.map(|l| 1.0 / l), vectors: eig.eigenvectors })
    }

    pub(crate) fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Self::Cholesky(c) => c.solve(b),
            Self::Eigen { vectors, inv_values } => {
                let mut t = vectors.transpose() * b;
                for (i, &s) in inv_values.iter().enumerate() {
                    t.row_mut(i).scale_mut(s);
                }
                vectors * t
            }
        }
    }
}

/// A multivariate normal law `N(mean, cov)`.
#[derive(Clone, Debug)]
pub struct GaussianDist {
    mean: DVector<f64>,
    cov: SpdMatrix,
}

impl GaussianDist {
    pub fn new(mean: DVector<f64>, cov: SpdMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::Dimension(format!("mean has length {}, covariance is {}", mean.len(), cov.dim())));
        }
        Ok(Self { mean, cov })
    }

    pub fn standard(dim: usize) -> Self {
        Self { mean: DVector::zeros(dim), cov: SpdMatrix::identity(dim) }
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &SpdMatrix {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// A vector of i.i.d. standard normal draws.
pub fn standard_normal_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| rng.sample(StandardNormal))
}

/// `n` independent draws from `dist`.
pub fn sample_mvn<R: Rng + ?Sized>(dist: &GaussianDist, n: usize, rng: &mut R) -> Vec<DVector<f64>> {
    let l = dist.cov.cholesky_lower();
    (0..n)
        .map(|_| {
            let z = standard_normal_vector(dist.dim(), rng);
            &dist.mean + l * z
        })
        .collect()
}

/// `log N(x; mean, cov)` through the Cholesky factor of `cov`.
pub fn log_mvn_density(x: &DVector<f64>, dist: &GaussianDist) -> Result<f64> {
    if x.len() != dist.dim() {
        return Err(Error::Dimension(format!("point has length {}, distribution is {}", x.len(), dist.dim())));
    }
    let diff = x - &dist.mean;
    Ok(log_density_from_factor(&diff, dist.cov.cholesky_lower()))
}

/// `log N(residual; 0, L·Lᵀ)` for a lower-triangular factor `L`.
pub(crate) fn log_density_from_factor(residual: &DVector<f64>, lower: &DMatrix<f64>) -> f64 {
    let d = residual.len() as f64;
    let whitened = lower
        .solve_lower_triangular(residual)
        .expect("Cholesky factor has a positive diagonal");
    let log_det = 2.0 * lower.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    -0.5 * (d * LN_2PI + log_det + whitened.norm_squared())
}

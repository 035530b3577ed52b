//! Small dense linear-algebra helpers and the Gaussian parameter types.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub const SYMMETRY_TOL: f64 = 1e-12;

/// Largest absolute difference between `m` and its transpose.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn ensure_square(m: &DMatrix<f64>, what: &str) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m.nrows())
}

pub fn ensure_symmetric(m: &DMatrix<f64>) -> Result<()> {
    let scale = m.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    let asym = asymmetry(m);
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn trace(m: &DMatrix<f64>) -> f64 {
    m.diagonal().sum()
}

pub fn matrix_power(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let mut out = DMatrix::identity(m.nrows(), m.ncols());
    for _ in 0..k {
        out = &out * m;
    }
    out
}

/// `x^T M y`.
pub fn bilinear(x: &DVector<f64>, m: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    x.dot(&(m * y))
}

/// Mean vector and symmetric positive-definite covariance with cached
/// Cholesky factor, inverse and log-determinant.
#[derive(Debug, Clone)]
pub struct GaussianParams {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    inv: DMatrix<f64>,
    log_det: f64,
}

impl GaussianParams {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = ensure_square(&cov, "covariance")?;
        if mean.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "mean has length {} but covariance is {d}x{d}",
                mean.len()
            )));
        }
        if d == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        if cov.iter().chain(mean.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite parameter".into()));
        }
        ensure_symmetric(&cov)?;
        let chol = Cholesky::new(cov.clone()).ok_or(Error::NotPositiveDefinite)?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let inv = symmetrize(&chol.inverse());
        Ok(GaussianParams {
            mean,
            cov,
            chol,
            inv,
            log_det,
        })
    }

    pub fn centered(cov: DMatrix<f64>) -> Result<Self> {
        let d = cov.nrows();
        Self::new(DVector::zeros(d), cov)
    }

    pub fn standard(d: usize) -> Self {
        Self::centered(DMatrix::identity(d, d)).expect("identity is SPD")
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn cov_inv(&self) -> &DMatrix<f64> {
        &self.inv
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `(x - μ)^T Σ^{-1} (x - μ)` via a triangular solve.
    pub fn mahalanobis_sq(&self, x: &[f64]) -> f64 {
        let diff = DVector::from_iterator(self.dim(), x.iter().zip(self.mean.iter()).map(|(a, b)| a - b));
        let y = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor has a positive diagonal");
        y.norm_squared()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let d = self.dim() as f64;
        -0.5 * (d * (2.0 * PI).ln() + self.log_det + self.mahalanobis_sq(x))
    }

    /// Density of N(μ, Σ) at `x`.
    pub fn density(&self, x: &[f64]) -> f64 {
        self.log_density(x).exp()
    }

    /// `Σ^{-1} x` (ignores the mean).
    pub fn solve(&self, x: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(x)
    }

    /// `Σ^{-1} M`.
    pub fn solve_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(m)
    }

    /// `Σ^{-1}, Σ^{-2}, ..., Σ^{-k}` by repeated Cholesky solves.
    pub fn inverse_powers(&self, k: usize) -> Vec<DMatrix<f64>> {
        let mut out: Vec<DMatrix<f64>> = Vec::with_capacity(k);
        let mut cur = DMatrix::identity(self.dim(), self.dim());
        for _ in 0..k {
            cur = symmetrize(&self.chol.solve(&cur));
            out.push(cur.clone());
        }
        out
    }
}

/// A symmetric invertible matrix Θ (possibly indefinite) with cached inverse,
/// used as the second argument of vector Hermite polynomials.
#[derive(Debug, Clone)]
pub struct SignedQuadraticParams {
    theta: DMatrix<f64>,
    inv: DMatrix<f64>,
}

impl SignedQuadraticParams {
    pub fn new(theta: DMatrix<f64>) -> Result<Self> {
        let d = ensure_square(&theta, "Θ")?;
        if d == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        ensure_symmetric(&theta)?;
        let inv = theta.clone().try_inverse().ok_or(Error::Singular)?;
        if inv.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular);
        }
        Ok(SignedQuadraticParams {
            theta,
            inv: symmetrize(&inv),
        })
    }

    pub fn from_gaussian(g: &GaussianParams) -> Self {
        SignedQuadraticParams {
            theta: g.cov().clone(),
            inv: g.cov_inv().clone(),
        }
    }

    /// `-Σ`, the argument that turns Hermite polynomials into raw moments.
    pub fn negated_covariance(g: &GaussianParams) -> Self {
        SignedQuadraticParams {
            theta: -g.cov().clone(),
            inv: -g.cov_inv().clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.theta.nrows()
    }

    pub fn theta(&self) -> &DMatrix<f64> {
        &self.theta
    }

    pub fn theta_inv(&self) -> &DMatrix<f64> {
        &self.inv
    }
}

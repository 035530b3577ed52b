//! Seeded standard-normal data.
//!
//! Uniforms come from `ChaCha8Rng::seed_from_u64(seed)` as `f64` in `[0, 1)`
//! (`rand`'s 53-bit conversion). Pairs `(u1, u2)` become
//! `sqrt(-2 ln(1 - u1)) * (cos(2π u2), sin(2π u2))`, and values fill the sample
//! row by row.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::GaussianParams;

/// Box–Muller standard normals from a seeded ChaCha8 stream.
#[derive(Debug, Clone)]
pub struct NormalStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(seed: u64) -> Self {
        NormalStream {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1: f64 = self.rng.random();
        let u2: f64 = self.rng.random();
        let rad = (-2.0 * (1.0 - u1).ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare = Some(rad * s);
        rad * c
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.next_normal();
        }
    }
}

/// `n × d` matrix of independent standard normals, filled row by row.
pub fn standard_normal_sample(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
    let mut s = NormalStream::new(seed);
    let mut rows = vec![0.0; n * d];
    s.fill(&mut rows);
    DMatrix::from_row_slice(n, d, &rows)
}

/// `n × d` draws from N(μ, Σ) as `μ + L z` with `Σ = L Lᵀ`.
pub fn gaussian_sample(g: &GaussianParams, n: usize, seed: u64) -> DMatrix<f64> {
    let d = g.dim();
    let l = g.cov().clone().cholesky().expect("validated SPD").l();
    let z = standard_normal_sample(n, d, seed);
    let mut out = &z * l.transpose();
    for mut row in out.row_iter_mut() {
        row += g.mean().transpose();
    }
    out
}

/// Same draws as [`gaussian_sample`], one row at a time, without storing the sample.
pub fn for_each_gaussian_draw(g: &GaussianParams, n: usize, seed: u64, mut f: impl FnMut(&[f64])) {
    let d = g.dim();
    let l = g.cov().clone().cholesky().expect("validated SPD").l();
    let mut s = NormalStream::new(seed);
    let mut z = DVector::zeros(d);
    let mut x = vec![0.0; d];
    for _ in 0..n {
        s.fill(z.as_mut_slice());
        let y = &l * &z;
        for k in 0..d {
            x[k] = g.mean()[k] + y[k];
        }
        f(&x);
    }
}

//! η functionals, Gaussian-kernel V-statistics and bandwidth-selection criteria.

use std::f64::consts::PI;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hermite::{expand_unique, gaussian_derivative_unique, HermiteUniqueVector, UniqueRecursion};
use crate::indexing::{unique_ordering, UniqueOrdering};
use crate::kron::contract_pairs;
use crate::limits::{binomial, factorial_f64, Limits};
use crate::linalg::{ensure_square, ensure_symmetric, GaussianParams};
use crate::quadform::{nu_joint, nu_single, CumulantForms, NuMethod, QuadFormParams};
use crate::symvec::KronVector;

/// `n × d` observations, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    data: DMatrix<f64>,
}

impl SampleMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::InvalidArgument("sample must have at least one row and column".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("sample contains non-finite values".into()));
        }
        Ok(SampleMatrix { data })
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.data.row(i).iter().copied().collect()
    }

    /// Unbiased sample covariance.
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        let n = self.n();
        if n < 2 {
            return Err(Error::InvalidArgument("covariance needs at least two observations".into()));
        }
        let mean = self.data.row_mean();
        let mut c = self.data.clone();
        for mut row in c.row_iter_mut() {
            row -= &mean;
        }
        Ok((c.transpose() * &c) / (n as f64 - 1.0))
    }

    fn row_major(&self) -> Vec<f64> {
        self.data.transpose().as_slice().to_vec()
    }
}

/// Symmetric positive-definite bandwidth matrix.
#[derive(Debug, Clone)]
pub struct BandwidthMatrix {
    g: GaussianParams,
}

impl BandwidthMatrix {
    pub fn new(h: DMatrix<f64>) -> Result<Self> {
        Ok(BandwidthMatrix {
            g: GaussianParams::centered(h)?,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        self.g.cov()
    }

    pub fn as_gaussian(&self) -> &GaussianParams {
        &self.g
    }

    pub fn dim(&self) -> usize {
        self.g.dim()
    }

    pub fn det(&self) -> f64 {
        self.g.log_det().exp()
    }
}

/// Tuning shared by the pairwise sums.
#[derive(Debug, Clone, Copy, Default)]
pub struct KdeOptions {
    pub limits: Limits,
    /// Spread rows over the rayon pool. Per-row partial sums are still combined
    /// in row order, so results do not depend on this flag.
    pub parallel: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EtaMethod {
    /// Contract the full `D^{⊗2r+2s} φ_Σ(x)` vector.
    Direct,
    /// `φ_Σ(x) ν_{r,s}(I, B; Σ^{-1}x, -Σ^{-1})`.
    NuBridge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VstatMethod {
    /// One full derivative vector per pair.
    Direct,
    /// Cumulant recursion on decoupled quadratic forms.
    Cumulant,
}

fn check_point(x: &[f64], d: usize) -> Result<()> {
    if x.len() != d {
        return Err(Error::DimensionMismatch(format!("point of length {} in dimension {d}", x.len())));
    }
    Ok(())
}

fn check_b(b: &DMatrix<f64>, d: usize) -> Result<()> {
    if ensure_square(b, "B")? != d {
        return Err(Error::DimensionMismatch(format!("B is {0}x{0} in dimension {d}", b.nrows())));
    }
    ensure_symmetric(b)
}

fn sign(r: usize) -> f64 {
    if r.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Evaluates `[(vecᵀI)^{⊗r} ⊗ (vecᵀB)^{⊗s}] D^{⊗2r+2s} φ_Σ(x)` by building the
/// full derivative vector; the recursion tables are built once and reused.
#[derive(Debug, Clone)]
struct DirectEta {
    order: usize,
    rec: UniqueRecursion,
    ord: UniqueOrdering,
    mats: Vec<DMatrix<f64>>,
}

impl DirectEta {
    fn new(b: &DMatrix<f64>, d: usize, r: usize, s: usize, limits: &Limits) -> Result<Self> {
        let order = 2 * r + 2 * s;
        limits.check_len(d, order)?;
        let mut mats = vec![DMatrix::identity(d, d); r];
        mats.extend(std::iter::repeat_n(b.clone(), s));
        Ok(DirectEta {
            order,
            rec: UniqueRecursion::new(d, order, limits)?,
            ord: unique_ordering(d, order, limits)?,
            mats,
        })
    }

    fn eval(&self, x: &[f64], g: &GaussianParams) -> Result<f64> {
        let z = g.solve(&DVector::from_column_slice(x));
        let u = self.rec.run(z.as_slice(), g.cov_inv(), self.order)?;
        let scale = sign(self.order) * g.density(x);
        let full: Vec<f64> = self
            .ord
            .expansion_zero_based()
            .iter()
            .map(|&k| u.values()[k as usize] * scale)
            .collect();
        let refs: Vec<&DMatrix<f64>> = self.mats.iter().collect();
        Ok(contract_pairs(&full, &refs)[0])
    }
}

/// `η_{r,s}(x; B, Σ)`; `Σ` must be centred.
pub fn eta(x: &[f64], b: &DMatrix<f64>, g: &GaussianParams, r: usize, s: usize, method: EtaMethod, limits: &Limits) -> Result<f64> {
    let d = g.dim();
    check_point(x, d)?;
    check_b(b, d)?;
    match method {
        EtaMethod::Direct => DirectEta::new(b, d, r, s, limits)?.eval(x, g),
        EtaMethod::NuBridge => {
            let mu = g.solve(&DVector::from_column_slice(x));
            let q = QuadFormParams::new(mu, -g.cov_inv())?;
            let nu = nu_joint(&DMatrix::identity(d, d), b, &q, r, s, NuMethod::CumulantRecursive, limits)?;
            Ok(g.density(x) * nu)
        }
    }
}

/// `η_r(x; Σ) = η_{r,0}(x; I, Σ)`.
pub fn eta_r(x: &[f64], g: &GaussianParams, r: usize, method: EtaMethod, limits: &Limits) -> Result<f64> {
    eta(x, &DMatrix::identity(g.dim(), g.dim()), g, r, 0, method, limits)
}

/// Quadratic forms `(X_i - X_j)ᵀ W_k (X_i - X_j)` through
/// `X_iᵀW_kX_i + X_jᵀW_kX_j - 2 X_iᵀW_kX_j`, with `X W_k` precomputed once.
/// Memory is `O(n d K)`; no `n² × d` array of differences is formed.
#[derive(Debug, Clone)]
pub struct DecoupledQuadratics {
    n: usize,
    d: usize,
    x: Vec<f64>,
    // per form: row-major X W_k and the diagonal X_iᵀ W_k X_i
    y: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
}

impl DecoupledQuadratics {
    pub fn new(data: &SampleMatrix, forms: &[DMatrix<f64>]) -> Self {
        let (n, d) = (data.n(), data.dim());
        let x = data.row_major();
        let mut y = Vec::with_capacity(forms.len());
        let mut q = Vec::with_capacity(forms.len());
        for w in forms {
            let yk = (data.data() * w).transpose().as_slice().to_vec();
            let qk = (0..n).map(|i| dot(&x[i * d..(i + 1) * d], &yk[i * d..(i + 1) * d])).collect();
            y.push(yk);
            q.push(qk);
        }
        DecoupledQuadratics { n, d, x, y, q }
    }

    pub fn forms(&self) -> usize {
        self.y.len()
    }

    /// Working memory in bytes.
    pub fn footprint_bytes(&self) -> usize {
        8 * (self.x.len() + self.y.iter().map(Vec::len).sum::<usize>() + self.q.iter().map(Vec::len).sum::<usize>())
    }

    /// Fills `out[k]` with the `k`-th quadratic form of `X_i - X_j`.
    #[inline]
    pub fn pair(&self, i: usize, j: usize, out: &mut [f64]) {
        let d = self.d;
        let xj = &self.x[j * d..(j + 1) * d];
        for (k, o) in out.iter_mut().enumerate() {
            let yi = &self.y[k][i * d..(i + 1) * d];
            *o = self.q[k][i] + self.q[k][j] - 2.0 * dot(yi, xj);
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Sums `f(i)` over `rows`, combining per-row partials in ascending order.
fn row_sum<F>(rows: Range<usize>, parallel: bool, f: F) -> Result<f64>
where
    F: Fn(usize) -> Result<f64> + Sync + Send,
{
    let partials: Vec<f64> = if parallel {
        rows.into_par_iter().map(&f).collect::<Result<Vec<f64>>>()?
    } else {
        rows.map(&f).collect::<Result<Vec<f64>>>()?
    };
    Ok(partials.iter().sum())
}

fn binomial_rows(r: usize) -> Vec<Vec<f64>> {
    (0..=r)
        .map(|k| (0..=k).map(|i| binomial(k as u64, i as u64).expect("small") as f64).collect())
        .collect()
}

/// Pairwise `η_r(X_i - X_j; Σ)` through the single-form cumulants
/// `κ_ℓ = (-2)^{ℓ-1}(ℓ-1)!{-tr(Σ^{-ℓ}) + ℓ ΔᵀΣ^{-ℓ-1}Δ}`.
#[derive(Debug, Clone)]
struct CumulantEtaR {
    r: usize,
    log_norm: f64,
    traces: Vec<f64>,
    coef: Vec<f64>,
    binom: Vec<Vec<f64>>,
    quads: DecoupledQuadratics,
}

impl CumulantEtaR {
    fn new(data: &SampleMatrix, g: &GaussianParams, r: usize) -> Self {
        let d = g.dim() as f64;
        // Σ^{-1}, ..., Σ^{-(r+1)}
        let pw = g.inverse_powers(r + 1);
        let mut traces = vec![0.0; r + 1];
        let mut coef = vec![0.0; r + 1];
        for l in 1..=r {
            traces[l] = pw[l - 1].trace();
            coef[l] = (-2f64).powi(l as i32 - 1) * factorial_f64(l - 1);
        }
        CumulantEtaR {
            r,
            log_norm: -0.5 * (d * (2.0 * PI).ln() + g.log_det()),
            traces,
            coef,
            binom: binomial_rows(r),
            quads: DecoupledQuadratics::new(data, &pw),
        }
    }

    fn row(&self, i: usize) -> f64 {
        let r = self.r;
        let mut t = vec![0.0; r + 1];
        let mut kappa = vec![0.0; r + 1];
        let mut nu = vec![0.0; r + 1];
        let mut sum = 0.0;
        for j in 0..self.quads.n {
            self.quads.pair(i, j, &mut t);
            for l in 1..=r {
                kappa[l] = self.coef[l] * (-self.traces[l] + l as f64 * t[l]);
            }
            nu[0] = 1.0;
            for k in 1..=r {
                let b = &self.binom[k - 1];
                let mut acc = 0.0;
                for m in 0..k {
                    acc += b[m] * kappa[k - m] * nu[m];
                }
                nu[k] = acc;
            }
            sum += (self.log_norm - 0.5 * t[0]).exp() * nu[r];
        }
        sum
    }
}

/// Pairwise `η_{r,s}(X_i - X_j; B, Σ)` through the joint cumulant table.
#[derive(Debug, Clone)]
struct CumulantEtaRS {
    log_norm: f64,
    forms: CumulantForms,
    quads: DecoupledQuadratics,
}

impl CumulantEtaRS {
    fn new(data: &SampleMatrix, b: &DMatrix<f64>, g: &GaussianParams, r: usize, s: usize, limits: &Limits) -> Result<Self> {
        let d = g.dim();
        let inv = g.cov_inv();
        let mut forms = CumulantForms::new(&DMatrix::identity(d, d), b, &(-inv), r, s, limits)?;
        // μ = Σ^{-1} Δ
        forms.pull_back(inv);
        let mut mats = vec![inv.clone()];
        mats.extend(forms.parts().1.iter().cloned());
        Ok(CumulantEtaRS {
            log_norm: -0.5 * (d as f64 * (2.0 * PI).ln() + g.log_det()),
            quads: DecoupledQuadratics::new(data, &mats),
            forms,
        })
    }

    fn row(&self, i: usize) -> f64 {
        let mut t = vec![0.0; self.quads.forms()];
        let mut sum = 0.0;
        for j in 0..self.quads.n {
            self.quads.pair(i, j, &mut t);
            let nu = self.forms.table_from_quadratics(&t[1..]).nu();
            sum += (self.log_norm - 0.5 * t[0]).exp() * nu;
        }
        sum
    }
}

fn check_sample(data: &SampleMatrix, g: &GaussianParams) -> Result<()> {
    if data.dim() != g.dim() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} columns but Σ is {}x{}",
            data.dim(),
            g.dim(),
            g.dim()
        )));
    }
    Ok(())
}

/// `Σ_{i ∈ rows} Σ_{j=1..n} η_r(X_i - X_j; Σ)`.
pub fn vstat_partial(
    data: &SampleMatrix,
    g: &GaussianParams,
    r: usize,
    method: VstatMethod,
    rows: Range<usize>,
    opts: &KdeOptions,
) -> Result<f64> {
    check_sample(data, g)?;
    let n = data.n();
    if rows.end > n {
        return Err(Error::IndexOutOfRange { index: rows.end, max: n });
    }
    match method {
        VstatMethod::Direct => {
            let d = data.dim();
            let k = DirectEta::new(&DMatrix::identity(d, d), d, r, 0, &opts.limits)?;
            let x = data.row_major();
            row_sum(rows, opts.parallel, |i| {
                let mut s = 0.0;
                let mut diff = vec![0.0; d];
                for j in 0..n {
                    for c in 0..d {
                        diff[c] = x[i * d + c] - x[j * d + c];
                    }
                    s += k.eval(&diff, g)?;
                }
                Ok(s)
            })
        }
        VstatMethod::Cumulant => {
            let k = CumulantEtaR::new(data, g, r);
            opts.limits.check_bytes("V-statistic workspace", k.quads.footprint_bytes() as u128)?;
            row_sum(rows, opts.parallel, |i| Ok(k.row(i)))
        }
    }
}

/// `Q_r(Σ) = n^{-2} Σ_{i,j} η_r(X_i - X_j; Σ)`.
pub fn vstat_q(data: &SampleMatrix, g: &GaussianParams, r: usize, method: VstatMethod, opts: &KdeOptions) -> Result<f64> {
    let n = data.n();
    Ok(vstat_partial(data, g, r, method, 0..n, opts)? / (n as f64 * n as f64))
}

/// Bytes held by the cumulant-path V-statistic workspace for `(n, d, r)`.
pub fn vstat_workspace_bytes(n: usize, d: usize, r: usize) -> usize {
    8 * (n * d + (r + 1) * (n * d + n))
}

/// `n^{-2} Σ_{i,j} η_{r,s}(X_i - X_j; B, Σ)`.
pub fn eta_vstat(
    data: &SampleMatrix,
    b: &DMatrix<f64>,
    g: &GaussianParams,
    r: usize,
    s: usize,
    method: VstatMethod,
    opts: &KdeOptions,
) -> Result<f64> {
    check_sample(data, g)?;
    check_b(b, g.dim())?;
    let n = data.n();
    let total = match method {
        VstatMethod::Cumulant => {
            let k = CumulantEtaRS::new(data, b, g, r, s, &opts.limits)?;
            row_sum(0..n, opts.parallel, |i| Ok(k.row(i)))?
        }
        VstatMethod::Direct => {
            let d = data.dim();
            let k = DirectEta::new(b, d, r, s, &opts.limits)?;
            let x = data.row_major();
            row_sum(0..n, opts.parallel, |i| {
                let mut s = 0.0;
                let mut diff = vec![0.0; d];
                for j in 0..n {
                    for c in 0..d {
                        diff[c] = x[i * d + c] - x[j * d + c];
                    }
                    s += k.eval(&diff, g)?;
                }
                Ok(s)
            })?
        }
    };
    Ok(total / (n as f64 * n as f64))
}

/// `ψ̂_s(G) = n^{-2} Σ_{i,j} D^{⊗s} φ_G(X_i - X_j)` for even `s`.
pub fn psi_hat(data: &SampleMatrix, gmat: &BandwidthMatrix, s: usize, limits: &Limits) -> Result<KronVector> {
    let g = gmat.as_gaussian();
    check_sample(data, g)?;
    if s % 2 == 1 {
        return Err(Error::InvalidArgument(format!("ψ̂ needs an even order, got {s}")));
    }
    let d = data.dim();
    limits.check_len(d, s)?;
    let n = data.n();
    let rec = UniqueRecursion::new(d, s, limits)?;
    let x = data.row_major();
    let mut acc: Option<Vec<f64>> = None;
    let mut diff = vec![0.0; d];
    for i in 0..n {
        for j in 0..n {
            for c in 0..d {
                diff[c] = x[i * d + c] - x[j * d + c];
            }
            let z = g.solve(&DVector::from_column_slice(&diff));
            let u = rec.run(z.as_slice(), g.cov_inv(), s)?;
            let phi = g.density(&diff);
            let a = acc.get_or_insert_with(|| vec![0.0; u.len()]);
            for (t, v) in a.iter_mut().zip(u.values()) {
                *t += v * phi;
            }
        }
    }
    let nn = (n * n) as f64;
    // the sum is linear, so expanding once at the end equals summing full vectors
    let vals = acc.expect("n >= 1").into_iter().map(|v| v / nn).collect();
    expand_unique(&HermiteUniqueVector::new(vals, d, s)?, limits)
}

/// `D^{⊗s} φ_G(X_i - X_j)` summed by brute force over full vectors; oracle for [`psi_hat`].
pub fn psi_hat_bruteforce(data: &SampleMatrix, gmat: &BandwidthMatrix, s: usize, limits: &Limits) -> Result<KronVector> {
    let g = gmat.as_gaussian();
    let (n, d) = (data.n(), data.dim());
    let mut acc = vec![0.0; limits.check_len(d, s)?];
    for i in 0..n {
        for j in 0..n {
            let diff: Vec<f64> = (0..d).map(|c| data.data()[(i, c)] - data.data()[(j, c)]).collect();
            let u = expand_unique(&gaussian_derivative_unique(&diff, g, s, limits)?, limits)?;
            for (a, v) in acc.iter_mut().zip(u.values()) {
                *a += v;
            }
        }
    }
    let nn = (n * n) as f64;
    KronVector::new(acc.into_iter().map(|v| v / nn).collect(), d, s)
}

fn scaled(h: &BandwidthMatrix, c: f64) -> Result<GaussianParams> {
    GaussianParams::centered(h.matrix() * c)
}

fn check_bandwidth(data: &SampleMatrix, h: &BandwidthMatrix) -> Result<()> {
    if h.dim() != data.dim() {
        return Err(Error::DimensionMismatch(format!(
            "bandwidth is {0}x{0} for {1}-dimensional data",
            h.dim(),
            data.dim()
        )));
    }
    Ok(())
}

/// `CV_r(H) = (-1)^r {n^{-2} Σ η_r(·; 2H) - 2[n(n-1)]^{-1} Σ_{i≠j} η_r(·; H)}`.
pub fn cv_criterion(data: &SampleMatrix, h: &BandwidthMatrix, r: usize, opts: &KdeOptions) -> Result<f64> {
    check_bandwidth(data, h)?;
    let n = data.n();
    if n < 2 {
        return Err(Error::InvalidArgument("cross validation needs n >= 2".into()));
    }
    let nf = n as f64;
    let q2 = vstat_q(data, &scaled(h, 2.0)?, r, VstatMethod::Cumulant, opts)?;
    let q1 = vstat_q(data, h.as_gaussian(), r, VstatMethod::Cumulant, opts)?;
    let diag = eta_r(&vec![0.0; data.dim()], h.as_gaussian(), r, EtaMethod::NuBridge, &opts.limits)?;
    let off = nf * nf * q1 - nf * diag;
    Ok(sign(r) * (q2 - 2.0 * off / (nf * (nf - 1.0))))
}

/// `2^{-(d+r)} π^{-d/2} n^{-1} |H|^{-1/2} ν_r(H^{-1}; 0, I)`.
pub fn integrated_variance_term(h: &BandwidthMatrix, n: usize, r: usize, limits: &Limits) -> Result<f64> {
    let d = h.dim();
    let q = QuadFormParams::new(DVector::zeros(d), DMatrix::identity(d, d))?;
    let nu = nu_single(h.as_gaussian().cov_inv(), &q, r, NuMethod::CumulantRecursive, limits)?;
    Ok(2f64.powi(-((d + r) as i32)) * PI.powf(-(d as f64) / 2.0) / n as f64 * (-0.5 * h.as_gaussian().log_det()).exp() * nu)
}

/// `PI_r(H)` with pilot `G`.
pub fn pi_criterion(data: &SampleMatrix, h: &BandwidthMatrix, gmat: &BandwidthMatrix, r: usize, opts: &KdeOptions) -> Result<f64> {
    check_bandwidth(data, h)?;
    check_bandwidth(data, gmat)?;
    let first = integrated_variance_term(h, data.n(), r, &opts.limits)?;
    let second = eta_vstat(data, h.matrix(), gmat.as_gaussian(), r, 2, VstatMethod::Cumulant, opts)?;
    Ok(first + sign(r) / 4.0 * second)
}

/// `SCV_r(H)` with pilot `G`.
pub fn scv_criterion(data: &SampleMatrix, h: &BandwidthMatrix, gmat: &BandwidthMatrix, r: usize, opts: &KdeOptions) -> Result<f64> {
    check_bandwidth(data, h)?;
    check_bandwidth(data, gmat)?;
    let first = integrated_variance_term(h, data.n(), r, &opts.limits)?;
    let (hm, gm) = (h.matrix(), gmat.matrix());
    let q = |m: DMatrix<f64>| -> Result<f64> { vstat_q(data, &GaussianParams::centered(m)?, r, VstatMethod::Cumulant, opts) };
    let a = q(hm * 2.0 + gm * 2.0)?;
    let b = q(hm + gm * 2.0)?;
    let c = q(gm * 2.0)?;
    Ok(first + sign(r) * (a - 2.0 * b + c))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    Cv,
    Pi,
    Scv,
}

/// Normal-scale pilot `(4/((d+2)n))^{2/(d+4)} S`.
pub fn default_pilot(data: &SampleMatrix) -> Result<BandwidthMatrix> {
    let (n, d) = (data.n() as f64, data.dim() as f64);
    let c = (4.0 / ((d + 2.0) * n)).powf(2.0 / (d + 4.0));
    BandwidthMatrix::new(data.covariance()? * c)
}

/// Normal-reference bandwidth for derivative order `r`:
/// `(4/((d+2r+2)n))^{2/(d+2r+4)} S`.
pub fn normal_reference(data: &SampleMatrix, r: usize) -> Result<BandwidthMatrix> {
    let (n, d, rf) = (data.n() as f64, data.dim() as f64, r as f64);
    let c = (4.0 / ((d + 2.0 * rf + 2.0) * n)).powf(2.0 / (d + 2.0 * rf + 4.0));
    BandwidthMatrix::new(data.covariance()? * c)
}

#[derive(Debug, Clone, Copy)]
pub struct SelectOptions {
    pub max_iter: usize,
    /// Stop when the simplex values agree to this relative spread...
    pub ftol: f64,
    /// ...and its vertices to this distance in parameter space.
    pub xtol: f64,
    /// Initial simplex step in parameter space.
    pub step: f64,
}

impl Default for SelectOptions {
    fn default() -> Self {
        SelectOptions {
            max_iter: 500,
            ftol: 1e-10,
            xtol: 1e-6,
            step: 0.25,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BandwidthSelection {
    pub h: BandwidthMatrix,
    pub value: f64,
    pub init_value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Largest vertex distance from the best vertex at exit.
    pub simplex_size: f64,
}

/// Cholesky-log coordinates: `L` lower triangular with `L_kk = exp(θ_k)` and
/// the strictly lower entries stored after the diagonal, `H = L Lᵀ`.
fn theta_to_h(theta: &[f64], d: usize) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(d, d);
    let mut k = d;
    for i in 0..d {
        l[(i, i)] = theta[i].exp();
        for j in 0..i {
            l[(i, j)] = theta[k];
            k += 1;
        }
    }
    &l * l.transpose()
}

fn h_to_theta(h: &DMatrix<f64>) -> Result<Vec<f64>> {
    let d = h.nrows();
    let l = h.clone().cholesky().ok_or(Error::NotPositiveDefinite)?.l();
    let mut theta: Vec<f64> = (0..d).map(|i| l[(i, i)].ln()).collect();
    for i in 0..d {
        for j in 0..i {
            theta.push(l[(i, j)]);
        }
    }
    Ok(theta)
}

/// Minimizes a criterion over SPD matrices with a Nelder–Mead simplex in
/// Cholesky-log coordinates. Deterministic given the data and starting point.
pub fn select_bandwidth(
    data: &SampleMatrix,
    r: usize,
    criterion: Criterion,
    pilot: Option<&BandwidthMatrix>,
    init: Option<&BandwidthMatrix>,
    sel: &SelectOptions,
    opts: &KdeOptions,
) -> Result<BandwidthSelection> {
    let d = data.dim();
    if data.n() < 2 {
        return Err(Error::InvalidArgument("bandwidth selection needs n >= 2".into()));
    }
    let pilot = match (criterion, pilot) {
        (Criterion::Cv, _) => None,
        (_, Some(g)) => Some(g.clone()),
        (_, None) => Some(default_pilot(data)?),
    };
    let h0 = match init {
        Some(h) => h.clone(),
        None => normal_reference(data, r)?,
    };
    let objective = |theta: &[f64]| -> Result<f64> {
        let Ok(h) = BandwidthMatrix::new(theta_to_h(theta, d)) else {
            return Ok(f64::INFINITY);
        };
        let v = match criterion {
            Criterion::Cv => cv_criterion(data, &h, r, opts),
            Criterion::Pi => pi_criterion(data, &h, pilot.as_ref().expect("pilot set"), r, opts),
            Criterion::Scv => scv_criterion(data, &h, pilot.as_ref().expect("pilot set"), r, opts),
        };
        match v {
            Ok(v) if v.is_finite() => Ok(v),
            Ok(_) | Err(Error::NotPositiveDefinite) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        }
    };
    let start = h_to_theta(h0.matrix())?;
    let out = nelder_mead(&objective, &start, sel)?;
    Ok(BandwidthSelection {
        h: BandwidthMatrix::new(theta_to_h(&out.x, d))?,
        value: out.fx,
        init_value: out.f0,
        iterations: out.iterations,
        evaluations: out.evaluations,
        converged: out.converged,
        simplex_size: out.size,
    })
}

struct NmResult {
    x: Vec<f64>,
    fx: f64,
    f0: f64,
    iterations: usize,
    evaluations: usize,
    converged: bool,
    size: f64,
}

fn nelder_mead(f: &dyn Fn(&[f64]) -> Result<f64>, x0: &[f64], sel: &SelectOptions) -> Result<NmResult> {
    let m = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64]| -> Result<f64> {
        evals += 1;
        f(x)
    };
    let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
    for k in 0..m {
        let mut p = x0.to_vec();
        p[k] += sel.step;
        pts.push(p);
    }
    let mut vals = Vec::with_capacity(m + 1);
    for p in &pts {
        vals.push(eval(p)?);
    }
    let f0 = vals[0];
    let mut iterations = 0;
    let mut converged = false;
    let combine = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect() };
    while iterations < sel.max_iter {
        // stable sort keeps ties in insertion order, so runs are reproducible
        let mut order: Vec<usize> = (0..=m).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&k| pts[k].clone()).collect();
        vals = order.iter().map(|&k| vals[k]).collect();
        let spread = (vals[m] - vals[0]).abs();
        let size = simplex_size(&pts);
        if spread <= sel.ftol * vals[0].abs().max(1e-300) && size <= sel.xtol {
            converged = true;
            break;
        }
        iterations += 1;
        let mut centroid = vec![0.0; m];
        for p in &pts[..m] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / m as f64;
            }
        }
        let xr = combine(&centroid, &pts[m], -1.0);
        let fr = eval(&xr)?;
        if fr < vals[0] {
            let xe = combine(&centroid, &pts[m], -2.0);
            let fe = eval(&xe)?;
            if fe < fr {
                pts[m] = xe;
                vals[m] = fe;
            } else {
                pts[m] = xr;
                vals[m] = fr;
            }
        } else if fr < vals[m - 1] {
            pts[m] = xr;
            vals[m] = fr;
        } else {
            let (xc, fc) = if fr < vals[m] {
                let xc = combine(&centroid, &xr, 0.5);
                let fc = eval(&xc)?;
                (xc, fc)
            } else {
                let xc = combine(&centroid, &pts[m], 0.5);
                let fc = eval(&xc)?;
                (xc, fc)
            };
            if fc < vals[m].min(fr) {
                pts[m] = xc;
                vals[m] = fc;
            } else {
                for k in 1..=m {
                    pts[k] = combine(&pts[0], &pts[k], 0.5);
                    vals[k] = eval(&pts[k])?;
                }
            }
        }
    }
    let best = (0..=m).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).expect("non-empty simplex");
    Ok(NmResult {
        x: pts[best].clone(),
        fx: vals[best],
        f0,
        iterations,
        evaluations: evals,
        converged,
        size: simplex_size(&pts),
    })
}

fn simplex_size(pts: &[Vec<f64>]) -> f64 {
    pts[1..]
        .iter()
        .map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

//! Moments and cumulants of quadratic forms `XᵀAX`, `XᵀBX` with `X ~ N(μ, Σ)`.
//!
//! The `Σ` slot only has to be symmetric: the kernel functionals evaluate these
//! formulas at `-Σ^{-1}`, where no probabilistic interpretation exists.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hermite::closed_form_sum;
use crate::kron::contract_pairs;
use crate::kron::vec_of;
use crate::limits::{binomial, factorial_f64, Limits};
use crate::linalg::{ensure_square, ensure_symmetric, matrix_power, symmetrize, trace, GaussianParams};

const COMMUTE_TOL: f64 = 1e-10;

/// Mean and symmetric (possibly indefinite) second-argument matrix.
#[derive(Debug, Clone)]
pub struct QuadFormParams {
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
}

impl QuadFormParams {
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let d = ensure_square(&sigma, "Σ")?;
        if mu.len() != d {
            return Err(Error::DimensionMismatch(format!("mean of length {} for a {d}x{d} Σ", mu.len())));
        }
        ensure_symmetric(&sigma)?;
        Ok(QuadFormParams { mu, sigma })
    }

    pub fn from_gaussian(g: &GaussianParams) -> Self {
        QuadFormParams {
            mu: g.mean().clone(),
            sigma: g.cov().clone(),
        }
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

fn check_form(m: &DMatrix<f64>, d: usize, what: &str) -> Result<()> {
    if ensure_square(m, what)? != d {
        return Err(Error::DimensionMismatch(format!("{what} is {0}x{0}, expected {d}x{d}", m.nrows())));
    }
    ensure_symmetric(m)
}

/// A sequence of `r` ones and `s` twos.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultisetPerm(Vec<u8>);

impl MultisetPerm {
    pub fn entries(&self) -> &[u8] {
        &self.0
    }

    pub fn ones(&self) -> usize {
        self.0.iter().filter(|&&v| v == 1).count()
    }

    pub fn twos(&self) -> usize {
        self.0.iter().filter(|&&v| v == 2).count()
    }
}

/// All distinct arrangements of `r` ones and `s` twos, lexicographically.
pub fn multiset_perms(r: usize, s: usize, limits: &Limits) -> Result<Vec<MultisetPerm>> {
    if r + s == 0 {
        return Err(Error::InvalidArgument("r + s must be at least 1".into()));
    }
    limits.check_multiset_order(r + s)?;
    fn walk(a: usize, b: usize, cur: &mut Vec<u8>, out: &mut Vec<MultisetPerm>) {
        if a == 0 && b == 0 {
            out.push(MultisetPerm(cur.clone()));
            return;
        }
        for (sym, left) in [(1u8, a), (2u8, b)] {
            if left > 0 {
                cur.push(sym);
                if sym == 1 {
                    walk(a - 1, b, cur, out);
                } else {
                    walk(a, b - 1, cur, out);
                }
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    walk(r, s, &mut Vec::with_capacity(r + s), &mut out);
    Ok(out)
}

/// `κ_r(A) = 2^{r-1}(r-1)![tr{(AΣ)^r} + r μᵀ(AΣ)^{r-1}Aμ]`.
pub fn kappa_single(a: &DMatrix<f64>, q: &QuadFormParams, r: usize) -> Result<f64> {
    check_form(a, q.dim(), "A")?;
    if r == 0 {
        return Err(Error::InvalidArgument("cumulants start at order 1".into()));
    }
    let f = a * &q.sigma;
    let pw = matrix_power(&f, r - 1);
    let tr = trace(&(&pw * &f));
    let quad = q.mu.dot(&(&pw * a * &q.mu));
    Ok(2f64.powi(r as i32 - 1) * factorial_f64(r - 1) * (tr + r as f64 * quad))
}

/// Which route evaluates `ν`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NuMethod {
    /// Contract the raw vector moment `μ_{2r+2s}` with `vec A` and `vec B`.
    VectorMoment,
    /// Moment/cumulant recursions on scalars.
    CumulantRecursive,
}

fn binom_f(n: usize, k: usize) -> f64 {
    binomial(n as u64, k as u64).expect("small binomial") as f64
}

/// `ν_r = Σ_{i<r} C(r-1, i) κ_{r-i} ν_i` from a cumulant sequence `kappa[1..=r]`.
pub fn nu_from_single_cumulants(kappa: &[f64], r: usize) -> f64 {
    let mut nu = vec![1.0; r + 1];
    for k in 1..=r {
        nu[k] = (0..k).map(|i| binom_f(k - 1, i) * kappa[k - i] * nu[i]).sum();
    }
    nu[r]
}

/// `E[(XᵀAX)^r]`.
pub fn nu_single(a: &DMatrix<f64>, q: &QuadFormParams, r: usize, method: NuMethod, limits: &Limits) -> Result<f64> {
    check_form(a, q.dim(), "A")?;
    match method {
        NuMethod::VectorMoment => nu_vector_moment(&[(a, r)], q, limits),
        NuMethod::CumulantRecursive => {
            let mut kappa = vec![0.0; r + 1];
            for (k, slot) in kappa.iter_mut().enumerate().skip(1) {
                *slot = kappa_single(a, q, k)?;
            }
            Ok(nu_from_single_cumulants(&kappa, r))
        }
    }
}

fn nu_vector_moment(forms: &[(&DMatrix<f64>, usize)], q: &QuadFormParams, limits: &Limits) -> Result<f64> {
    let total: usize = forms.iter().map(|(_, k)| 2 * k).sum();
    let d = q.dim();
    limits.check_len(d, total)?;
    let mu = closed_form_sum(q.mu.as_slice(), &vec_of(&q.sigma), 1.0, total);
    let mats: Vec<&DMatrix<f64>> = forms.iter().flat_map(|&(m, k)| std::iter::repeat_n(m, k)).collect();
    Ok(contract_pairs(&mu, &mats)[0])
}

/// The two pieces of the joint cumulant sum over `MP(r, s)`:
/// `Σ tr(F_{i_1}⋯F_{i_n})` and `Σ F_{i_1}⋯F_{i_{n-1}} A_{i_n}` (so that the
/// `μ` term is `μᵀ M μ`), with `F_1 = AΣ`, `F_2 = BΣ`.
pub fn kappa_joint_parts(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    r: usize,
    s: usize,
    limits: &Limits,
) -> Result<(f64, DMatrix<f64>)> {
    if r + s == 0 {
        return Err(Error::InvalidArgument("r + s must be at least 1".into()));
    }
    limits.check_multiset_order(r + s)?;
    let d = sigma.nrows();
    let f = [a * sigma, b * sigma];
    let ends = [a, b];
    struct Acc<'a> {
        f: &'a [DMatrix<f64>; 2],
        ends: [&'a DMatrix<f64>; 2],
        sigma: &'a DMatrix<f64>,
        tr: f64,
        m: DMatrix<f64>,
    }
    // prefix tree over MP(r, s): each node extends the shared prefix product once
    fn walk(acc: &mut Acc, prefix: &DMatrix<f64>, left: [usize; 2]) {
        if left[0] + left[1] == 1 {
            let c = usize::from(left[0] == 0);
            let m = prefix * acc.ends[c];
            acc.tr += m.component_mul(&acc.sigma.transpose()).sum();
            acc.m += m;
            return;
        }
        for c in 0..2 {
            if left[c] > 0 {
                let mut next = left;
                next[c] -= 1;
                let p = prefix * &acc.f[c];
                walk(acc, &p, next);
            }
        }
    }
    let mut acc = Acc {
        f: &f,
        ends,
        sigma,
        tr: 0.0,
        m: DMatrix::zeros(d, d),
    };
    walk(&mut acc, &DMatrix::identity(d, d), [r, s]);
    Ok((acc.tr, acc.m))
}

fn joint_scale(r: usize, s: usize) -> f64 {
    2f64.powi((r + s) as i32 - 1) * factorial_f64(r) * factorial_f64(s)
}

/// Joint cumulant of order `(r, s)`:
/// `2^{r+s-1} r! s! Σ_{MP(r,s)} tr[F_{i_1}⋯F_{i_{r+s}}{I/(r+s) + Σ^{-1}μμᵀ}]`.
pub fn kappa_joint(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &QuadFormParams,
    r: usize,
    s: usize,
    limits: &Limits,
) -> Result<f64> {
    check_form(a, q.dim(), "A")?;
    check_form(b, q.dim(), "B")?;
    let (tr, m) = kappa_joint_parts(a, b, &q.sigma, r, s, limits)?;
    let n = (r + s) as f64;
    Ok(joint_scale(r, s) * (tr / n + q.mu.dot(&(m * &q.mu))))
}

fn commutator_check(f1: &DMatrix<f64>, f2: &DMatrix<f64>) -> Result<()> {
    let c = f1 * f2 - f2 * f1;
    let scale = (f1.amax() * f2.amax()).max(1.0);
    let resid = c.amax() / scale;
    if resid > COMMUTE_TOL {
        return Err(Error::NotCommuting(resid));
    }
    Ok(())
}

/// Joint cumulant when `AΣ` and `BΣ` commute:
/// `2^{n-1}(n-1)!{tr(F_1^r F_2^s) + n tr(F_1^r F_2^s Σ^{-1}μμᵀ)}`, `n = r + s`.
pub fn kappa_joint_commuting(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &QuadFormParams, r: usize, s: usize) -> Result<f64> {
    check_form(a, q.dim(), "A")?;
    check_form(b, q.dim(), "B")?;
    if r + s == 0 {
        return Err(Error::InvalidArgument("r + s must be at least 1".into()));
    }
    let f1 = a * &q.sigma;
    let f2 = b * &q.sigma;
    commutator_check(&f1, &f2)?;
    let n = r + s;
    let f1r = matrix_power(&f1, r);
    let tr = trace(&(&f1r * matrix_power(&f2, s)));
    // F_1^r F_2^s Σ^{-1} without forming Σ^{-1}
    let m = if s >= 1 {
        &f1r * matrix_power(&f2, s - 1) * b
    } else {
        matrix_power(&f1, r - 1) * a
    };
    let quad = q.mu.dot(&(m * &q.mu));
    Ok(2f64.powi(n as i32 - 1) * factorial_f64(n - 1) * (tr + n as f64 * quad))
}

/// Closed form from the literature that treats `F_1`, `F_2` as if they commuted.
/// Exact only when they do; kept for comparison.
pub fn mathai_provost_formula(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &QuadFormParams, r: usize, s: usize) -> Result<f64> {
    check_form(a, q.dim(), "A")?;
    check_form(b, q.dim(), "B")?;
    if r == 0 || s == 0 {
        return Err(Error::InvalidArgument("the formula is stated for r >= 1 and s >= 1".into()));
    }
    let n = r + s;
    let f1 = a * &q.sigma;
    let f2 = b * &q.sigma;
    let p1 = |k: usize| matrix_power(&f1, k);
    let p2 = |k: usize| matrix_power(&f2, k);
    let lead = 2f64.powi(n as i32 - 1) * factorial_f64(n - 1) * trace(&(p1(r) * p2(s)));
    let mu = &q.mu;
    // tr(X Σ^{-1} μμᵀ) = μᵀ X Σ^{-1} μ, with the trailing F Σ^{-1} collapsed to A or B
    let t1 = mu.dot(&(p1(r - 1) * p2(s) * a * mu));
    let t2 = mu.dot(&(p2(s - 1) * p1(r) * b * mu));
    let t3 = mu.dot(&(p1(r) * p2(s - 1) * b * mu));
    let (rf, sf) = (r as f64, s as f64);
    let tail = 2f64.powi(n as i32 - 1)
        * factorial_f64(n - 2)
        * (rf * (rf - 1.0) * t1 + sf * (sf - 1.0) * t2 + 2.0 * rf * sf * t3);
    Ok(lead + tail)
}

/// Joint cumulants `κ_{a,b}` for `0 ≤ a ≤ r`, `0 ≤ b ≤ s`, each stored as
/// `c_{ab} + μᵀ Q_{ab} μ` so that many means can share one enumeration.
#[derive(Debug, Clone)]
pub struct CumulantForms {
    r: usize,
    s: usize,
    consts: Vec<f64>,
    forms: Vec<DMatrix<f64>>,
}

impl CumulantForms {
    pub fn new(
        a: &DMatrix<f64>,
        b: &DMatrix<f64>,
        sigma: &DMatrix<f64>,
        r: usize,
        s: usize,
        limits: &Limits,
    ) -> Result<Self> {
        let d = sigma.nrows();
        let mut consts = vec![0.0; (r + 1) * (s + 1)];
        let mut forms = vec![DMatrix::zeros(d, d); (r + 1) * (s + 1)];
        for i in 0..=r {
            for j in 0..=s {
                if i + j == 0 {
                    continue;
                }
                let (tr, m) = kappa_joint_parts(a, b, sigma, i, j, limits)?;
                let sc = joint_scale(i, j);
                consts[i * (s + 1) + j] = sc * tr / (i + j) as f64;
                forms[i * (s + 1) + j] = symmetrize(&m) * sc;
            }
        }
        Ok(CumulantForms { r, s, consts, forms })
    }

    pub fn orders(&self) -> (usize, usize) {
        (self.r, self.s)
    }

    /// Replaces every `Q` by `Lᵀ Q L`, i.e. evaluates at `μ = L y`.
    pub fn pull_back(&mut self, l: &DMatrix<f64>) {
        for f in &mut self.forms {
            *f = symmetrize(&(l.transpose() * &*f * l));
        }
    }

    /// `(c_{ab}, Q_{ab})` in row-major `(a, b)` order, `(0, 0)` included as zeros.
    pub fn parts(&self) -> (&[f64], &[DMatrix<f64>]) {
        (&self.consts, &self.forms)
    }

    /// `κ_{a,b}` from precomputed quadratic values `qv[k] = μᵀ Q_k μ`.
    pub fn table_from_quadratics(&self, qv: &[f64]) -> CumulantTable {
        let kappa = self.consts.iter().zip(qv).map(|(c, q)| c + q).collect();
        CumulantTable { r: self.r, s: self.s, kappa }
    }

    pub fn table(&self, mu: &DVector<f64>) -> CumulantTable {
        let qv: Vec<f64> = self.forms.iter().map(|f| mu.dot(&(f * mu))).collect();
        self.table_from_quadratics(&qv)
    }
}

/// Memoized `κ_{a,b}` for `0 ≤ a ≤ r`, `0 ≤ b ≤ s`.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulantTable {
    r: usize,
    s: usize,
    kappa: Vec<f64>,
}

impl CumulantTable {
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.kappa[a * (self.s + 1) + b]
    }

    /// `ν_{r,s}`: single-form recursion for the first column, then for `s ≥ 1`
    /// `ν_{r,s} = Σ_{i≤r} Σ_{j<s} C(r,i) C(s-1,j) κ_{r-i,s-j} ν_{i,j}`.
    pub fn nu(&self) -> f64 {
        let (r, s) = (self.r, self.s);
        let w = s + 1;
        let mut nu = vec![0.0; (r + 1) * w];
        nu[0] = 1.0;
        for k in 1..=r {
            nu[k * w] = (0..k).map(|i| binom_f(k - 1, i) * self.get(k - i, 0) * nu[i * w]).sum();
        }
        for b in 1..=s {
            for a in 0..=r {
                let mut acc = 0.0;
                for i in 0..=a {
                    for j in 0..b {
                        acc += binom_f(a, i) * binom_f(b - 1, j) * self.get(a - i, b - j) * nu[i * w + j];
                    }
                }
                nu[a * w + b] = acc;
            }
        }
        nu[r * w + s]
    }
}

pub fn cumulant_table(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &QuadFormParams,
    r: usize,
    s: usize,
    limits: &Limits,
) -> Result<CumulantTable> {
    check_form(a, q.dim(), "A")?;
    check_form(b, q.dim(), "B")?;
    Ok(CumulantForms::new(a, b, &q.sigma, r, s, limits)?.table(&q.mu))
}

/// `E[(XᵀAX)^r (XᵀBX)^s]`.
pub fn nu_joint(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &QuadFormParams,
    r: usize,
    s: usize,
    method: NuMethod,
    limits: &Limits,
) -> Result<f64> {
    check_form(a, q.dim(), "A")?;
    check_form(b, q.dim(), "B")?;
    match method {
        NuMethod::VectorMoment => nu_vector_moment(&[(a, r), (b, s)], q, limits),
        NuMethod::CumulantRecursive => {
            if r + s == 0 {
                return Ok(1.0);
            }
            Ok(cumulant_table(a, b, q, r, s, limits)?.nu())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lim() -> Limits {
        Limits::default()
    }

    fn sym(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
        let m = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        symmetrize(&m)
    }

    fn spd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
        let m = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        &m * m.transpose() + DMatrix::identity(d, d) * 0.5
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn multiset_examples() {
        let e = |v: &[u8]| MultisetPerm(v.to_vec());
        assert_eq!(multiset_perms(1, 1, &lim()).unwrap(), vec![e(&[1, 2]), e(&[2, 1])]);
        assert_eq!(
            multiset_perms(2, 1, &lim()).unwrap(),
            vec![e(&[1, 1, 2]), e(&[1, 2, 1]), e(&[2, 1, 1])]
        );
        assert_eq!(multiset_perms(2, 2, &lim()).unwrap().len(), 6);
        assert!(multiset_perms(7, 6, &lim()).unwrap_err().is_cap());
        for p in multiset_perms(3, 2, &lim()).unwrap() {
            assert_eq!((p.ones(), p.twos()), (3, 2));
        }
    }

    #[test]
    fn single_cumulant_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = sym(&mut rng, 3);
        let q = QuadFormParams::new(DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0)), spd(&mut rng, 3)).unwrap();
        let f = &a * q.sigma();
        let k1 = trace(&f) + q.mu().dot(&(&a * q.mu()));
        assert!(rel(kappa_single(&a, &q, 1).unwrap(), k1) < 1e-13);
        let k2 = 2.0 * (trace(&(&f * &f)) + 2.0 * q.mu().dot(&(&a * q.sigma() * &a * q.mu())));
        assert!(rel(kappa_single(&a, &q, 2).unwrap(), k2) < 1e-13);
        for d in 1..=4 {
            let std = QuadFormParams::new(DVector::zeros(d), DMatrix::identity(d, d)).unwrap();
            let k3 = kappa_single(&DMatrix::identity(d, d), &std, 3).unwrap();
            assert!((k3 - 8.0 * d as f64).abs() < 1e-12);
            let n0 = nu_single(&DMatrix::identity(d, d), &std, 0, NuMethod::CumulantRecursive, &lim()).unwrap();
            assert_eq!(n0, 1.0);
            for m in [NuMethod::VectorMoment, NuMethod::CumulantRecursive] {
                let n2 = nu_single(&DMatrix::identity(d, d), &std, 2, m, &lim()).unwrap();
                assert!((n2 - (d * (d + 2)) as f64).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn joint_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (a, b, sigma) = (sym(&mut rng, 3), sym(&mut rng, 3), spd(&mut rng, 3));
        let mu = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
        let q = QuadFormParams::new(mu.clone(), sigma.clone()).unwrap();
        let k11 = kappa_joint(&a, &b, &q, 1, 1, &lim()).unwrap();
        let want = 2.0 * trace(&(&a * &sigma * &b * &sigma)) + 4.0 * mu.dot(&(&a * &sigma * &b * &mu));
        assert!(rel(k11, want) < 1e-12);
        let q0 = QuadFormParams::new(DVector::zeros(3), sigma.clone()).unwrap();
        let (f1, f2) = (&a * &sigma, &b * &sigma);
        let want22 = 8.0 * (4.0 * trace(&(&f1 * &f1 * &f2 * &f2)) + 2.0 * trace(&(&f1 * &f2 * &f1 * &f2)));
        assert!(rel(kappa_joint(&a, &b, &q0, 2, 2, &lim()).unwrap(), want22) < 1e-12);
        for m in [NuMethod::VectorMoment, NuMethod::CumulantRecursive] {
            assert_eq!(nu_joint(&a, &b, &q, 0, 0, m, &lim()).unwrap(), 1.0);
            let n11 = nu_joint(&a, &b, &q0, 1, 1, m, &lim()).unwrap();
            let want = trace(&f1) * trace(&f2) + 2.0 * trace(&(&f1 * &f2));
            assert!(rel(n11, want) < 1e-10);
        }
    }

    #[test]
    fn joint_reduces_to_single_and_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let (a, b) = (sym(&mut rng, 3), sym(&mut rng, 3));
            let q = QuadFormParams::new(DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0)), spd(&mut rng, 3)).unwrap();
            for r in 1..=5 {
                let j = kappa_joint(&a, &b, &q, r, 0, &lim()).unwrap();
                assert!(rel(j, kappa_single(&a, &q, r).unwrap()) < 1e-12);
            }
            for (r, s) in [(1, 2), (2, 3), (3, 1), (0, 2)] {
                let x = kappa_joint(&a, &b, &q, r, s, &lim()).unwrap();
                let y = kappa_joint(&b, &a, &q, s, r, &lim()).unwrap();
                assert!(rel(x, y) < 1e-12);
            }
        }
    }

    #[test]
    fn nu_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for d in [2, 3] {
            for _ in 0..10 {
                let (a, b) = (sym(&mut rng, d), sym(&mut rng, d));
                let q = QuadFormParams::new(DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0)), spd(&mut rng, d)).unwrap();
                for r in 0..=4 {
                    for s in 0..=(4 - r) {
                        let v = nu_joint(&a, &b, &q, r, s, NuMethod::VectorMoment, &lim()).unwrap();
                        let c = nu_joint(&a, &b, &q, r, s, NuMethod::CumulantRecursive, &lim()).unwrap();
                        assert!((v - c).abs() <= 1e-9 * v.abs().max(1.0), "d={d} r={r} s={s}: {v} {c}");
                    }
                    let v = nu_single(&a, &q, r, NuMethod::VectorMoment, &lim()).unwrap();
                    let c = nu_single(&a, &q, r, NuMethod::CumulantRecursive, &lim()).unwrap();
                    assert!((v - c).abs() <= 1e-9 * v.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn indefinite_sigma_slot() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (a, b) = (sym(&mut rng, 2), sym(&mut rng, 2));
        let q = QuadFormParams::new(DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0)), -spd(&mut rng, 2)).unwrap();
        let v = nu_joint(&a, &b, &q, 2, 1, NuMethod::VectorMoment, &lim()).unwrap();
        let c = nu_joint(&a, &b, &q, 2, 1, NuMethod::CumulantRecursive, &lim()).unwrap();
        assert!(rel(c, v) < 1e-9);
    }

    #[test]
    fn commuting_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let diag = |rng: &mut ChaCha8Rng| DMatrix::from_diagonal(&DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.5)));
        let (a, b) = (diag(&mut rng), diag(&mut rng));
        let sigma = DMatrix::from_diagonal(&DVector::from_fn(3, |_, _| rng.random_range(0.5..2.0)));
        let q = QuadFormParams::new(DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0)), sigma).unwrap();
        for (r, s) in [(1, 1), (2, 1), (2, 2), (3, 2), (4, 0)] {
            let c = kappa_joint_commuting(&a, &b, &q, r, s).unwrap();
            assert!(rel(c, kappa_joint(&a, &b, &q, r, s, &lim()).unwrap()) < 1e-12);
            if r >= 1 && s >= 1 {
                assert!(rel(mathai_provost_formula(&a, &b, &q, r, s).unwrap(), c) < 1e-12);
            }
        }
        let c = kappa_joint_commuting(&a, &a, &q, 2, 3).unwrap();
        assert!(rel(c, kappa_single(&a, &q, 5).unwrap()) < 1e-12);
        let c = kappa_joint_commuting(&a, &b, &q, 3, 0).unwrap();
        assert!(rel(c, kappa_single(&a, &q, 3).unwrap()) < 1e-12);
        let nc = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(kappa_joint_commuting(&nc, &b, &q, 1, 1), Err(Error::NotCommuting(_))));
    }

    #[test]
    fn commuting_closed_form_fails_without_commutation() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let q = QuadFormParams::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        let good = kappa_joint(&a, &b, &q, 2, 2, &lim()).unwrap();
        let bad = mathai_provost_formula(&a, &b, &q, 2, 2).unwrap();
        // 8 * (4 * 9 + 2 * 8) against 8 * 6 * 9
        assert!((good - 416.0).abs() < 1e-10 && (bad - 432.0).abs() < 1e-10);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let good = kappa_joint(&a, &b, &q, 2, 2, &lim()).unwrap();
        let bad = mathai_provost_formula(&a, &b, &q, 2, 2).unwrap();
        assert!((good - 32.0).abs() < 1e-10 && (bad - 96.0).abs() < 1e-10);
        assert!(rel(bad, good) > 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..5 {
            let (a, b) = (sym(&mut rng, 3), sym(&mut rng, 3));
            let q = QuadFormParams::new(DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0)), spd(&mut rng, 3)).unwrap();
            let x = mathai_provost_formula(&a, &b, &q, 1, 1).unwrap();
            assert!(rel(x, kappa_joint(&a, &b, &q, 1, 1, &lim()).unwrap()) < 1e-12);
        }
    }

    #[test]
    fn pulled_back_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (a, b, sigma) = (sym(&mut rng, 2), sym(&mut rng, 2), spd(&mut rng, 2));
        let l = spd(&mut rng, 2);
        let y = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
        let mut forms = CumulantForms::new(&a, &b, &sigma, 2, 2, &lim()).unwrap();
        forms.pull_back(&l);
        let q = QuadFormParams::new(&l * &y, sigma).unwrap();
        let direct = nu_joint(&a, &b, &q, 2, 2, NuMethod::CumulantRecursive, &lim()).unwrap();
        assert!(rel(forms.table(&y).nu(), direct) < 1e-12);
    }
}

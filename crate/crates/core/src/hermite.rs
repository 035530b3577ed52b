//! Vector Hermite polynomials and Gaussian density derivatives.
//!
//! The recursions here are written for a generic pair `(z, V)`:
//! `u_k = S(d,k)[z ⊗ u_{k-1} - (k-1) vec(V) ⊗ u_{k-2}]`. Hermite polynomials use
//! `z = Θ^{-1} x`, `V = Θ^{-1}`; raw Gaussian moments use `z = μ`, `V = -Σ`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::indexing::{unique_count, unique_ordering, DerivMultiIndex, MultiIndexRanker};
use crate::kron::{apply_kron_power, kron, kron_power, vec_of};
use crate::limits::{factorial_f64, Limits};
use crate::linalg::{GaussianParams, SignedQuadraticParams};
use crate::symvec::{symv_slice, KronVector};

/// Full `d^r` Hermite or derivative vector in p-order.
pub type HermiteFullVector = KronVector;

/// The `N(d, r)` distinct coordinates, ordered by first occurrence in p-order.
#[derive(Debug, Clone, PartialEq)]
pub struct HermiteUniqueVector {
    d: usize,
    r: usize,
    values: Vec<f64>,
}

impl HermiteUniqueVector {
    pub fn new(values: Vec<f64>, d: usize, r: usize) -> Result<Self> {
        let n = unique_count(d, r)?;
        if values.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} values for N({d}, {r}) = {n}",
                values.len()
            )));
        }
        Ok(HermiteUniqueVector { d, r, values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn order(&self) -> usize {
        self.r
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Which algorithm produces the derivative vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivMethod {
    /// Closed-form sum symmetrized by the recursive symmetrizer product.
    Direct,
    /// Full-vector three-term recursion.
    FullRecursive,
    /// Recursion on unique coordinates, expanded at the end.
    Unique,
}

fn check_vec(x: &[f64], d: usize) -> Result<()> {
    if x.len() != d {
        return Err(Error::DimensionMismatch(format!("point has length {}, expected {d}", x.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite coordinate".into()));
    }
    Ok(())
}

/// `r! S(d,r) Σ_j c^j / (j! (r-2j)! 2^j) x^{⊗(r-2j)} ⊗ w^{⊗j}`.
pub(crate) fn closed_form_sum(x: &[f64], w: &[f64], c: f64, r: usize) -> Vec<f64> {
    let d = x.len();
    let n = d.pow(r as u32);
    let mut acc = vec![0.0; n];
    let mut wpow = vec![1.0];
    for j in 0..=r / 2 {
        let coef = c.powi(j as i32) / (factorial_f64(j) * factorial_f64(r - 2 * j) * 2f64.powi(j as i32));
        let term = kron(&kron_power(x, r - 2 * j), &wpow);
        for (a, t) in acc.iter_mut().zip(&term) {
            *a += coef * t;
        }
        wpow = kron(w, &wpow);
    }
    let rf = factorial_f64(r);
    let mut out = symv_slice(&acc, d, r);
    out.iter_mut().for_each(|v| *v *= rf);
    out
}

/// `H_r(x; Θ)` from its closed form.
pub fn hermite_direct(x: &[f64], theta: &SignedQuadraticParams, r: usize, limits: &Limits) -> Result<HermiteFullVector> {
    let d = theta.dim();
    check_vec(x, d)?;
    limits.check_len(d, r)?;
    let values = closed_form_sum(x, &vec_of(theta.theta()), -1.0, r);
    KronVector::new(values, d, r)
}

/// Full-vector recursion for the generic pair `(z, V)`.
pub(crate) fn full_recursion(z: &[f64], v: &DMatrix<f64>, r: usize) -> Vec<f64> {
    let d = z.len();
    let vv = vec_of(v);
    let mut older = vec![1.0];
    if r == 0 {
        return older;
    }
    let mut old = z.to_vec();
    for k in 2..=r {
        let mut t = kron(z, &old);
        let second = kron(&vv, &older);
        let c = (k - 1) as f64;
        for (a, b) in t.iter_mut().zip(&second) {
            *a -= c * b;
        }
        let next = symv_slice(&t, d, k);
        older = std::mem::replace(&mut old, next);
    }
    old
}

/// `(Θ^{-1})^{⊗r} H_r(x; Θ)` by the three-term full-vector recursion.
pub fn scaled_hermite_full_recursive(
    x: &[f64],
    theta: &SignedQuadraticParams,
    r: usize,
    limits: &Limits,
) -> Result<HermiteFullVector> {
    let d = theta.dim();
    check_vec(x, d)?;
    limits.check_len(d, r)?;
    let z = theta.theta_inv() * DVector::from_column_slice(x);
    KronVector::new(full_recursion(z.as_slice(), theta.theta_inv(), r), d, r)
}

/// Bookkeeping for the unique-coordinate recursion up to a maximum order.
///
/// Order `r + 1` is generated from order `r` in `d` blocks: block `j` applies
/// `m ↦ m + e_j` to the trailing `N(d - j, r)` multi-indices of order `r` (those
/// whose first `j` counts vanish).
#[derive(Debug, Clone)]
pub struct UniqueRecursion {
    d: usize,
    // counts[r]: N(d, r) * d flattened multi-indices
    counts: Vec<Vec<u32>>,
    // preds[r][idx * d + k]: slot of m - e_k at order r - 1, u32::MAX when m_k = 0
    preds: Vec<Vec<u32>>,
}

impl UniqueRecursion {
    pub fn new(d: usize, max_order: usize, limits: &Limits) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        let total = unique_count(d, max_order)?;
        limits.check_bytes("unique recursion tables", total as u128 * d as u128 * 8 * (max_order as u128 + 1))?;
        let mut counts = vec![vec![0u32; d]];
        let mut preds = vec![vec![u32::MAX; d]];
        for r in 0..max_order {
            let prev = &counts[r];
            let n_prev = prev.len() / d;
            let mut next = Vec::with_capacity(unique_count(d, r + 1)? * d);
            for j in 0..d {
                let start = n_prev - unique_count(d - j, r)?;
                for idx in start..n_prev {
                    let base = next.len();
                    next.extend_from_slice(&prev[idx * d..(idx + 1) * d]);
                    next[base + j] += 1;
                }
            }
            let ranker = MultiIndexRanker::new(d, r)?;
            let mut canon_to_slot = vec![0u32; n_prev];
            for (slot, m) in prev.chunks_exact(d).enumerate() {
                canon_to_slot[ranker.rank(m)] = slot as u32;
            }
            let mut pred = vec![u32::MAX; next.len()];
            let mut scratch = vec![0u32; d];
            for (idx, m) in next.chunks_exact(d).enumerate() {
                for k in 0..d {
                    if m[k] > 0 {
                        scratch.copy_from_slice(m);
                        scratch[k] -= 1;
                        pred[idx * d + k] = canon_to_slot[ranker.rank(&scratch)];
                    }
                }
            }
            counts.push(next);
            preds.push(pred);
        }
        Ok(UniqueRecursion { d, counts, preds })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn max_order(&self) -> usize {
        self.counts.len() - 1
    }

    /// Multi-indices of order `r` in generation order.
    pub fn multi_indices(&self, r: usize) -> Vec<DerivMultiIndex> {
        self.counts[r]
            .chunks_exact(self.d)
            .map(|m| DerivMultiIndex::new(m.to_vec()))
            .collect()
    }

    /// Slots of order `r + 1` filled by each block: `N(d, r), N(d-1, r), ..., N(1, r)`.
    pub fn block_sizes(&self, r: usize) -> Vec<usize> {
        (0..self.d)
            .map(|j| unique_count(self.d - j, r).expect("small count"))
            .collect()
    }

    /// `H^{m+e_j} = z_j H^m - Σ_k v_{jk} m_k H^{m-e_k}` for every order-`(r+1)` multi-index.
    pub fn step(
        &self,
        prev: &HermiteUniqueVector,
        prev2: Option<&HermiteUniqueVector>,
        z: &[f64],
        v: &DMatrix<f64>,
    ) -> Result<HermiteUniqueVector> {
        let d = self.d;
        let r = prev.r;
        if prev.d != d || z.len() != d || v.nrows() != d || v.ncols() != d {
            return Err(Error::DimensionMismatch("unique recursion inputs".into()));
        }
        if r + 1 > self.max_order() {
            return Err(Error::InvalidArgument(format!(
                "tables built up to order {}, step to {} requested",
                self.max_order(),
                r + 1
            )));
        }
        let empty: &[f64] = &[];
        let older = match (r, prev2) {
            (0, _) => empty,
            (_, Some(p)) if p.r + 1 == r && p.d == d => p.values.as_slice(),
            _ => return Err(Error::InvalidArgument("second vector must have order r - 1".into())),
        };
        let counts = &self.counts[r];
        let pred = &self.preds[r];
        let n_prev = prev.values.len();
        let mut out = Vec::with_capacity(unique_count(d, r + 1)?);
        for j in 0..d {
            let start = n_prev - unique_count(d - j, r)?;
            for idx in start..n_prev {
                let m = &counts[idx * d..(idx + 1) * d];
                let mut val = z[j] * prev.values[idx];
                // counts below j are zero in this block
                for k in j..d {
                    if m[k] > 0 {
                        val -= v[(j, k)] * m[k] as f64 * older[pred[idx * d + k] as usize];
                    }
                }
                out.push(val);
            }
        }
        Ok(HermiteUniqueVector { d, r: r + 1, values: out })
    }

    /// Unique coordinates of order `r` for the pair `(z, V)`, keeping two orders at a time.
    pub fn run(&self, z: &[f64], v: &DMatrix<f64>, r: usize) -> Result<HermiteUniqueVector> {
        let mut older: Option<HermiteUniqueVector> = None;
        let mut cur = HermiteUniqueVector { d: self.d, r: 0, values: vec![1.0] };
        for _ in 0..r {
            let next = self.step(&cur, older.as_ref(), z, v)?;
            older = Some(std::mem::replace(&mut cur, next));
        }
        Ok(cur)
    }
}

/// One order of the unique-coordinate recursion (builds its own tables).
pub fn hermite_unique_step(
    prev: &HermiteUniqueVector,
    prev2: &HermiteUniqueVector,
    z: &[f64],
    v: &DMatrix<f64>,
    limits: &Limits,
) -> Result<HermiteUniqueVector> {
    if prev.r == 0 {
        return Err(Error::InvalidArgument("the step needs prev of order at least 1".into()));
    }
    if prev2.r + 1 != prev.r {
        return Err(Error::InvalidArgument(format!(
            "orders {} and {} are not consecutive",
            prev2.r, prev.r
        )));
    }
    UniqueRecursion::new(prev.d, prev.r + 1, limits)?.step(prev, Some(prev2), z, v)
}

/// Unique coordinates of `(Θ^{-1})^{⊗r} H_r(x; Θ)`.
pub fn hermite_unique(x: &[f64], theta: &SignedQuadraticParams, r: usize, limits: &Limits) -> Result<HermiteUniqueVector> {
    let d = theta.dim();
    check_vec(x, d)?;
    let z = theta.theta_inv() * DVector::from_column_slice(x);
    UniqueRecursion::new(d, r, limits)?.run(z.as_slice(), theta.theta_inv(), r)
}

/// Redistributes unique coordinates over the full `d^r` vector.
pub fn expand_unique(u: &HermiteUniqueVector, limits: &Limits) -> Result<HermiteFullVector> {
    let ord = unique_ordering(u.d, u.r, limits)?;
    let values = ord.expansion_zero_based().iter().map(|&s| u.values[s as usize]).collect();
    KronVector::new(values, u.d, u.r)
}

fn sign(r: usize) -> f64 {
    if r.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

fn centered(x: &[f64], g: &GaussianParams) -> Result<Vec<f64>> {
    check_vec(x, g.dim())?;
    Ok(x.iter().zip(g.mean().iter()).map(|(a, b)| a - b).collect())
}

/// `D^{⊗r} φ_Σ(x - μ) = (-1)^r (Σ^{-1})^{⊗r} H_r(x - μ; Σ) φ_Σ(x - μ)`.
pub fn gaussian_derivative(
    x: &[f64],
    g: &GaussianParams,
    r: usize,
    method: DerivMethod,
    limits: &Limits,
) -> Result<HermiteFullVector> {
    let d = g.dim();
    let y = centered(x, g)?;
    limits.check_len(d, r)?;
    let phi = g.density(x);
    let u = match method {
        DerivMethod::Direct => {
            let theta = SignedQuadraticParams::from_gaussian(g);
            let h = hermite_direct(&y, &theta, r, limits)?;
            apply_kron_power(g.cov_inv(), h.values(), r)
        }
        DerivMethod::FullRecursive => {
            let z = g.solve(&DVector::from_column_slice(&y));
            full_recursion(z.as_slice(), g.cov_inv(), r)
        }
        DerivMethod::Unique => {
            let u = gaussian_derivative_unique(x, g, r, limits)?;
            return expand_unique(&u, limits);
        }
    };
    let scale = sign(r) * phi;
    KronVector::new(u.into_iter().map(|v| v * scale).collect(), d, r)
}

/// The distinct coordinates of `D^{⊗r} φ_Σ(x - μ)` only.
pub fn gaussian_derivative_unique(
    x: &[f64],
    g: &GaussianParams,
    r: usize,
    limits: &Limits,
) -> Result<HermiteUniqueVector> {
    let y = centered(x, g)?;
    let z = g.solve(&DVector::from_column_slice(&y));
    let mut u = UniqueRecursion::new(g.dim(), r, limits)?.run(z.as_slice(), g.cov_inv(), r)?;
    let scale = sign(r) * g.density(x);
    u.values.iter_mut().for_each(|v| *v *= scale);
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::indexing::{p, tuple_to_multiindex, TupleIndex};
    use crate::symvec::symv_recursive;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lim() -> Limits {
        Limits::default()
    }

    fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(d, d) * 0.5
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
        a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
    }

    #[test]
    fn direct_examples() {
        let th = SignedQuadraticParams::new(DMatrix::identity(1, 1)).unwrap();
        assert_eq!(hermite_direct(&[2.0], &th, 0, &lim()).unwrap().values(), &[1.0]);
        assert_eq!(hermite_direct(&[2.0], &th, 1, &lim()).unwrap().values(), &[2.0]);
        assert!((hermite_direct(&[2.0], &th, 3, &lim()).unwrap().values()[0] - 2.0).abs() < 1e-14);
        let th2 = SignedQuadraticParams::new(DMatrix::identity(2, 2)).unwrap();
        let x = [0.7, -1.3];
        let h = scaled_hermite_full_recursive(&x, &th2, 2, &lim()).unwrap();
        let want = [0.49 - 1.0, -0.91, -0.91, 1.69 - 1.0];
        assert!(rel_err(h.values(), &want) < 1e-14);
    }

    #[test]
    fn unique_examples() {
        let v1 = DMatrix::identity(1, 1);
        let rec = UniqueRecursion::new(1, 3, &lim()).unwrap();
        let vals: Vec<f64> = (0..=3).map(|r| rec.run(&[1.0], &v1, r).unwrap().values()[0]).collect();
        assert_eq!(vals, vec![1.0, 1.0, 0.0, -2.0]);
        let v2 = DMatrix::identity(2, 2);
        let h0 = HermiteUniqueVector::new(vec![1.0], 2, 0).unwrap();
        let rec2 = UniqueRecursion::new(2, 2, &lim()).unwrap();
        let h1 = rec2.step(&h0, None, &[1.0, 2.0], &v2).unwrap();
        assert_eq!(h1.values(), &[1.0, 2.0]);
        let h2 = hermite_unique_step(&h1, &h0, &[1.0, 2.0], &v2, &lim()).unwrap();
        assert_eq!(h2.values(), &[0.0, 2.0, 3.0]);
    }

    #[test]
    fn expansion_examples() {
        let u = HermiteUniqueVector::new(vec![1.0, 2.0, 3.0], 2, 2).unwrap();
        assert_eq!(expand_unique(&u, &lim()).unwrap().values(), &[1.0, 2.0, 2.0, 3.0]);
        let u0 = HermiteUniqueVector::new(vec![4.5], 3, 0).unwrap();
        assert_eq!(expand_unique(&u0, &lim()).unwrap().values(), &[4.5]);
        let u1 = HermiteUniqueVector::new(vec![1.0, 2.0, 3.0], 3, 1).unwrap();
        assert_eq!(expand_unique(&u1, &lim()).unwrap().values(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn generation_order_is_first_occurrence() {
        for d in 1..=5 {
            let rec = UniqueRecursion::new(d, 6, &lim()).unwrap();
            for r in 0..=6 {
                let ord = unique_ordering(d, r, &lim()).unwrap();
                assert_eq!(rec.multi_indices(r), ord.multi_indices(), "d={d} r={r}");
            }
        }
    }

    #[test]
    fn block_schedule_fills_next_order() {
        let rec = UniqueRecursion::new(4, 5, &lim()).unwrap();
        for r in 0..5 {
            let total: usize = rec.block_sizes(r).iter().sum();
            assert_eq!(total, unique_count(4, r + 1).unwrap());
        }
    }

    #[test]
    fn derivative_examples() {
        let g = GaussianParams::standard(2);
        let x = [1.0, 1.0];
        let phi = g.density(&x);
        for m in [DerivMethod::Direct, DerivMethod::FullRecursive, DerivMethod::Unique] {
            let d0 = gaussian_derivative(&x, &g, 0, m, &lim()).unwrap();
            assert!((d0.values()[0] - phi).abs() < 1e-16);
            let d3 = gaussian_derivative(&x, &g, 3, m, &lim()).unwrap();
            // tuple (1,1,1) holds ∂^3/∂x_1^3
            assert!((d3.values()[0] - 2.0 * phi).abs() < 1e-14);
        }
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let g = GaussianParams::centered(cov.clone()).unwrap();
        let x = [0.3, -0.4];
        let grad = gaussian_derivative(&x, &g, 1, DerivMethod::Unique, &lim()).unwrap();
        let want = -(cov.try_inverse().unwrap() * DVector::from_column_slice(&x)) * g.density(&x);
        assert!(rel_err(grad.values(), want.as_slice()) < 1e-13);
    }

    #[test]
    fn three_methods_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for d in 1..=4 {
            for r in 0..=6 {
                for _ in 0..3 {
                    let mean = DVector::from_fn(d, |_, _| rng.random_range(-0.5..0.5));
                    let g = GaussianParams::new(mean, random_spd(&mut rng, d)).unwrap();
                    let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
                    let a = gaussian_derivative(&x, &g, r, DerivMethod::Direct, &lim()).unwrap();
                    let b = gaussian_derivative(&x, &g, r, DerivMethod::FullRecursive, &lim()).unwrap();
                    let c = gaussian_derivative(&x, &g, r, DerivMethod::Unique, &lim()).unwrap();
                    assert!(rel_err(b.values(), a.values()) < 1e-10, "d={d} r={r}");
                    assert!(rel_err(c.values(), a.values()) < 1e-10, "d={d} r={r}");
                    let s = symv_recursive(&c, &lim()).unwrap();
                    assert!(rel_err(s.values(), c.values()) < 1e-12);
                }
            }
        }
    }

    #[test]
    fn scaled_recursion_matches_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for d in 1..=3 {
            for r in 0..=5 {
                // indefinite Θ
                let theta = -random_spd(&mut rng, d);
                let th = SignedQuadraticParams::new(theta).unwrap();
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                let direct = hermite_direct(&x, &th, r, &lim()).unwrap();
                let want = apply_kron_power(th.theta_inv(), direct.values(), r);
                let rec = scaled_hermite_full_recursive(&x, &th, r, &lim()).unwrap();
                assert!(rel_err(rec.values(), &want) < 1e-10);
                let uni = expand_unique(&hermite_unique(&x, &th, r, &lim()).unwrap(), &lim()).unwrap();
                assert!(rel_err(uni.values(), &want) < 1e-10);
            }
        }
    }

    #[test]
    fn unique_values_sit_at_their_multi_index() {
        let g = GaussianParams::standard(3);
        let x = [0.2, -0.6, 1.1];
        let full = gaussian_derivative(&x, &g, 4, DerivMethod::Direct, &lim()).unwrap();
        let u = gaussian_derivative_unique(&x, &g, 4, &lim()).unwrap();
        let ord = unique_ordering(3, 4, &lim()).unwrap();
        for i1 in 1..=3 {
            for i2 in 1..=3 {
                for i3 in 1..=3 {
                    for i4 in 1..=3 {
                        let t = TupleIndex::new(vec![i1, i2, i3, i4], 3).unwrap();
                        let slot = ord.position_of(&tuple_to_multiindex(&t)).unwrap();
                        assert!((full.values()[p(&t) - 1] - u.values()[slot - 1]).abs() < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = 1e-5;
        for d in 1..=3 {
            for r in 1..=3 {
                let mean = DVector::from_fn(d, |_, _| rng.random_range(-0.3..0.3));
                let g = GaussianParams::new(mean, random_spd(&mut rng, d)).unwrap();
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                let full = gaussian_derivative(&x, &g, r, DerivMethod::Unique, &lim()).unwrap();
                let scale = full.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let lower = d.pow(r as u32 - 1);
                for k in 0..d {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[k] += h;
                    xm[k] -= h;
                    let fp = gaussian_derivative(&xp, &g, r - 1, DerivMethod::Unique, &lim()).unwrap();
                    let fm = gaussian_derivative(&xm, &g, r - 1, DerivMethod::Unique, &lim()).unwrap();
                    for j in 0..lower {
                        let fd = (fp.values()[j] - fm.values()[j]) / (2.0 * h);
                        let exact = full.values()[k + d * j];
                        assert!((fd - exact).abs() <= 1e-4 * scale, "d={d} r={r}: {fd} vs {exact}");
                    }
                }
            }
        }
    }

    #[test]
    fn step_rejects_mismatched_orders() {
        let a = HermiteUniqueVector::new(vec![1.0, 2.0], 2, 1).unwrap();
        let b = HermiteUniqueVector::new(vec![1.0, 2.0], 2, 1).unwrap();
        assert!(hermite_unique_step(&a, &b, &[0.0, 0.0], &DMatrix::identity(2, 2), &lim()).is_err());
    }
}

//! Symmetrizer-vector products `S(d, r) v` without forming `S(d, r)`.

use crate::error::{Error, Result};
use crate::indexing::strides;
use crate::limits::{checked_pow, Limits};
use crate::perm::{permutations, swap_digits};

/// A real vector of length `d^r` in p-order.
#[derive(Debug, Clone, PartialEq)]
pub struct KronVector {
    values: Vec<f64>,
    d: usize,
    r: usize,
}

impl KronVector {
    pub fn new(values: Vec<f64>, d: usize, r: usize) -> Result<Self> {
        let n = checked_pow(d, r).ok_or(Error::Overflow("d^r"))?;
        if values.len() != n || d == 0 {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} is not {d}^{r}",
                values.len()
            )));
        }
        Ok(KronVector { values, d, r })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
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

/// `w_i = (1/r!) Σ_σ v_{p(σ(p^{-1}(i)))}`, enumerating all `r!` permutations.
pub fn symv_direct(v: &KronVector, limits: &Limits) -> Result<KronVector> {
    let (d, r) = (v.d, v.r);
    limits.check_factorial_order(r)?;
    limits.check_len(d, r)?;
    if r <= 1 {
        return Ok(v.clone());
    }
    let perms = permutations(r);
    let nperm = perms.len() / r;
    let st = strides(d, r);
    let mut digits = vec![0usize; r];
    let mut out = Vec::with_capacity(v.len());
    for i in 0..v.len() {
        let mut rest = i;
        for dg in digits.iter_mut() {
            *dg = rest % d;
            rest /= d;
        }
        let mut acc = 0.0;
        for sigma in perms.chunks_exact(r) {
            let mut j = 0usize;
            for (l, &s) in sigma.iter().enumerate() {
                j += digits[s as usize] * st[l];
            }
            acc += v.values[j];
        }
        out.push(acc / nperm as f64);
    }
    Ok(KronVector { values: out, d, r })
}

/// Moves the coordinate at `i` to the position with tuple slots `j` and `k` (1-based) swapped.
pub fn transposition_reorder(v: &KronVector, j: usize, k: usize) -> Result<KronVector> {
    if j == 0 || j > k || k > v.r {
        return Err(Error::InvalidArgument(format!(
            "transposition ({j}, {k}) needs 1 <= j <= k <= {}",
            v.r
        )));
    }
    if j == k {
        return Ok(v.clone());
    }
    let st = strides(v.d, v.r);
    let (sj, sk) = (st[j - 1], st[k - 1]);
    // the swap is an involution, so gathering equals scattering
    let values = (0..v.len()).map(|i| v.values[swap_digits(i, v.d, sj, sk)]).collect();
    Ok(KronVector { values, d: v.d, r: v.r })
}

/// `S(d, r) v` through the factorization into transposition averages:
/// for `k = 2..=r`, `w ← (1/k) Σ_{j=1..k} τ_{jk} w`.
pub fn symv_recursive(v: &KronVector, limits: &Limits) -> Result<KronVector> {
    limits.check_len(v.d, v.r)?;
    Ok(KronVector {
        values: symv_slice(&v.values, v.d, v.r),
        d: v.d,
        r: v.r,
    })
}

/// Slice form of [`symv_recursive`]; `values.len()` must be `d^r`.
pub(crate) fn symv_slice(values: &[f64], d: usize, r: usize) -> Vec<f64> {
    let mut cur = values.to_vec();
    if r <= 1 || d == 1 {
        return cur;
    }
    let st = strides(d, r);
    let n = cur.len();
    let mut next = vec![0.0; n];
    for k in 2..=r {
        next.iter_mut().for_each(|x| *x = 0.0);
        let sk = st[k - 1];
        for j in 1..k {
            let sj = st[j - 1];
            for (i, acc) in next.iter_mut().enumerate() {
                *acc += cur[swap_digits(i, d, sj, sk)];
            }
        }
        let inv = 1.0 / k as f64;
        for (acc, &c) in next.iter_mut().zip(&cur) {
            *acc = (*acc + c) * inv;
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur
}

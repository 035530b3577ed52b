//! Symmetrizer matrices `S(d, r)`, commutation matrices and the `T(d, r)`
//! matrices whose cumulative product factorizes `S(d, r)`.
//!
//! Entries of `S(d, r)` are multiples of `1/r!`, so a matrix is stored as
//! integer counts plus a single denominator. The direct builder and the
//! recursive builder therefore agree exactly, not up to rounding.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::indexing::strides;
use crate::limits::{checked_pow, factorial_u64, Limits};
use crate::perm::{permutations, transposition_map};
use crate::sparse::CsrMatrix;

/// Sparse `d^r × d^r` symmetrizer: `entry(i, j) = count(i, j) / r!`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymmetrizerMatrix {
    d: usize,
    r: usize,
    denom: u64,
    counts: CsrMatrix,
}

impl SymmetrizerMatrix {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn order(&self) -> usize {
        self.r
    }

    /// Side length `d^r`.
    pub fn size(&self) -> usize {
        self.counts.size()
    }

    /// Scale denominator, `r!`.
    pub fn scale_denominator(&self) -> u64 {
        self.denom
    }

    pub fn counts(&self) -> &CsrMatrix {
        &self.counts
    }

    /// Integer count at 1-based `(i, j)`.
    pub fn count(&self, i: usize, j: usize) -> u64 {
        self.counts.get(i - 1, j - 1)
    }

    /// Real entry at 1-based `(i, j)`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.count(i, j) as f64 / self.denom as f64
    }

    pub fn nnz(&self) -> usize {
        self.counts.nnz()
    }

    /// Stored entries on or below the diagonal.
    pub fn nnz_lower(&self) -> usize {
        self.counts.triplets().filter(|&(i, j, _)| j <= i).count()
    }

    pub fn is_symmetric(&self) -> bool {
        self.counts.is_symmetric()
    }

    /// `S v`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.size() {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} for a {}-sided matrix",
                v.len(),
                self.size()
            )));
        }
        Ok(self.counts.apply_scaled(v, self.denom as f64))
    }

    /// Dense row-major copy; refused above `max_side`.
    pub fn to_dense(&self, max_side: usize) -> Result<Vec<Vec<f64>>> {
        let n = self.size();
        if n > max_side {
            return Err(Error::CapExceeded {
                what: "dense symmetrizer",
                requested: n as u128,
                limit: max_side as u128,
            });
        }
        let mut out = vec![vec![0.0; n]; n];
        for (i, j, c) in self.counts.triplets() {
            out[i][j] = c as f64 / self.denom as f64;
        }
        Ok(out)
    }

    /// Text export: header `d r scale_denominator`, then one `row col count` line per
    /// stored entry, 1-based, sorted by `(row, col)`.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{} {} {}", self.d, self.r, self.denom)?;
        for (i, j, c) in self.counts.triplets() {
            writeln!(w, "{} {} {}", i + 1, j + 1, c)?;
        }
        Ok(())
    }
}

/// Commutation matrix `K(p, q)`, kept as an index map: `(K v)[o] = v[map[o]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommutationMatrix {
    p: usize,
    q: usize,
    map: Vec<u32>,
}

impl CommutationMatrix {
    pub fn blocks(&self) -> (usize, usize) {
        (self.p, self.q)
    }

    pub fn size(&self) -> usize {
        self.map.len()
    }

    pub fn index_map(&self) -> &[u32] {
        &self.map
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.map.iter().map(|&k| v[k as usize]).collect()
    }

    /// Index map of `self * other`.
    pub fn compose(&self, other: &CommutationMatrix) -> Vec<u32> {
        self.map.iter().map(|&k| other.map[k as usize]).collect()
    }

    pub fn to_sparse(&self) -> CsrMatrix {
        CsrMatrix::permutation(&self.map)
    }
}

/// `K(p, q)` with `K vec(A) = vec(A^T)` for `A` of shape `p × q`.
pub fn commutation(p: usize, q: usize, limits: &Limits) -> Result<CommutationMatrix> {
    if p == 0 || q == 0 {
        return Err(Error::InvalidArgument("commutation blocks must be positive".into()));
    }
    let n = p.checked_mul(q).ok_or(Error::Overflow("p*q"))?;
    if n > limits.max_vector_len {
        return Err(Error::CapExceeded {
            what: "commutation matrix size",
            requested: n as u128,
            limit: limits.max_vector_len as u128,
        });
    }
    let mut map = vec![0u32; n];
    for i in 0..p {
        for j in 0..q {
            map[j + q * i] = (i + p * j) as u32;
        }
    }
    Ok(CommutationMatrix { p, q, map })
}

/// `T(d, r)` stored as the integer matrix `r · T(d, r)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TMatrix {
    d: usize,
    r: usize,
    scaled: CsrMatrix,
}

impl TMatrix {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn order(&self) -> usize {
        self.r
    }

    /// The integer matrix `r · T(d, r)`.
    pub fn scaled(&self) -> &CsrMatrix {
        &self.scaled
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.scaled.get(i - 1, j - 1) as f64 / self.r as f64
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.scaled.apply_scaled(v, self.r as f64)
    }
}

/// Number of non-zeros of `S(d, r)`: each class of tuples sharing a multi-index
/// `m` contributes a dense block of side `r! / prod(m_k!)`.
pub fn symmetrizer_nnz(d: usize, r: usize) -> Result<u128> {
    if d == 0 {
        return Ok(u128::from(r == 0));
    }
    let mut fact = vec![1u128; r + 1];
    for k in 1..=r {
        fact[k] = fact[k - 1] * k as u128;
    }
    fn walk(k: usize, left: usize, counts: &mut [usize], f: &mut dyn FnMut(&[usize])) {
        if k + 1 == counts.len() {
            counts[k] = left;
            f(counts);
            return;
        }
        for c in 0..=left {
            counts[k] = c;
            walk(k + 1, left - c, counts, f);
        }
    }
    let mut counts = vec![0usize; d];
    let mut total = Some(0u128);
    walk(0, r, &mut counts, &mut |m| {
        let block = m.iter().fold(fact[r], |acc, &c| acc / fact[c]);
        total = total.and_then(|t| t.checked_add(block * block));
    });
    total.ok_or(Error::Overflow("symmetrizer nnz"))
}

fn scalar_one() -> SymmetrizerMatrix {
    SymmetrizerMatrix {
        d: 0,
        r: 0,
        denom: 1,
        counts: CsrMatrix::identity(1),
    }
}

fn check_order(r: usize) -> Result<u64> {
    factorial_u64(r).ok_or(Error::Overflow("r!"))
}

/// Which loop the direct builder runs outermost.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectLoop {
    /// Over full positions `i`, enumerating permutations for each.
    Positions,
    /// Over permutations `σ`, mapping every position at once.
    Permutations,
}

/// The cheaper outer loop: positions when `d^r < r!`, permutations otherwise.
pub fn direct_loop_choice(d: usize, r: usize) -> DirectLoop {
    let n = checked_pow(d, r).unwrap_or(usize::MAX);
    match factorial_u64(r) {
        Some(f) if (n as u128) < f as u128 => DirectLoop::Positions,
        None => DirectLoop::Positions,
        _ => DirectLoop::Permutations,
    }
}

/// Builds `S(d, r)` from its definition: for every position `i` and permutation
/// `σ`, add one to entry `(i, p(σ(p^{-1}(i))))`.
pub fn symmetrizer_direct(d: usize, r: usize, limits: &Limits) -> Result<SymmetrizerMatrix> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    if r == 0 {
        return Ok(SymmetrizerMatrix { d, ..scalar_one() });
    }
    let n = limits.check_len(d, r)?;
    let denom = check_order(r)?;
    limits.check_factorial_order(r)?;
    let nnz = symmetrizer_nnz(d, r)?;
    let choice = direct_loop_choice(d, r);
    let buffer = match choice {
        DirectLoop::Positions => 0,
        DirectLoop::Permutations => n as u128 * denom as u128 * 8,
    };
    limits.check_bytes("direct symmetrizer", nnz * 12 + buffer)?;
    if n > u32::MAX as usize {
        return Err(Error::Overflow("symmetrizer side"));
    }

    let perms = permutations(r);
    let stride = strides(d, r);
    let counts = match choice {
        DirectLoop::Positions => {
            let mut row_ptr = Vec::with_capacity(n + 1);
            let mut cols = Vec::with_capacity(nnz as usize);
            let mut vals = Vec::with_capacity(nnz as usize);
            row_ptr.push(0);
            let mut digits = vec![0usize; r];
            let mut targets: Vec<u32> = Vec::with_capacity(denom as usize);
            for i in 0..n {
                let mut rest = i;
                for dg in digits.iter_mut() {
                    *dg = rest % d;
                    rest /= d;
                }
                targets.clear();
                for sigma in perms.chunks_exact(r) {
                    let j: usize = sigma.iter().zip(&stride).map(|(&s, &st)| digits[s as usize] * st).sum();
                    targets.push(j as u32);
                }
                targets.sort_unstable();
                for run in targets.chunk_by(|a, b| a == b) {
                    cols.push(run[0]);
                    vals.push(run.len() as u64);
                }
                row_ptr.push(cols.len());
            }
            CsrMatrix::from_parts(n, row_ptr, cols, vals)
        }
        DirectLoop::Permutations => {
            let mut digit_cols: Vec<Vec<u32>> = vec![vec![0; n]; r];
            for (l, col) in digit_cols.iter_mut().enumerate() {
                for (i, slot) in col.iter_mut().enumerate() {
                    *slot = ((i / stride[l]) % d) as u32;
                }
            }
            let mut keys: Vec<u64> = Vec::with_capacity(n * denom as usize);
            let mut target = vec![0usize; n];
            for sigma in perms.chunks_exact(r) {
                target.iter_mut().for_each(|t| *t = 0);
                for (l, &s) in sigma.iter().enumerate() {
                    let col = &digit_cols[s as usize];
                    let st = stride[l];
                    for (t, &dg) in target.iter_mut().zip(col) {
                        *t += dg as usize * st;
                    }
                }
                keys.extend(target.iter().enumerate().map(|(i, &j)| ((i as u64) << 32) | j as u64));
            }
            keys.sort_unstable();
            let mut row_ptr = vec![0usize; n + 1];
            let mut cols = Vec::with_capacity(nnz as usize);
            let mut vals = Vec::with_capacity(nnz as usize);
            for run in keys.chunk_by(|a, b| a == b) {
                let i = (run[0] >> 32) as usize;
                cols.push((run[0] & 0xffff_ffff) as u32);
                vals.push(run.len() as u64);
                row_ptr[i + 1] += 1;
            }
            for i in 0..n {
                row_ptr[i + 1] += row_ptr[i];
            }
            CsrMatrix::from_parts(n, row_ptr, cols, vals)
        }
    };
    Ok(SymmetrizerMatrix { d, r, denom, counts })
}

/// `r · T(d, r)` by the recursion
/// `(r+1) T(d,r+1) = (I ⊗ K)(r T(d,r) ⊗ I_d)(I ⊗ K) + I ⊗ K`, from `T(d,1) = I_d`.
pub fn t_matrix(d: usize, r: usize, limits: &Limits) -> Result<TMatrix> {
    if d == 0 || r == 0 {
        return Err(Error::InvalidArgument("T(d, r) needs d >= 1 and r >= 1".into()));
    }
    limits.check_len(d, r)?;
    let mut scaled = CsrMatrix::identity(d);
    for k in 2..=r {
        // swap of the two slowest digits of a k-digit index
        let swap = transposition_map(d, k, k - 1, k);
        scaled = scaled
            .kron_identity_right(d)
            .conjugate_by_involution(&swap)
            .add(&CsrMatrix::permutation(&swap));
    }
    Ok(TMatrix { d, r, scaled })
}

/// Builds `S(d, r)` by the T-matrix recursion:
/// `S = T = I_d`, `A = K(d, d)`; for `i = 2..=r`: `T ← A (T ⊗ I_d) A + A`,
/// `S ← (S ⊗ I_d) T`, and `A ← I_d ⊗ A` while `i < r`; finally divide by `r!`.
///
/// The running matrices are kept as integers (`i · T` and `i! · S`), so the
/// final division is the shared scale denominator.
pub fn symmetrizer_recursive(d: usize, r: usize, limits: &Limits) -> Result<SymmetrizerMatrix> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    if r == 0 {
        return Ok(SymmetrizerMatrix { d, ..scalar_one() });
    }
    let n = limits.check_len(d, r)?;
    let denom = check_order(r)?;
    let nnz = symmetrizer_nnz(d, r)?;
    limits.check_bytes("recursive symmetrizer", nnz * 36)?;
    if n > u32::MAX as usize {
        return Err(Error::Overflow("symmetrizer side"));
    }
    if r == 1 {
        return Ok(SymmetrizerMatrix {
            d,
            r,
            denom,
            counts: CsrMatrix::identity(d),
        });
    }
    let mut s = CsrMatrix::identity(d);
    let mut t = CsrMatrix::identity(d);
    let mut a: Vec<u32> = commutation(d, d, limits)?.map;
    for i in 2..=r {
        t = t
            .kron_identity_right(d)
            .conjugate_by_involution(&a)
            .add(&CsrMatrix::permutation(&a));
        s = s.kron_identity_right(d).matmul(&t, limits)?;
        if i < r {
            a = identity_kron_perm(d, &a);
        }
    }
    Ok(SymmetrizerMatrix {
        d,
        r,
        denom,
        counts: s,
    })
}

/// Index map of `I_d ⊗ A` in p-order layout.
fn identity_kron_perm(d: usize, a: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len() * d);
    for &ai in a {
        for k in 0..d as u32 {
            out.push(ai * d as u32 + k);
        }
    }
    out
}

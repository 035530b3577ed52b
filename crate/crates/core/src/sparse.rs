//! Compressed-row integer matrices with just the operations the symmetrizer
//! recursion needs. Kronecker products with identities and permutation
//! conjugations are index arithmetic; nothing dense is ever formed.

use crate::error::Result;
use crate::limits::Limits;

/// Square CSR matrix with `u64` entries; columns sorted within each row, no explicit zeros.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<u64>,
}

impl CsrMatrix {
    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            n,
            row_ptr: (0..=n).collect(),
            cols: (0..n as u32).collect(),
            vals: vec![1; n],
        }
    }

    /// Permutation matrix with a single 1 at `(i, perm[i])` in every row.
    pub fn permutation(perm: &[u32]) -> Self {
        CsrMatrix {
            n: perm.len(),
            row_ptr: (0..=perm.len()).collect(),
            cols: perm.to_vec(),
            vals: vec![1; perm.len()],
        }
    }

    /// Builds from unsorted `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut trip: Vec<(u32, u32, u64)>) -> Self {
        trip.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(trip.len());
        let mut vals: Vec<u64> = Vec::with_capacity(trip.len());
        let mut last: Option<(u32, u32)> = None;
        for (r, c, v) in trip {
            if v == 0 {
                continue;
            }
            if last == Some((r, c)) {
                *vals.last_mut().expect("previous entry exists") += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r as usize + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix { n, row_ptr, cols, vals }
    }

    pub(crate) fn from_parts(n: usize, row_ptr: Vec<usize>, cols: Vec<u32>, vals: Vec<u64>) -> Self {
        debug_assert_eq!(row_ptr.len(), n + 1);
        CsrMatrix { n, row_ptr, cols, vals }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[u64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    /// Entry at 0-based `(i, j)`.
    pub fn get(&self, i: usize, j: usize) -> u64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&(j as u32)) {
            Ok(k) => vals[k],
            Err(_) => 0,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        (0..self.n).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&c, &v)| (i, c as usize, v))
        })
    }

    pub fn is_symmetric(&self) -> bool {
        self.triplets().all(|(i, j, v)| self.get(j, i) == v)
    }

    /// `self ⊗ I_d` in p-order layout: `d` diagonal copies of `self`.
    pub fn kron_identity_right(&self, d: usize) -> Self {
        let n = self.n;
        let mut row_ptr = Vec::with_capacity(n * d + 1);
        let mut cols = Vec::with_capacity(self.nnz() * d);
        let mut vals = Vec::with_capacity(self.nnz() * d);
        row_ptr.push(0);
        for k in 0..d {
            let shift = (k * n) as u32;
            for i in 0..n {
                let (c, v) = self.row(i);
                cols.extend(c.iter().map(|&c| c + shift));
                vals.extend_from_slice(v);
                row_ptr.push(cols.len());
            }
        }
        CsrMatrix::from_parts(n * d, row_ptr, cols, vals)
    }

    /// `I_d ⊗ self` in p-order layout: `self` acts on the slow digits.
    pub fn kron_identity_left(&self, d: usize) -> Self {
        let n = self.n;
        let mut row_ptr = Vec::with_capacity(n * d + 1);
        let mut cols = Vec::with_capacity(self.nnz() * d);
        let mut vals = Vec::with_capacity(self.nnz() * d);
        row_ptr.push(0);
        for i in 0..n {
            let (c, v) = self.row(i);
            for k in 0..d {
                cols.extend(c.iter().map(|&c| c * d as u32 + k as u32));
                vals.extend_from_slice(v);
                row_ptr.push(cols.len());
            }
        }
        CsrMatrix::from_parts(n * d, row_ptr, cols, vals)
    }

    /// `P self P` for an involutive index permutation `perm` (`P` the matching permutation matrix).
    pub fn conjugate_by_involution(&self, perm: &[u32]) -> Self {
        debug_assert_eq!(perm.len(), self.n);
        let mut row_ptr = Vec::with_capacity(self.n + 1);
        let mut cols = Vec::with_capacity(self.nnz());
        let mut vals = Vec::with_capacity(self.nnz());
        row_ptr.push(0);
        let mut scratch: Vec<(u32, u64)> = Vec::new();
        for i in 0..self.n {
            let (c, v) = self.row(perm[i] as usize);
            scratch.clear();
            scratch.extend(c.iter().zip(v).map(|(&c, &v)| (perm[c as usize], v)));
            scratch.sort_unstable_by_key(|&(c, _)| c);
            for &(c, v) in &scratch {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        CsrMatrix::from_parts(self.n, row_ptr, cols, vals)
    }

    pub fn add(&self, other: &CsrMatrix) -> Self {
        debug_assert_eq!(self.n, other.n);
        let mut row_ptr = Vec::with_capacity(self.n + 1);
        let mut cols = Vec::with_capacity(self.nnz() + other.nnz());
        let mut vals = Vec::with_capacity(self.nnz() + other.nnz());
        row_ptr.push(0);
        for i in 0..self.n {
            let (ac, av) = self.row(i);
            let (bc, bv) = other.row(i);
            let (mut x, mut y) = (0, 0);
            while x < ac.len() || y < bc.len() {
                if y == bc.len() || (x < ac.len() && ac[x] < bc[y]) {
                    cols.push(ac[x]);
                    vals.push(av[x]);
                    x += 1;
                } else if x == ac.len() || bc[y] < ac[x] {
                    cols.push(bc[y]);
                    vals.push(bv[y]);
                    y += 1;
                } else {
                    cols.push(ac[x]);
                    vals.push(av[x] + bv[y]);
                    x += 1;
                    y += 1;
                }
            }
            row_ptr.push(cols.len());
        }
        CsrMatrix::from_parts(self.n, row_ptr, cols, vals)
    }

    /// Sparse product `self * other` (Gustavson, dense row accumulator).
    pub fn matmul(&self, other: &CsrMatrix, limits: &Limits) -> Result<Self> {
        debug_assert_eq!(self.n, other.n);
        let n = self.n;
        let mut acc = vec![0u64; n];
        let mut touched: Vec<u32> = Vec::new();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols: Vec<u32> = Vec::new();
        let mut vals: Vec<u64> = Vec::new();
        row_ptr.push(0);
        for i in 0..n {
            let (ac, av) = self.row(i);
            for (&k, &a) in ac.iter().zip(av) {
                let (bc, bv) = other.row(k as usize);
                for (&j, &b) in bc.iter().zip(bv) {
                    if acc[j as usize] == 0 {
                        touched.push(j);
                    }
                    acc[j as usize] += a * b;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                cols.push(j);
                vals.push(acc[j as usize]);
                acc[j as usize] = 0;
            }
            touched.clear();
            row_ptr.push(cols.len());
            if i % 4096 == 0 {
                limits.check_bytes("sparse product", (cols.len() as u128) * 12)?;
            }
        }
        Ok(CsrMatrix::from_parts(n, row_ptr, cols, vals))
    }

    /// `self * v` with entries scaled by `1 / denom`.
    pub fn apply_scaled(&self, v: &[f64], denom: f64) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let (c, w) = self.row(i);
                c.iter().zip(w).map(|(&c, &w)| w as f64 * v[c as usize]).sum::<f64>() / denom
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(m: &CsrMatrix) -> Vec<Vec<u64>> {
        (0..m.size()).map(|i| (0..m.size()).map(|j| m.get(i, j)).collect()).collect()
    }

    #[test]
    fn kron_layouts() {
        let m = CsrMatrix::from_triplets(2, vec![(0, 1, 3), (1, 0, 5)]);
        let right = dense(&m.kron_identity_right(2));
        assert_eq!(
            right,
            vec![vec![0, 3, 0, 0], vec![5, 0, 0, 0], vec![0, 0, 0, 3], vec![0, 0, 5, 0]]
        );
        let left = dense(&m.kron_identity_left(2));
        assert_eq!(
            left,
            vec![vec![0, 0, 3, 0], vec![0, 0, 0, 3], vec![5, 0, 0, 0], vec![0, 5, 0, 0]]
        );
    }

    #[test]
    fn product_and_sum() {
        let lim = Limits::default();
        let a = CsrMatrix::from_triplets(3, vec![(0, 0, 1), (0, 2, 2), (1, 1, 3), (2, 0, 4)]);
        let b = CsrMatrix::from_triplets(3, vec![(0, 1, 1), (2, 1, 1), (1, 2, 2)]);
        let p = a.matmul(&b, &lim).unwrap();
        assert_eq!(dense(&p), vec![vec![0, 3, 0], vec![0, 0, 6], vec![0, 4, 0]]);
        let s = a.add(&b);
        assert_eq!(dense(&s), vec![vec![1, 1, 2], vec![0, 3, 2], vec![4, 1, 0]]);
        let dup = CsrMatrix::from_triplets(2, vec![(1, 1, 2), (0, 0, 1), (1, 1, 3)]);
        assert_eq!(dense(&dup), vec![vec![1, 0], vec![0, 5]]);
    }

    #[test]
    fn conjugation() {
        let a = CsrMatrix::from_triplets(3, vec![(0, 1, 7), (2, 2, 1)]);
        // swap indices 0 and 2
        let c = a.conjugate_by_involution(&[2, 1, 0]);
        assert_eq!(dense(&c), vec![vec![1, 0, 0], vec![0, 0, 0], vec![0, 7, 0]]);
    }
}

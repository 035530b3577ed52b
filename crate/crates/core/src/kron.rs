//! Kronecker products of vectors laid out in p-order.
//!
//! `kron(a, b)[ia + len(a) * ib] = a[ia] * b[ib]`, i.e. the left factor owns the
//! fast digits. With this layout `e_{i_1} ⊗ ... ⊗ e_{i_r}` is the basis vector
//! at position `p(i_1, ..., i_r)`.

use nalgebra::DMatrix;

pub fn kron(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &bv in b {
        out.extend(a.iter().map(|&av| av * bv));
    }
    out
}

/// `x^{⊗k}`; the empty power is the scalar 1.
pub fn kron_power(x: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![1.0];
    for _ in 0..k {
        out = kron(x, &out);
    }
    out
}

/// Column-major vectorization.
pub fn vec_of(m: &DMatrix<f64>) -> Vec<f64> {
    m.as_slice().to_vec()
}

/// Computes `M^{⊗r} v` by applying `M` along each digit of a `d^r` vector.
pub fn apply_kron_power(m: &DMatrix<f64>, v: &[f64], r: usize) -> Vec<f64> {
    let d = m.nrows();
    debug_assert_eq!(m.ncols(), d);
    debug_assert_eq!(v.len(), d.pow(r as u32));
    let mut cur = v.to_vec();
    let mut next = vec![0.0; cur.len()];
    let mut stride = 1usize;
    for _ in 0..r {
        let block = stride * d;
        for base in (0..cur.len()).step_by(block) {
            for off in 0..stride {
                let start = base + off;
                for a in 0..d {
                    let mut acc = 0.0;
                    for b in 0..d {
                        acc += m[(a, b)] * cur[start + b * stride];
                    }
                    next[start + a * stride] = acc;
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
        stride = block;
    }
    cur
}

/// Contracts the first `k` pairs of digits with `vec(M_1), ..., vec(M_k)` in turn:
/// returns `[vec^T M_1 ⊗ ... ⊗ vec^T M_k ⊗ I] v`, a vector of length `len(v) / d^(2k)`.
pub fn contract_pairs(v: &[f64], mats: &[&DMatrix<f64>]) -> Vec<f64> {
    let mut cur = v.to_vec();
    for m in mats {
        let w = m.as_slice();
        let dd = w.len();
        cur = cur
            .chunks_exact(dd)
            .map(|chunk| chunk.iter().zip(w).map(|(a, b)| a * b).sum())
            .collect();
    }
    cur
}

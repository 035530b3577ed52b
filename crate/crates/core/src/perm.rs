//! Permutations of tuple slots.

use crate::indexing::strides;

/// All permutations of `0..r` in lexicographic order, flattened (`r!` rows of `r` entries).
pub fn permutations(r: usize) -> Vec<u8> {
    let mut cur: Vec<u8> = (0..r as u8).collect();
    let mut out = cur.clone();
    if r == 0 {
        return out;
    }
    loop {
        // next lexicographic permutation
        let Some(i) = (0..r - 1).rev().find(|&i| cur[i] < cur[i + 1]) else {
            return out;
        };
        let j = (i + 1..r).rev().find(|&j| cur[j] > cur[i]).expect("successor exists");
        cur.swap(i, j);
        cur[i + 1..].reverse();
        out.extend_from_slice(&cur);
    }
}

/// 0-based position reached from `i` by swapping tuple slots `j` and `k` (1-based).
#[inline]
pub(crate) fn swap_digits(i: usize, d: usize, sj: usize, sk: usize) -> usize {
    let a = (i / sj) % d;
    let b = (i / sk) % d;
    i + b * sj + a * sk - a * sj - b * sk
}

/// Index map of the transposition of slots `j` and `k` (1-based) on a `d^r` vector.
pub fn transposition_map(d: usize, r: usize, j: usize, k: usize) -> Vec<u32> {
    let st = strides(d, r);
    let n = st[r - 1] * d;
    let (sj, sk) = (st[j - 1], st[k - 1]);
    (0..n).map(|i| swap_digits(i, d, sj, sk) as u32).collect()
}

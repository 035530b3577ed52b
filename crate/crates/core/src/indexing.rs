//! Base-`d` index arithmetic for Kronecker-ordered vectors.
//!
//! A coordinate of a vector of length `d^r` is labelled by a tuple
//! `(i_1, ..., i_r)` with entries in `1..=d`. The linear position is
//!
//! ```text
//! p(i_1, ..., i_r) = 1 + sum_j (i_j - 1) d^(j-1)
//! ```
//!
//! so `i_1` is the fastest-varying digit. Every module in the crate uses this
//! single convention; Kronecker products `a ⊗ b` are laid out so that the
//! index of `a` is the fast digit (see [`crate::kron`]). Public positions are
//! 1-based, internal storage is 0-based.

use std::fmt;

use crate::error::{Error, Result};
use crate::limits::{binomial, checked_pow, Limits};

/// An element of PR(d, r): `r` entries, each in `1..=d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TupleIndex {
    entries: Vec<usize>,
    d: usize,
}

impl TupleIndex {
    pub fn new(entries: Vec<usize>, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        if let Some(&bad) = entries.iter().find(|&&e| e == 0 || e > d) {
            return Err(Error::IndexOutOfRange { index: bad, max: d });
        }
        Ok(TupleIndex { entries, d })
    }

    pub fn entries(&self) -> &[usize] {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn order(&self) -> usize {
        self.entries.len()
    }
}

impl fmt::Display for TupleIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, e) in self.entries.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, ")")
    }
}

/// Linear position `p(tuple)` in `1..=d^r`.
pub fn p(tuple: &TupleIndex) -> usize {
    let mut pos = 0usize;
    let mut stride = 1usize;
    for &e in &tuple.entries {
        pos += (e - 1) * stride;
        stride *= tuple.d;
    }
    pos + 1
}

/// Inverse of [`p`]: the tuple at 1-based position `i`.
pub fn p_inv(i: usize, d: usize, r: usize) -> Result<TupleIndex> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    let n = checked_pow(d, r).ok_or(Error::Overflow("d^r"))?;
    if i == 0 || i > n {
        return Err(Error::IndexOutOfRange { index: i, max: n });
    }
    let mut rest = i - 1;
    let entries = (0..r)
        .map(|_| {
            let digit = rest % d;
            rest /= d;
            digit + 1
        })
        .collect();
    Ok(TupleIndex { entries, d })
}

/// Strides `d^0, d^1, ..., d^(r-1)`.
pub(crate) fn strides(d: usize, r: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(r);
    let mut s = 1usize;
    for _ in 0..r {
        out.push(s);
        s *= d;
    }
    out
}

/// All of PR(d, r) in p-order, stored as a `d^r × r` table of 1-based entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermTable {
    d: usize,
    r: usize,
    data: Vec<u16>,
}

impl PermTable {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn order(&self) -> usize {
        self.r
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.r).unwrap_or(1)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Row at 1-based position `i`.
    pub fn row(&self, i: usize) -> &[u16] {
        let start = (i - 1) * self.r;
        &self.data[start..start + self.r]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u16]> {
        (1..=self.len()).map(move |i| self.row(i))
    }
}

/// Builds PR(d, r) column by column with the floor formula
/// `i_j = floor((i-1)/d^(j-1)) - d floor((i-1)/d^j) + 1`.
pub fn perm_table(d: usize, r: usize, limits: &Limits) -> Result<PermTable> {
    if d == 0 || r == 0 {
        return Err(Error::InvalidArgument("perm_table needs d >= 1 and r >= 1".into()));
    }
    if d > u16::MAX as usize {
        return Err(Error::InvalidArgument(format!("dimension {d} too large")));
    }
    let n = limits.check_len(d, r)?;
    limits.check_bytes("permutation table", (n as u128) * (r as u128) * 2)?;
    let mut data = vec![0u16; n * r];
    let mut stride = 1usize;
    for j in 0..r {
        let next = stride * d;
        for i in 0..n {
            data[i * r + j] = (i / stride - d * (i / next) + 1) as u16;
        }
        stride = next;
    }
    Ok(PermTable { d, r, data })
}

/// `N(d, r) = C(r + d - 1, r)`, the number of distinct multi-indices of order `r`.
pub fn unique_count(d: usize, r: usize) -> Result<usize> {
    if d == 0 {
        return Ok(usize::from(r == 0));
    }
    let c = binomial((r + d - 1) as u64, r as u64).ok_or(Error::Overflow("unique_count"))?;
    usize::try_from(c).map_err(|_| Error::Overflow("unique_count"))
}

/// An element of I(d, r): how many times each coordinate is differentiated.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DerivMultiIndex {
    counts: Vec<u32>,
}

impl DerivMultiIndex {
    pub fn new(counts: Vec<u32>) -> Self {
        DerivMultiIndex { counts }
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn order(&self) -> usize {
        self.counts.iter().map(|&c| c as usize).sum()
    }
}

impl fmt::Display for DerivMultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, c) in self.counts.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

pub fn tuple_to_multiindex(tuple: &TupleIndex) -> DerivMultiIndex {
    let mut counts = vec![0u32; tuple.d];
    for &e in &tuple.entries {
        counts[e - 1] += 1;
    }
    DerivMultiIndex { counts }
}

/// Ranks multi-indices of fixed `(d, r)` in lexicographic order of their counts.
///
/// This is only a canonical hash into `0..N(d, r)`; the ordering exposed to
/// callers is always first-occurrence order.
#[derive(Debug, Clone)]
pub(crate) struct MultiIndexRanker {
    d: usize,
    r: usize,
    // completions[k][s] = number of ways to distribute s over the last k coordinates
    completions: Vec<Vec<usize>>,
}

impl MultiIndexRanker {
    pub(crate) fn new(d: usize, r: usize) -> Result<Self> {
        let mut completions = vec![vec![0usize; r + 1]; d + 1];
        for (k, row) in completions.iter_mut().enumerate() {
            for (s, slot) in row.iter_mut().enumerate() {
                *slot = unique_count(k, s)?;
            }
        }
        Ok(MultiIndexRanker { d, r, completions })
    }

    pub(crate) fn rank(&self, counts: &[u32]) -> usize {
        debug_assert_eq!(counts.len(), self.d);
        let mut rank = 0usize;
        let mut remaining = self.r;
        for (k, &c) in counts.iter().enumerate().take(self.d.saturating_sub(1)) {
            let tail = self.d - k - 1;
            // multi-indices sharing the prefix with a smaller k-th count
            for v in 0..c as usize {
                rank += self.completions[tail][remaining - v];
            }
            remaining -= c as usize;
        }
        rank
    }
}

/// The N(d, r) multi-indices ordered by first occurrence in p-order, together
/// with the maps between full positions and unique positions.
#[derive(Debug, Clone)]
pub struct UniqueOrdering {
    d: usize,
    r: usize,
    list: Vec<DerivMultiIndex>,
    // 0-based: full position -> unique slot
    expansion: Vec<u32>,
    // 0-based: canonical rank -> unique slot
    canon_to_slot: Vec<u32>,
    ranker: MultiIndexRanker,
}

impl UniqueOrdering {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn order(&self) -> usize {
        self.r
    }

    pub fn len(&self) -> usize {
        self.list.len()
    }

    pub fn is_empty(&self) -> bool {
        self.list.is_empty()
    }

    pub fn multi_indices(&self) -> &[DerivMultiIndex] {
        &self.list
    }

    /// 1-based unique position of `m`, or `None` if `m` is not in I(d, r).
    pub fn position_of(&self, m: &DerivMultiIndex) -> Option<usize> {
        if m.dim() != self.d || m.order() != self.r {
            return None;
        }
        Some(self.canon_to_slot[self.ranker.rank(m.counts())] as usize + 1)
    }

    /// 1-based unique slot holding full position `i` (1-based).
    pub fn slot_of(&self, i: usize) -> usize {
        self.expansion[i - 1] as usize + 1
    }

    /// The expansion map as 1-based positions.
    pub fn expansion_map(&self) -> Vec<usize> {
        self.expansion.iter().map(|&s| s as usize + 1).collect()
    }

    pub(crate) fn expansion_zero_based(&self) -> &[u32] {
        &self.expansion
    }
}

/// Scans p-order once, assigning each multi-index the slot of its first occurrence.
pub fn unique_ordering(d: usize, r: usize, limits: &Limits) -> Result<UniqueOrdering> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    let n = limits.check_len(d, r)?;
    limits.check_bytes("expansion map", n as u128 * 4)?;
    let count = unique_count(d, r)?;
    let ranker = MultiIndexRanker::new(d, r)?;
    let mut canon_to_slot = vec![u32::MAX; count];
    let mut list = Vec::with_capacity(count);
    let mut expansion = Vec::with_capacity(n);
    let mut digits = vec![0usize; r];
    let mut counts = vec![0u32; d];
    counts[0] = r as u32;
    for _ in 0..n {
        let key = ranker.rank(&counts);
        let slot = if canon_to_slot[key] == u32::MAX {
            let s = list.len() as u32;
            canon_to_slot[key] = s;
            list.push(DerivMultiIndex { counts: counts.clone() });
            s
        } else {
            canon_to_slot[key]
        };
        expansion.push(slot);
        // advance the odometer, fastest digit first, updating counts incrementally
        for digit in digits.iter_mut() {
            counts[*digit] -= 1;
            if *digit + 1 < d {
                *digit += 1;
                counts[*digit] += 1;
                break;
            }
            *digit = 0;
            counts[0] += 1;
        }
    }
    Ok(UniqueOrdering {
        d,
        r,
        list,
        expansion,
        canon_to_slot,
        ranker,
    })
}

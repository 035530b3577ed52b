use crate::error::{Error, Result};

/// Resource limits applied before any large allocation or enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    /// Maximum length of a Kronecker vector (`d^r`).
    pub max_vector_len: usize,
    /// Maximum estimated bytes for a sparse matrix build.
    pub max_bytes: u64,
    /// Largest order whose `r!` permutations may be enumerated.
    pub max_factorial_order: usize,
    /// Largest `r + s` for multiset-permutation sums.
    pub max_multiset_order: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_vector_len: 1 << 26,
            max_bytes: 2 << 30,
            max_factorial_order: 10,
            max_multiset_order: 12,
        }
    }
}

impl Limits {
    pub fn with_max_bytes(mut self, bytes: u64) -> Self {
        self.max_bytes = bytes;
        self
    }

    /// Returns `d^r` if it fits under `max_vector_len`.
    pub fn check_len(&self, d: usize, r: usize) -> Result<usize> {
        let len = checked_pow(d, r).ok_or(Error::CapExceeded {
            what: "vector length d^r",
            requested: u128::MAX,
            limit: self.max_vector_len as u128,
        })?;
        if len > self.max_vector_len {
            return Err(Error::CapExceeded {
                what: "vector length d^r",
                requested: len as u128,
                limit: self.max_vector_len as u128,
            });
        }
        Ok(len)
    }

    pub fn check_bytes(&self, what: &'static str, bytes: u128) -> Result<()> {
        if bytes > self.max_bytes as u128 {
            return Err(Error::CapExceeded {
                what,
                requested: bytes,
                limit: self.max_bytes as u128,
            });
        }
        Ok(())
    }

    pub fn check_factorial_order(&self, r: usize) -> Result<()> {
        if r > self.max_factorial_order {
            return Err(Error::Budget(format!(
                "order {r} exceeds the permutation enumeration limit {}",
                self.max_factorial_order
            )));
        }
        Ok(())
    }

    pub fn check_multiset_order(&self, total: usize) -> Result<()> {
        if total > self.max_multiset_order {
            return Err(Error::Budget(format!(
                "r + s = {total} exceeds the multiset enumeration limit {}",
                self.max_multiset_order
            )));
        }
        Ok(())
    }
}

pub fn checked_pow(d: usize, r: usize) -> Option<usize> {
    let mut acc: usize = 1;
    for _ in 0..r {
        acc = acc.checked_mul(d)?;
    }
    Some(acc)
}

pub fn factorial_u64(r: usize) -> Option<u64> {
    (1..=r as u64).try_fold(1u64, |acc, k| acc.checked_mul(k))
}

pub fn factorial_f64(r: usize) -> f64 {
    (1..=r).fold(1.0, |acc, k| acc * k as f64)
}

/// Exact binomial coefficient, `None` on overflow.
pub fn binomial(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

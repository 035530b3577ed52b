//! Raw vector moments `E(X^{⊗r})` of `X ~ N(μ, Σ)`.

use crate::error::Result;
use crate::hermite::{closed_form_sum, expand_unique, full_recursion, hermite_direct, UniqueRecursion};
use crate::indexing::{tuple_to_multiindex, unique_ordering, TupleIndex};
use crate::kron::vec_of;
use crate::limits::Limits;
use crate::linalg::{GaussianParams, SignedQuadraticParams};
use crate::symvec::KronVector;

/// A `d^r` moment vector in p-order.
pub type MomentVector = KronVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentMethod {
    /// `r! S Σ_j 1/(j!(r-2j)!2^j) μ^{⊗(r-2j)} ⊗ (vec Σ)^{⊗j}`.
    Explicit,
    /// Closed-form Hermite polynomial at `μ` with the negated covariance.
    Hermite,
    /// Full-vector three-term recursion with `z = μ`, `V = -Σ`.
    Recursive,
    /// Unique-coordinate recursion with `z = μ`, `V = -Σ`, expanded.
    Unique,
}

pub fn moment_vector(g: &GaussianParams, r: usize, method: MomentMethod, limits: &Limits) -> Result<MomentVector> {
    let d = g.dim();
    limits.check_len(d, r)?;
    let mu = g.mean().as_slice();
    let values = match method {
        MomentMethod::Explicit => closed_form_sum(mu, &vec_of(g.cov()), 1.0, r),
        MomentMethod::Hermite => {
            let theta = SignedQuadraticParams::negated_covariance(g);
            return hermite_direct(mu, &theta, r, limits);
        }
        MomentMethod::Recursive => full_recursion(mu, &(-g.cov()), r),
        MomentMethod::Unique => {
            let u = UniqueRecursion::new(d, r, limits)?.run(mu, &(-g.cov()), r)?;
            return expand_unique(&u, limits);
        }
    };
    KronVector::new(values, d, r)
}

/// `E(X_{i_1} ⋯ X_{i_r})` for a 1-based tuple.
pub fn scalar_moment(g: &GaussianParams, tuple: &TupleIndex, limits: &Limits) -> Result<f64> {
    let d = g.dim();
    if tuple.dim() != d {
        return Err(crate::Error::DimensionMismatch(format!(
            "tuple over {} coordinates for a {d}-dimensional distribution",
            tuple.dim()
        )));
    }
    let r = tuple.order();
    let u = UniqueRecursion::new(d, r, limits)?.run(g.mean().as_slice(), &(-g.cov()), r)?;
    let ord = unique_ordering(d, r, limits)?;
    let slot = ord.position_of(&tuple_to_multiindex(tuple)).expect("tuple has order r");
    Ok(u.values()[slot - 1])
}

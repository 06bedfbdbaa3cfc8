//! Closed-form scaled proximal maps and the per-block subproblem built on
//! them.
//!
//! A query solves argmin_y g(y) + (1/(2·weight))·||y − anchor||², i.e. the
//! weight is the inverse of the quadratic coefficient. Every supported g is
//! separable, so all maps are coordinatewise and exact: no inner iteration
//! anywhere in the update path.

use crate::error::{Error, Result};
use crate::problem::{ProblemInstance, ProxTerm};
use crate::scalar::Scalar;

/// A scaled prox query. `weight` is 1/η for the block weight η in use, so
/// L1(w) soft-thresholds at w·weight.
#[derive(Debug, Clone)]
pub struct ScaledProxQuery<T> {
    pub anchor: Vec<T>,
    pub weight: T,
}

/// Exact minimizer of term(y) + (1/(2·weight))·||y − anchor||².
pub fn prox_apply<T: Scalar>(term: &ProxTerm<T>, query: &ScaledProxQuery<T>) -> Result<Vec<T>> {
    if !(query.weight > T::zero()) || !query.weight.is_finite() {
        return Err(Error::Parameter(format!(
            "prox weight must be positive and finite, got {}",
            query.weight
        )));
    }
    let mut out = query.anchor.clone();
    prox_in_place(term, query.weight, &mut out);
    Ok(out)
}

/// In-place prox on the hot path; weight validity is the caller's contract.
pub(crate) fn prox_in_place<T: Scalar>(term: &ProxTerm<T>, weight: T, z: &mut [T]) {
    debug_assert!(weight > T::zero() && weight.is_finite());
    match term {
        ProxTerm::Zero => {}
        ProxTerm::L1 { weight: l1 } => {
            // soft threshold; the kink |a| == thr maps to exactly 0
            let thr = *l1 * weight;
            for v in z.iter_mut() {
                let a = *v;
                *v = if a > thr {
                    a - thr
                } else if a < -thr {
                    a + thr
                } else {
                    T::zero()
                };
            }
        }
        ProxTerm::Box { lo, hi } => {
            for v in z.iter_mut() {
                *v = (*v).max(*lo).min(*hi);
            }
        }
        ProxTerm::NonNeg => {
            for v in z.iter_mut() {
                *v = (*v).max(T::zero());
            }
        }
    }
}

/// Block candidate shared by every execution engine: one code path so that
/// serial, delayed, async, and sync-parallel runs agree bitwise when fed the
/// same inputs.
///
/// combo = λ − β·r; out = A_iᵀ·combo; out_c = x_c − (grad_c − out_c)/η; prox.
pub(crate) fn compute_block_candidate<T: Scalar>(
    inst: &ProblemInstance<T>,
    i: usize,
    x: &[T],
    grad: &[T],
    r: &[T],
    lambda: &[T],
    beta: T,
    eta_i: T,
    combo: &mut [T],
    out: &mut [T],
) {
    debug_assert!(eta_i > T::zero());
    let range = inst.partition.block_range(i);
    debug_assert_eq!(grad.len(), range.len());
    debug_assert_eq!(out.len(), range.len());
    debug_assert_eq!(combo.len(), r.len());
    for (c, (l, rv)) in combo.iter_mut().zip(lambda.iter().zip(r)) {
        *c = *l - beta * *rv;
    }
    inst.constraint.blocks[i].tr_matvec_into(combo, out);
    let inv_eta = T::one() / eta_i;
    for (c, o) in range.clone().zip(out.iter_mut()) {
        *o = x[c] - (grad[c - range.start] - *o) * inv_eta;
    }
    prox_in_place(&inst.prox_terms[i], inv_eta, out);
}

/// One exact block subproblem solve: prox at anchor
/// xᵢ − (1/ηᵢ)·(grad − Aᵢᵀ(λ − β·r)) with weight 1/ηᵢ.
pub fn solve_block_subproblem<T: Scalar>(
    inst: &ProblemInstance<T>,
    i: usize,
    x: &[T],
    r: &[T],
    lambda: &[T],
    grad: &[T],
    beta: T,
    eta_i: T,
) -> Result<Vec<T>> {
    if !(eta_i > T::zero()) || !eta_i.is_finite() {
        return Err(Error::Parameter(format!(
            "block weight must be positive and finite, got {eta_i}"
        )));
    }
    let mut combo = vec![T::zero(); r.len()];
    let mut out = vec![T::zero(); inst.partition.block_dim(i)];
    compute_block_candidate(inst, i, x, grad, r, lambda, beta, eta_i, &mut combo, &mut out);
    Ok(out)
}

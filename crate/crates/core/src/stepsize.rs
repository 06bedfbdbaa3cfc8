//! Stepsize plans: the dual stepsize ρ and per-block primal weights ηᵢ for
//! the serial, delay-aware, and sync-parallel execution modes.
//!
//! Every constructor enforces ρ·m ≤ β and produces weights at or above the
//! serial bound Lᵢ + β‖Aᵢ‖². The only sanctioned way to run with weights
//! BELOW a mode's bound is `with_serial_weights`, which records the override
//! so traces stay honestly labeled.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::problem::{OracleForm, ProblemInstance};
use crate::scalar::Scalar;

/// Power-iteration budget for Lipschitz constants: deeper than the
/// constraint-norm cache since these are compared against dense eigenvalue
/// oracles at 1e-6 relative with no inflation.
const LIPSCHITZ_POWER_ROUNDS: usize = 2000;
const LIPSCHITZ_POWER_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PlanMode<T> {
    Serial,
    AsyncDelayAware { tau: usize, alpha: T },
    SyncParallel { group_size: usize },
}

impl<T: std::fmt::Display> PlanMode<T> {
    pub fn label(&self) -> String {
        match self {
            PlanMode::Serial => "serial".to_string(),
            PlanMode::AsyncDelayAware { tau, alpha } => format!("async(tau={tau},alpha={alpha})"),
            PlanMode::SyncParallel { group_size } => format!("sync(p={group_size})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepsizePlan<T> {
    pub beta: T,
    pub rho: T,
    pub eta: Vec<T>,
    pub mode: PlanMode<T>,
    /// True when eta was deliberately replaced by the serial rule while the
    /// mode says the run is delayed/parallel (the delay-insensitivity
    /// protocol). Bound validation is skipped for such plans.
    pub serial_override: bool,
}

impl<T: Scalar> StepsizePlan<T> {
    /// Structural and theorem-bound checks against the instance the plan
    /// will drive.
    pub fn validate(&self, inst: &ProblemInstance<T>) -> Result<()> {
        let m = inst.block_count();
        if !(self.beta > T::zero()) || !self.beta.is_finite() {
            return Err(Error::Parameter(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.rho > T::zero()) {
            return Err(Error::Parameter(format!("rho must be positive, got {}", self.rho)));
        }
        // small relative slack so beta/m round-trips through division
        let slack = T::cast(1.0 + 1e-12);
        if self.rho * T::cast(m as f64) > self.beta * slack {
            return Err(Error::Parameter(format!(
                "rho {} violates rho*m <= beta with m={m}, beta={}",
                self.rho, self.beta
            )));
        }
        if self.eta.len() != m {
            return Err(Error::Structural(format!(
                "{} weights for {m} blocks",
                self.eta.len()
            )));
        }
        if self.eta.iter().any(|e| !(*e > T::zero()) || !e.is_finite()) {
            return Err(Error::Parameter("weights must be positive and finite".into()));
        }
        if !self.serial_override {
            let l = &inst.smooth.lipschitz_blocks;
            let l_c = l.iter().fold(T::zero(), |a, b| a.max(*b));
            for i in 0..m {
                let beta_a_sq = self.beta * inst.constraint.per_block_sq_norm[i];
                // the floor the mode's theorem requires
                let floor = match self.mode {
                    PlanMode::AsyncDelayAware { tau, alpha } if tau > 0 && l_c > T::zero() => {
                        async_weight(l[i], l_c, inst.smooth.lipschitz_cross, m, tau, alpha, beta_a_sq)
                    }
                    _ => l[i] + beta_a_sq,
                };
                if self.eta[i] < floor * T::cast(1.0 - 1e-12) {
                    return Err(Error::Parameter(format!(
                        "eta[{i}] = {} below the required bound {floor}",
                        self.eta[i]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Replace the weights with the serial rule, keeping the mode. Used by
    /// the delay-insensitivity protocol where the same weights are run
    /// across all delays.
    pub fn with_serial_weights(mut self, inst: &ProblemInstance<T>) -> Self {
        self.eta = (0..inst.block_count())
            .map(|i| {
                serial_weight(
                    inst.smooth.lipschitz_blocks[i],
                    self.beta,
                    inst.constraint.per_block_sq_norm[i],
                )
            })
            .collect();
        self.serial_override = true;
        self
    }
}

/// The serial theorem bound for one block.
#[inline]
pub fn serial_weight<T: Scalar>(l_i: T, beta: T, a_sq_norm: T) -> T {
    l_i + beta * a_sq_norm
}

/// The delay-aware bound for one block (tau > 0, l_c > 0).
#[inline]
fn async_weight<T: Scalar>(
    l_i: T,
    l_c: T,
    l_r: T,
    m: usize,
    tau: usize,
    alpha: T,
    beta_a_sq: T,
) -> T {
    let mf = T::cast(m as f64);
    let tf = T::cast(tau as f64);
    let kappa = l_r / l_c;
    l_i + alpha * l_c + tf * l_i / mf + (kappa / alpha + T::cast(2.0)) * l_r * tf * tf / mf
        + beta_a_sq
}

/// Serial plan: rho = beta/m, eta[i] = Lᵢ + beta·‖Aᵢ‖².
pub fn serial_plan<T: Scalar>(inst: &ProblemInstance<T>, beta: T) -> Result<StepsizePlan<T>> {
    if !(beta > T::zero()) || !beta.is_finite() {
        return Err(Error::Parameter(format!("beta must be positive, got {beta}")));
    }
    let m = inst.block_count();
    let eta = (0..m)
        .map(|i| {
            serial_weight(
                inst.smooth.lipschitz_blocks[i],
                beta,
                inst.constraint.per_block_sq_norm[i],
            )
        })
        .collect();
    Ok(StepsizePlan {
        beta,
        rho: beta / T::cast(m as f64),
        eta,
        mode: PlanMode::Serial,
        serial_override: false,
    })
}

/// Delay-aware plan. At tau = 0 this returns exactly the serial plan (the
/// delay-free formula limit carries a spurious alpha·L_c term, so the
/// reduction to the serial rule is made explicit rather than interpolated);
/// only the mode tag differs. With every Lᵢ = 0 the Lipschitz terms all
/// vanish and the weights degenerate to beta·‖Aᵢ‖².
pub fn async_plan<T: Scalar>(
    inst: &ProblemInstance<T>,
    beta: T,
    tau: usize,
    alpha: T,
) -> Result<StepsizePlan<T>> {
    if !(alpha > T::zero()) || !alpha.is_finite() {
        return Err(Error::Parameter(format!("alpha must be positive, got {alpha}")));
    }
    let mut plan = serial_plan(inst, beta)?;
    plan.mode = PlanMode::AsyncDelayAware { tau, alpha };
    if tau == 0 {
        return Ok(plan);
    }
    let m = inst.block_count();
    let l = &inst.smooth.lipschitz_blocks;
    let l_c = l.iter().fold(T::zero(), |a, b| a.max(*b));
    let l_r = inst.smooth.lipschitz_cross;
    if l_c == T::zero() {
        // f contributes nothing; weights stay beta*||A_i||^2
        return Ok(plan);
    }
    plan.eta = (0..m)
        .map(|i| {
            async_weight(
                l[i],
                l_c,
                l_r,
                m,
                tau,
                alpha,
                beta * inst.constraint.per_block_sq_norm[i],
            )
        })
        .collect();
    Ok(plan)
}

/// Weights for one sync-parallel round: every block in the group shares
/// eta = Σ_{j∈group}(Lⱼ + beta·‖Aⱼ‖²). Returned per group slot.
pub fn sync_parallel_plan<T: Scalar>(
    inst: &ProblemInstance<T>,
    beta: T,
    group: &[usize],
) -> Result<Vec<T>> {
    if group.is_empty() {
        return Err(Error::Parameter("sync-parallel group must be nonempty".into()));
    }
    let m = inst.block_count();
    let mut w = T::zero();
    for &j in group {
        if j >= m {
            return Err(Error::Parameter(format!("group block {j} out of range ({m} blocks)")));
        }
        w += serial_weight(
            inst.smooth.lipschitz_blocks[j],
            beta,
            inst.constraint.per_block_sq_norm[j],
        );
    }
    Ok(vec![w; group.len()])
}

/// Per-block gradient Lipschitz constants and the cross-block constant of
/// the full gradient map, from the explicit quadratic structure. All oracle
/// forms are quadratic (or zero), so no probing fallback is needed: Lᵢ is
/// the top eigenvalue of the i-th diagonal Hessian block and L_r the largest
/// spectral norm among column slabs Hessian[:, block i].
pub fn estimate_lipschitz<T: Scalar>(inst: &ProblemInstance<T>) -> (Vec<T>, T) {
    let m = inst.block_count();
    let part = &inst.partition;
    match &inst.smooth.form {
        OracleForm::Zero => (vec![T::zero(); m], T::zero()),
        OracleForm::DenseQuadratic { q, .. } => {
            let mut l = Vec::with_capacity(m);
            let mut l_r = T::zero();
            for i in 0..m {
                let range = part.block_range(i);
                let ni = range.len();
                // top eigenvalue of the symmetric diagonal block
                let li = linalg::power_iter_sym_with(
                    ni,
                    LIPSCHITZ_POWER_ROUNDS,
                    LIPSCHITZ_POWER_TOL,
                    |v, out| {
                        for (row, o) in range.clone().zip(out.iter_mut()) {
                            let qrow = &q.row(row)[range.clone()];
                            *o += linalg::dot(qrow, v);
                        }
                    },
                );
                l.push(li);
                // squared spectral norm of the n x n_i column slab
                let slab_sq = linalg::power_iter_sym_with(
                    ni,
                    LIPSCHITZ_POWER_ROUNDS,
                    LIPSCHITZ_POWER_TOL,
                    |v, out| {
                        // t = Q[:, range] v ; out += tᵀ restricted back
                        let n = q.rows;
                        let mut t = vec![T::zero(); n];
                        for (row, tv) in t.iter_mut().enumerate() {
                            let qrow = &q.row(row)[range.clone()];
                            *tv = linalg::dot(qrow, v);
                        }
                        for (row, tv) in t.iter().enumerate() {
                            let qrow = &q.row(row)[range.clone()];
                            for (o, qv) in out.iter_mut().zip(qrow) {
                                *o += *qv * *tv;
                            }
                        }
                    },
                );
                l_r = l_r.max(slab_sq.sqrt());
            }
            (l, l_r)
        }
        OracleForm::GramQuadratic { w, .. } => {
            let mut l = Vec::with_capacity(m);
            let mut l_r = T::zero();
            let rows = w.rows;
            for i in 0..m {
                let range = part.block_range(i);
                let ni = range.len();
                let cols: Vec<usize> = range.clone().collect();
                // v -> W_iᵀ (W_i v): top eigenvalue is Lᵢ
                let li = linalg::power_iter_sym_with(
                    ni,
                    LIPSCHITZ_POWER_ROUNDS,
                    LIPSCHITZ_POWER_TOL,
                    |v, out| {
                        let mut wv = vec![T::zero(); rows];
                        for (slot, &c) in cols.iter().enumerate() {
                            let (ri, vs) = w.col(c);
                            let vc = v[slot];
                            if vc != T::zero() {
                                for (rr, val) in ri.iter().zip(vs) {
                                    wv[*rr] += *val * vc;
                                }
                            }
                        }
                        for (slot, &c) in cols.iter().enumerate() {
                            let (ri, vs) = w.col(c);
                            let mut acc = T::zero();
                            for (rr, val) in ri.iter().zip(vs) {
                                acc += *val * wv[*rr];
                            }
                            out[slot] += acc;
                        }
                    },
                );
                l.push(li);
                // v -> W_iᵀ W Wᵀ W_i v: top eigenvalue is ||Gram[:, block]||²
                let slab_sq = linalg::power_iter_sym_with(
                    ni,
                    LIPSCHITZ_POWER_ROUNDS,
                    LIPSCHITZ_POWER_TOL,
                    |v, out| {
                        let mut wv = vec![T::zero(); rows];
                        for (slot, &c) in cols.iter().enumerate() {
                            let (ri, vs) = w.col(c);
                            let vc = v[slot];
                            if vc != T::zero() {
                                for (rr, val) in ri.iter().zip(vs) {
                                    wv[*rr] += *val * vc;
                                }
                            }
                        }
                        let mut g = vec![T::zero(); w.cols];
                        w.tr_matvec_into(&wv, &mut g);
                        let mut wg = vec![T::zero(); rows];
                        w.matvec_add(&g, &mut wg);
                        for (slot, &c) in cols.iter().enumerate() {
                            let (ri, vs) = w.col(c);
                            let mut acc = T::zero();
                            for (rr, val) in ri.iter().zip(vs) {
                                acc += *val * wg[*rr];
                            }
                            out[slot] += acc;
                        }
                    },
                );
                l_r = l_r.max(slab_sq.sqrt());
            }
            (l, l_r)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMat;
    use crate::problem::{
        BlockMatrix, BlockPartition, ConstraintBlocks, ProxTerm, SmoothOracle,
    };

    fn instance_with(l: Vec<f64>, a_entries: Vec<f64>) -> ProblemInstance<f64> {
        let m = l.len();
        let partition = BlockPartition::uniform(m, 1);
        let blocks = a_entries
            .iter()
            .map(|&v| BlockMatrix::Dense(DenseMat::from_rows(1, 1, vec![v]).unwrap()))
            .collect();
        let constraint = ConstraintBlocks::new(blocks, vec![0.0]).unwrap();
        let smooth = SmoothOracle::new(OracleForm::Zero, l, 0.0).unwrap();
        ProblemInstance {
            partition,
            constraint,
            smooth,
            prox_terms: vec![ProxTerm::Zero; m],
            optimum: None,
            meta: None,
        }
    }

    #[test]
    fn serial_weight_formula() {
        // direct evaluation of the bound: L = 2, beta = 10, ||A||^2 = 0.25
        assert_eq!(serial_weight(2.0, 10.0, 0.25), 4.5);
    }

    #[test]
    fn serial_plan_rho_and_weights() {
        let inst = instance_with(vec![0.0, 0.0], vec![1.0, 2.0]);
        let plan = serial_plan(&inst, 6.0).unwrap();
        assert_eq!(plan.rho, 3.0);
        for (e, a2) in plan.eta.iter().zip(&inst.constraint.per_block_sq_norm) {
            assert_eq!(*e, 6.0 * a2);
        }
        plan.validate(&inst).unwrap();
        assert!(serial_plan(&inst, 0.0).is_err());
    }

    #[test]
    fn async_tau_zero_is_serial_bitwise() {
        let inst = instance_with(vec![1.0, 3.0], vec![0.5, 0.25]);
        let s = serial_plan(&inst, 2.0).unwrap();
        let a = async_plan(&inst, 2.0, 0, 1.0).unwrap();
        assert_eq!(s.eta, a.eta);
        assert_eq!(s.rho, a.rho);
        assert_eq!(a.mode, PlanMode::AsyncDelayAware { tau: 0, alpha: 1.0 });
    }

    #[test]
    fn async_weight_reference_value() {
        // L_i = L_c = L_r = 1, m = 2000, tau = 10, alpha = 1, beta term 0:
        // 1 + 1 + 10/2000 + 3*100/2000 = 2.155
        let w: f64 = async_weight(1.0, 1.0, 1.0, 2000, 10, 1.0, 0.0);
        assert!((w - 2.155).abs() < 1e-12, "w = {w}");
    }

    #[test]
    fn async_monotone_in_tau_and_dominates_serial() {
        let mut inst = instance_with(vec![1.0, 0.5, 2.0], vec![0.5, 0.25, 1.0]);
        inst.smooth.lipschitz_cross = 2.5;
        let mut prev = async_plan(&inst, 1.5, 0, 1.0).unwrap();
        let serial = serial_plan(&inst, 1.5).unwrap();
        for tau in [5usize, 10, 20, 40] {
            let plan = async_plan(&inst, 1.5, tau, 1.0).unwrap();
            for i in 0..3 {
                assert!(plan.eta[i] >= prev.eta[i]);
                assert!(plan.eta[i] >= serial.eta[i]);
            }
            plan.validate(&inst).unwrap();
            prev = plan;
        }
    }

    #[test]
    fn async_alpha_sweet_spot() {
        // eta(alpha) is minimized near alpha* = sqrt(kappa L_r tau^2/(m L_c))
        let mut inst = instance_with(vec![2.0, 2.0], vec![0.5, 0.5]);
        inst.smooth.lipschitz_cross = 3.0;
        let tau = 8;
        let (lc, lr, m) = (2.0f64, 3.0f64, 2.0f64);
        let kappa = lr / lc;
        let astar = (kappa * lr * (tau as f64).powi(2) / (m * lc)).sqrt();
        let at = |a: f64| async_plan(&inst, 1.0, tau, a).unwrap().eta[0];
        assert!(at(astar) <= at(astar / 2.0) + 1e-12);
        assert!(at(astar) <= at(astar * 2.0) + 1e-12);
    }

    #[test]
    fn async_degenerate_all_zero_lipschitz() {
        let inst = instance_with(vec![0.0, 0.0], vec![1.0, 4.0]);
        let plan = async_plan(&inst, 3.0, 7, 1.0).unwrap();
        for (e, a2) in plan.eta.iter().zip(&inst.constraint.per_block_sq_norm) {
            assert_eq!(*e, 3.0 * a2);
        }
    }

    #[test]
    fn sync_plan_sums_group() {
        let inst = instance_with(vec![0.0, 0.0], vec![1.0, 1.0]);
        // craft L so that serial weights are exactly 2 and 3
        let mut inst = inst;
        inst.smooth.lipschitz_blocks = vec![
            2.0 - 1.0 * inst.constraint.per_block_sq_norm[0],
            3.0 - 1.0 * inst.constraint.per_block_sq_norm[1],
        ];
        let w = sync_parallel_plan(&inst, 1.0, &[0, 1]).unwrap();
        assert_eq!(w, vec![5.0, 5.0]);
        let single = sync_parallel_plan(&inst, 1.0, &[1]).unwrap();
        let serial = serial_plan(&inst, 1.0).unwrap();
        assert_eq!(single[0], serial.eta[1]);
        assert!(sync_parallel_plan(&inst, 1.0, &[]).is_err());
        assert!(sync_parallel_plan(&inst, 1.0, &[9]).is_err());
    }

    #[test]
    fn lipschitz_zero_oracle() {
        let inst = instance_with(vec![0.0, 0.0], vec![1.0, 1.0]);
        let (l, lr) = estimate_lipschitz(&inst);
        assert_eq!(l, vec![0.0, 0.0]);
        assert_eq!(lr, 0.0);
    }

    #[test]
    fn lipschitz_identity_quadratic() {
        let n = 4;
        let partition = BlockPartition::uniform(n, 1);
        let mut q: DenseMat<f64> = DenseMat::zeros(n, n);
        for i in 0..n {
            q.data[i * n + i] = 1.0;
        }
        let smooth =
            SmoothOracle::new(OracleForm::DenseQuadratic { q, c: vec![0.0; n] }, vec![0.0; n], 0.0)
                .unwrap();
        let blocks = (0..n)
            .map(|_| BlockMatrix::Dense(DenseMat::from_rows(1, 1, vec![1.0]).unwrap()))
            .collect();
        let constraint = ConstraintBlocks::new(blocks, vec![0.0]).unwrap();
        let inst = ProblemInstance {
            partition,
            constraint,
            smooth,
            prox_terms: vec![ProxTerm::Zero; n],
            optimum: None,
            meta: None,
        };
        let (l, lr) = estimate_lipschitz(&inst);
        for li in &l {
            assert!((li - 1.0).abs() < 1e-10);
        }
        assert!((lr - 1.0).abs() < 1e-10);
    }

    #[test]
    fn validate_rejects_bad_plans() {
        let inst = instance_with(vec![1.0, 1.0], vec![1.0, 1.0]);
        let mut plan = serial_plan(&inst, 2.0).unwrap();
        plan.rho = 1.5; // rho*m = 3 > beta = 2
        assert!(plan.validate(&inst).is_err());
        let mut plan = serial_plan(&inst, 2.0).unwrap();
        plan.eta[0] *= 0.5;
        assert!(plan.validate(&inst).is_err());
        let plan = serial_plan(&inst, 2.0).unwrap().with_serial_weights(&inst);
        plan.validate(&inst).unwrap();
    }

    #[test]
    fn override_exempts_delay_bound() {
        let inst = instance_with(vec![1.0, 1.0], vec![1.0, 1.0]);
        let full = async_plan(&inst, 2.0, 12, 1.0).unwrap();
        full.validate(&inst).unwrap();
        // serial weights under an async mode: rejected unless flagged
        let mut forced = full.clone();
        forced.eta = serial_plan(&inst, 2.0).unwrap().eta;
        assert!(forced.validate(&inst).is_err());
        let flagged = async_plan(&inst, 2.0, 12, 1.0).unwrap().with_serial_weights(&inst);
        flagged.validate(&inst).unwrap();
        assert!(flagged.serial_override);
    }
}

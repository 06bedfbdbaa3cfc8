//! The serial randomized block update loop: sample a block, solve its prox
//! subproblem against the current residual and multipliers, then refresh
//! r and λ incrementally. One λ update per block update, so the iteration
//! counter k counts both.
//!
//! Every execution mode (delayed, async, sync-parallel) funnels its state
//! mutations through `SaddleState::apply_block_update`, which is what makes
//! the bitwise reduction checks between the engines meaningful.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::linalg;
use crate::problem::ProblemInstance;
use crate::prox::compute_block_candidate;
use crate::sampling::sample_block;
use crate::scalar::Scalar;
use crate::stepsize::StepsizePlan;
use crate::trace::{RunTrace, TraceRow};

/// The iterate triple (x, r, λ) plus the iteration counter and the ergodic
/// accumulator.
///
/// `ergodic_sum` holds, lazily, Σ_{j=1}^{k-1} x^j per coordinate: a block's
/// coordinates are only credited when overwritten (or at read time), so an
/// update costs O(block dim) regardless of n. `ergodic_count` is k − 1: the
/// K for which the running average is (x^{K+1} + ergodic_sum/m)/(1 + K/m).
#[derive(Debug, Clone, PartialEq)]
pub struct SaddleState<T> {
    pub x: Vec<T>,
    pub r: Vec<T>,
    pub lambda: Vec<T>,
    pub k: u64,
    pub ergodic_sum: Vec<T>,
    /// iterate index at which each coordinate's current value was written;
    /// 0 means it still holds its initial value
    last_assigned: Vec<u64>,
    /// debug mode: every post-update iterate, for the store-all oracle
    pub history: Option<Vec<Vec<T>>>,
    scratch_q: Vec<T>,
    scratch_block: Vec<T>,
    scratch_out: Vec<T>,
    scratch_delta: Vec<T>,
}

impl<T: Scalar> SaddleState<T> {
    /// Fresh state at x⁰ (default 0), λ⁰ = 0, r⁰ = Ax⁰ − b.
    pub fn new(inst: &ProblemInstance<T>, x0: Option<Vec<T>>) -> Result<Self> {
        let n = inst.partition.total_dim;
        let q = inst.constraint.num_rows();
        let x = match x0 {
            Some(v) => {
                if v.len() != n {
                    return Err(Error::Structural(format!(
                        "x0 has length {}, instance dimension is {n}",
                        v.len()
                    )));
                }
                v
            }
            None => vec![T::zero(); n],
        };
        let r = inst.residual(&x);
        let max_block = (0..inst.block_count())
            .map(|i| inst.partition.block_dim(i))
            .max()
            .unwrap_or(0);
        Ok(SaddleState {
            x,
            r,
            lambda: vec![T::zero(); q],
            k: 0,
            ergodic_sum: vec![T::zero(); n],
            last_assigned: vec![0; n],
            history: None,
            scratch_q: vec![T::zero(); q],
            scratch_block: vec![T::zero(); max_block],
            scratch_out: vec![T::zero(); max_block],
            scratch_delta: vec![T::zero(); max_block],
        })
    }

    /// Turn on iterate recording (clones every post-update x).
    pub fn enable_history(&mut self) {
        self.history = Some(Vec::new());
    }

    /// K = k − 1, the count entering the ergodic denominator 1 + K/m.
    pub fn ergodic_count(&self) -> u64 {
        self.k.saturating_sub(1)
    }

    pub fn residual_norm(&self) -> T {
        linalg::nrm2(&self.r)
    }

    /// ‖r − (Ax − b)‖: how far the incremental recursion has drifted from
    /// the directly recomputed residual.
    pub fn residual_drift(&self, inst: &ProblemInstance<T>) -> T {
        let direct = inst.residual(&self.x);
        let mut acc = T::zero();
        for (a, b) in self.r.iter().zip(&direct) {
            let d = *a - *b;
            acc += d * d;
        }
        acc.sqrt()
    }

    /// Commit a new value for block i: credit the ergodic sum for the
    /// outgoing values, write the block, push r by A_i·Δ, step λ, bump k.
    pub(crate) fn apply_block_update(
        &mut self,
        inst: &ProblemInstance<T>,
        rho: T,
        i: usize,
        new_block: &[T],
    ) {
        let range = inst.partition.block_range(i);
        debug_assert_eq!(new_block.len(), range.len());
        let t_new = self.k + 1;
        let mut delta = std::mem::take(&mut self.scratch_delta);
        delta.clear();
        for (off, c) in range.clone().enumerate() {
            // outgoing value held for iterates max(last,1) .. t_new-1
            let covered = self.last_assigned[c].max(1);
            if t_new > covered {
                self.ergodic_sum[c] += self.x[c] * T::cast((t_new - covered) as f64);
            }
            self.last_assigned[c] = t_new;
            delta.push(new_block[off] - self.x[c]);
            self.x[c] = new_block[off];
        }
        inst.constraint.blocks[i].matvec_add(&delta, &mut self.r);
        for (l, rv) in self.lambda.iter_mut().zip(&self.r) {
            *l -= rho * *rv;
        }
        self.k = t_new;
        delta.resize(self.scratch_block.len(), T::zero());
        self.scratch_delta = delta;
        if let Some(h) = &mut self.history {
            h.push(self.x.clone());
        }
    }

    /// One update of a chosen block: gradient, prox candidate, commit.
    /// Engines that sample blocks elsewhere (replay, delay simulation) come
    /// in through here.
    pub fn step_at(&mut self, inst: &ProblemInstance<T>, plan: &StepsizePlan<T>, i: usize) {
        let ni = inst.partition.block_dim(i);
        let mut grad = std::mem::take(&mut self.scratch_block);
        let mut combo = std::mem::take(&mut self.scratch_q);
        let mut out = std::mem::take(&mut self.scratch_out);
        grad.resize(ni, T::zero());
        out.resize(ni, T::zero());
        inst.block_grad_at(&self.x, i, &mut grad);
        compute_block_candidate(
            inst,
            i,
            &self.x,
            &grad[..ni],
            &self.r,
            &self.lambda,
            plan.beta,
            plan.eta[i],
            &mut combo,
            &mut out[..ni],
        );
        self.scratch_q = combo;
        self.apply_block_update(inst, plan.rho, i, &out[..ni]);
        grad.resize(self.scratch_delta.len().max(ni), T::zero());
        out.resize(grad.len(), T::zero());
        self.scratch_block = grad;
        self.scratch_out = out;
    }

    /// One randomized update: uniform block choice, then `step_at`.
    pub fn step(
        &mut self,
        inst: &ProblemInstance<T>,
        plan: &StepsizePlan<T>,
        rng: &mut impl rand::Rng,
    ) {
        let i = sample_block(rng, inst.block_count());
        self.step_at(inst, plan, i);
    }

    /// The running average (x^{K+1} + (1/m)Σ_{k=1}^K x^k)/(1 + K/m) with
    /// K = k − 1. Lazy credits are completed on the fly; the state is not
    /// mutated. Calling before any update is a state error.
    pub fn ergodic_point(&self, m: usize) -> Result<Vec<T>> {
        if self.k == 0 {
            return Err(Error::State("ergodic point requested before any update".into()));
        }
        let t = self.k;
        let mf = T::cast(m as f64);
        let denom = T::one() + T::cast((t - 1) as f64) / mf;
        let mut out = Vec::with_capacity(self.x.len());
        for (c, xv) in self.x.iter().enumerate() {
            let covered = self.last_assigned[c].max(1);
            let pending = if t > covered {
                *xv * T::cast((t - covered) as f64)
            } else {
                T::zero()
            };
            out.push((*xv + (self.ergodic_sum[c] + pending) / mf) / denom);
        }
        Ok(out)
    }
}

/// Free-function forms of the step operations, for callers that read better
/// with explicit state threading.
pub fn step<T: Scalar>(
    inst: &ProblemInstance<T>,
    state: &mut SaddleState<T>,
    plan: &StepsizePlan<T>,
    rng: &mut impl rand::Rng,
) {
    state.step(inst, plan, rng);
}

pub fn step_at<T: Scalar>(
    inst: &ProblemInstance<T>,
    state: &mut SaddleState<T>,
    plan: &StepsizePlan<T>,
    i: usize,
) {
    state.step_at(inst, plan, i);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule<T> {
    pub feas_tol: T,
    pub obj_tol: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig<T> {
    pub plan: StepsizePlan<T>,
    pub max_epochs: u64,
    pub seed: u64,
    /// epochs between trace records; the final epoch is always recorded
    pub trace_every: u64,
    /// stop early only when BOTH tolerances hold on the running iterate
    pub stop: Option<StopRule<T>>,
    /// initial point; None means the origin
    pub x0: Option<Vec<T>>,
    /// when false, wall_ms is written as 0 so traces are byte-deterministic
    pub timing: bool,
}

impl<T: Scalar> RunConfig<T> {
    pub fn new(plan: StepsizePlan<T>, max_epochs: u64, seed: u64) -> Self {
        RunConfig { plan, max_epochs, seed, trace_every: 1, stop: None, x0: None, timing: false }
    }

    pub fn validate(&self, inst: &ProblemInstance<T>) -> Result<()> {
        if self.trace_every == 0 {
            return Err(Error::Parameter("trace_every must be at least 1".into()));
        }
        if let Some(s) = &self.stop {
            if !(s.feas_tol >= T::zero()) || !(s.obj_tol >= T::zero()) {
                return Err(Error::Parameter("stop tolerances must be nonnegative".into()));
            }
        }
        self.plan.validate(inst)
    }
}

/// Objective gap against the reference optimum, when one is attached.
pub(crate) fn objective_error<T: Scalar>(inst: &ProblemInstance<T>, x: &[T]) -> Option<T> {
    let fstar = inst.optimum.as_ref()?.f?;
    Some((inst.objective(x) - fstar).abs())
}

pub(crate) fn stop_met<T: Scalar>(stop: &Option<StopRule<T>>, feas: T, obj_err: Option<T>) -> bool {
    let Some(rule) = stop else { return false };
    let obj_ok = match obj_err {
        Some(e) => e <= rule.obj_tol,
        // no reference optimum: the objective criterion cannot be checked,
        // so it never counts as met
        None => false,
    };
    feas <= rule.feas_tol && obj_ok
}

/// Fill the end-of-run ergodic summary: the average's objective gap and its
/// DIRECTLY recomputed constraint violation (not the maintained r).
pub(crate) fn finalize_ergodic<T: Scalar>(
    inst: &ProblemInstance<T>,
    state: &SaddleState<T>,
    trace: &mut RunTrace<T>,
) {
    if state.k == 0 {
        return;
    }
    let xbar = state
        .ergodic_point(inst.block_count())
        .expect("k > 0 so the ergodic point exists");
    trace.final_ergodic_feas = Some(linalg::nrm2(&inst.residual(&xbar)));
    trace.final_ergodic_obj_err = objective_error(inst, &xbar);
}

/// Run Algorithm 1 for max_epochs epochs (m block updates each), recording
/// per-epoch metrics. The snapshot convention: metrics are measured after
/// the last update of the epoch.
pub fn run<T: Scalar>(
    inst: &ProblemInstance<T>,
    config: &RunConfig<T>,
) -> Result<(SaddleState<T>, RunTrace<T>)> {
    inst.validate()?;
    config.validate(inst)?;
    let m = inst.block_count();
    let mut state = SaddleState::new(inst, config.x0.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trace = RunTrace::new();
    trace.push_meta("mode", config.plan.mode.label());
    trace.push_meta("seed", config.seed);
    trace.push_meta("beta", config.plan.beta);
    trace.push_meta("rho", config.plan.rho);
    trace.push_meta("blocks", m);
    trace.push_meta("max_epochs", config.max_epochs);
    trace.push_meta("trace_every", config.trace_every);
    trace.push_meta("timing", config.timing);
    trace.push_meta("instance", format!("{:016x}", inst.fingerprint()));
    let started = Instant::now();
    for epoch in 1..=config.max_epochs {
        for _ in 0..m {
            state.step(inst, &config.plan, &mut rng);
        }
        let feas = state.residual_norm();
        let obj_err = objective_error(inst, &state.x);
        let stopping = stop_met(&config.stop, feas, obj_err);
        if epoch % config.trace_every == 0 || epoch == config.max_epochs || stopping {
            let (wall_ms, ips) = if config.timing {
                let secs = started.elapsed().as_secs_f64();
                (secs * 1e3, Some(state.k as f64 / secs.max(1e-12)))
            } else {
                (0.0, None)
            };
            let mut row = TraceRow::serial(epoch, obj_err, feas, wall_ms);
            row.iterations_per_sec = ips;
            trace.rows.push(row);
        }
        if stopping {
            break;
        }
    }
    finalize_ergodic(inst, &state, &mut trace);
    trace.validate()?;
    Ok((state, trace))
}

/// Empirical (ε, σ) check over ≥ 20 independent-seed runs: the fraction of
/// runs with |F(x̄)−F*| ≥ ε and the fraction with ‖Ax̄−b‖ ≥ ε must each be
/// at most σ.
pub fn check_eps_sigma<T: Scalar>(traces: &[RunTrace<T>], eps: T, sigma: T) -> Result<bool> {
    if traces.len() < 20 {
        return Err(Error::Parameter(format!(
            "need at least 20 traces for the empirical check, got {}",
            traces.len()
        )));
    }
    let mut bad_obj = 0usize;
    let mut bad_feas = 0usize;
    for t in traces {
        let obj = t.final_ergodic_obj_err.ok_or_else(|| {
            Error::Unsupported("trace lacks an ergodic objective gap (no reference optimum)".into())
        })?;
        let feas = t.final_ergodic_feas.ok_or_else(|| {
            Error::Unsupported("trace lacks an ergodic feasibility summary".into())
        })?;
        if obj >= eps {
            bad_obj += 1;
        }
        if feas >= eps {
            bad_feas += 1;
        }
    }
    let n = traces.len() as f64;
    let cap = sigma.as_f64() * n + 1e-12;
    Ok(bad_obj as f64 <= cap && bad_feas as f64 <= cap)
}

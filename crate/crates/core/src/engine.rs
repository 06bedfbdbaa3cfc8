//! Master/worker asynchronous engine and the synchronous-parallel baseline.
//!
//! The master owns x, r, λ, and the iteration counter outright; workers get
//! a read-only view of x through per-coordinate atomic cells (snapshots may
//! interleave coordinates from different iterations — that is the model) and
//! feed gradient messages back over a bounded FIFO queue. Because r and λ
//! never leave the master, the serial residual and dual invariants hold
//! verbatim in async mode.

use crossbeam::queue::ArrayQueue;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::problem::ProblemInstance;
use crate::prox::compute_block_candidate;
use crate::sampling::{sample_block, sample_distinct};
use crate::scalar::{AtomicCell, Scalar};
use crate::serial::{finalize_ergodic, objective_error, stop_met, SaddleState, StopRule};
use crate::stepsize::{sync_parallel_plan, PlanMode, StepsizePlan};
use crate::trace::{DelayStats, RunTrace, TraceRow};

/// One unit of worker output: which block, its gradient at the worker's
/// snapshot, and the master iteration count when the snapshot read began.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMessage<T> {
    pub block: usize,
    pub grad: Vec<T>,
    pub born_at: u64,
}

/// The shared read-only view of the iterate: one atomic cell per
/// coordinate, Relaxed on both sides.
pub struct SharedIterate<T: Scalar> {
    cells: Vec<T::Atomic>,
}

impl<T: Scalar> SharedIterate<T> {
    pub fn from_slice(x: &[T]) -> Self {
        SharedIterate { cells: x.iter().map(|v| T::Atomic::new(*v)).collect() }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    fn write_range(&self, start: usize, values: &[T]) {
        for (cell, v) in self.cells[start..start + values.len()].iter().zip(values) {
            cell.store(*v);
        }
    }
}

/// A worker's full read of the shared iterate. `delay` is the master
/// progress observed between stamping `born_at` and finishing the read; the
/// consumption-time delay the master charges the message can only be
/// larger (born_at is stamped before the first coordinate load, which is
/// the conservative choice).
pub struct DelayedSnapshot<T> {
    pub x_hat: Vec<T>,
    pub delay: u64,
}

impl<T: Scalar> DelayedSnapshot<T> {
    fn empty(n: usize) -> Self {
        DelayedSnapshot { x_hat: vec![T::zero(); n], delay: 0 }
    }

    /// Re-read every coordinate; returns the stamped born_at.
    fn refresh(&mut self, shared: &SharedIterate<T>, master_k: &AtomicU64) -> u64 {
        let born_at = master_k.load(Ordering::Acquire);
        for (slot, cell) in self.x_hat.iter_mut().zip(&shared.cells) {
            *slot = cell.load();
        }
        self.delay = master_k.load(Ordering::Relaxed).saturating_sub(born_at);
        born_at
    }
}

/// What the master does with a message whose inputs are older than it
/// likes. UseAnyway matches the convergence theory (bounded delay is an
/// assumption, not a mechanism); DropIfOlderThan enforces the bound
/// mechanically by discarding stale messages at consumption time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StalePolicy {
    UseAnyway,
    DropIfOlderThan(u64),
}

/// Which weights the sync-parallel rounds use: the theory-backed per-round
/// group sums, or the plan's own per-block weights (the arm that reproduces
/// the divergence of naive parallelization).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SyncWeights {
    GroupSum,
    PlanWeights,
}

#[derive(Debug, Clone)]
pub struct EngineConfig<T> {
    /// number of gradient workers (p − 1); 0 means the master does all work
    pub workers: usize,
    pub plan: StepsizePlan<T>,
    pub seed: u64,
    /// counts λ updates, which is also the number of block updates
    pub max_iters: u64,
    pub queue_capacity: usize,
    pub stale_policy: StalePolicy,
    /// epochs (m iterations) between trace rows
    pub trace_every: u64,
    pub stop: Option<StopRule<T>>,
    pub x0: Option<Vec<T>>,
    pub timing: bool,
    pub sync_weights: SyncWeights,
    /// Test hook: when false the master never computes gradients itself and
    /// instead blocks until a worker message arrives. Requires workers ≥ 1.
    #[doc(hidden)]
    pub master_self_compute: bool,
    /// Test hook: worker 0 panics after sending this many messages, to
    /// exercise the abort path.
    #[doc(hidden)]
    pub inject_worker_panic_after: Option<u64>,
    /// Test hook: record the applied block sequence in the trace metadata
    /// (key "applied", space-separated), for serial replay checks.
    #[doc(hidden)]
    pub log_applied: bool,
}

impl<T: Scalar> EngineConfig<T> {
    pub fn new(plan: StepsizePlan<T>, seed: u64, max_iters: u64) -> Self {
        EngineConfig {
            workers: 0,
            plan,
            seed,
            max_iters,
            queue_capacity: 1,
            stale_policy: StalePolicy::UseAnyway,
            trace_every: 1,
            stop: None,
            x0: None,
            timing: false,
            sync_weights: SyncWeights::GroupSum,
            master_self_compute: true,
            inject_worker_panic_after: None,
            log_applied: false,
        }
    }

    /// Set the worker count and the default queue capacity 4·workers.
    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self.queue_capacity = (4 * workers).max(1);
        self
    }

    pub fn validate(&self, inst: &ProblemInstance<T>) -> Result<()> {
        if self.queue_capacity == 0 {
            return Err(Error::Parameter("queue capacity must be at least 1".into()));
        }
        if self.trace_every == 0 {
            return Err(Error::Parameter("trace_every must be at least 1".into()));
        }
        if !self.master_self_compute && self.workers == 0 {
            return Err(Error::Parameter(
                "a master that never self-computes needs at least one worker".into(),
            ));
        }
        if let Some(s) = &self.stop {
            if !(s.feas_tol >= T::zero()) || !(s.obj_tol >= T::zero()) {
                return Err(Error::Parameter("stop tolerances must be nonnegative".into()));
            }
        }
        self.plan.validate(inst)
    }
}

fn engine_meta<T: Scalar>(
    trace: &mut RunTrace<T>,
    inst: &ProblemInstance<T>,
    config: &EngineConfig<T>,
    kind: &str,
) {
    trace.push_meta("mode", config.plan.mode.label());
    trace.push_meta("engine", kind);
    trace.push_meta("workers", config.workers);
    trace.push_meta("seed", config.seed);
    trace.push_meta("beta", config.plan.beta);
    trace.push_meta("rho", config.plan.rho);
    trace.push_meta("blocks", inst.block_count());
    trace.push_meta("max_iters", config.max_iters);
    trace.push_meta("trace_every", config.trace_every);
    trace.push_meta("timing", config.timing);
    trace.push_meta("instance", format!("{:016x}", inst.fingerprint()));
}

/// Algorithm 2. Per master iteration: consume exactly one gradient message
/// if available (the iteration counter counts λ updates, and each consumed
/// gradient triggers exactly one), otherwise sample a block and compute the
/// gradient in-place. Deterministic only at workers = 0, where it reduces
/// bitwise to the serial loop.
pub fn run_async<T: Scalar>(
    inst: &ProblemInstance<T>,
    config: &EngineConfig<T>,
) -> Result<(SaddleState<T>, RunTrace<T>, DelayStats)> {
    inst.validate()?;
    config.validate(inst)?;
    let m = inst.block_count();
    let n = inst.partition.total_dim;
    let mut state = SaddleState::new(inst, config.x0.clone())?;
    let mut master_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let shared = SharedIterate::from_slice(&state.x);
    let master_k = AtomicU64::new(0);
    let queue: ArrayQueue<GradientMessage<T>> = ArrayQueue::new(config.queue_capacity);
    let stop_flag = AtomicBool::new(false);
    let panic_flag = AtomicBool::new(false);
    let dropped_overflow = AtomicU64::new(0);
    let mut dropped_stale = 0u64;
    let mut histogram: Vec<u64> = Vec::new();
    let mut applied_log: Vec<usize> = Vec::new();
    let mut trace = RunTrace::new();
    engine_meta(&mut trace, inst, config, "async");
    let max_block = (0..m).map(|i| inst.partition.block_dim(i)).max().unwrap_or(0);
    let mut grad_buf = vec![T::zero(); max_block];
    let mut combo = vec![T::zero(); inst.constraint.num_rows()];
    let mut out = vec![T::zero(); max_block];

    let loop_result = std::thread::scope(|scope| {
        for w in 0..config.workers {
            let shared = &shared;
            let master_k = &master_k;
            let queue = &queue;
            let stop_flag = &stop_flag;
            let panic_flag = &panic_flag;
            let dropped_overflow = &dropped_overflow;
            let inject = if w == 0 { config.inject_worker_panic_after } else { None };
            let seed = config.seed;
            scope.spawn(move || {
                let body = panic::catch_unwind(AssertUnwindSafe(|| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(w as u64 + 1);
                    let mut snap = DelayedSnapshot::<T>::empty(n);
                    let mut sent = 0u64;
                    while !stop_flag.load(Ordering::Acquire) {
                        let j = sample_block(&mut rng, m);
                        let born_at = snap.refresh(shared, master_k);
                        let ni = inst.partition.block_dim(j);
                        let mut grad = vec![T::zero(); ni];
                        inst.block_grad_at(&snap.x_hat, j, &mut grad);
                        if Some(sent) == inject {
                            panic!("injected worker fault");
                        }
                        if queue.force_push(GradientMessage { block: j, grad, born_at }).is_some() {
                            dropped_overflow.fetch_add(1, Ordering::Relaxed);
                        }
                        sent += 1;
                    }
                }));
                if body.is_err() {
                    panic_flag.store(true, Ordering::Release);
                }
            });
        }

        let run = (|| -> Result<()> {
            let started = Instant::now();
            while state.k < config.max_iters {
                let k = state.k;
                // acquire one gradient: message if present, else self-compute
                let acquired: Option<(usize, u64)> = loop {
                    if panic_flag.load(Ordering::Acquire) {
                        return Err(Error::OracleFailure(
                            "a gradient worker panicked; engine aborted".into(),
                        ));
                    }
                    let mut found = None;
                    while let Some(msg) = queue.pop() {
                        let delay = k.saturating_sub(msg.born_at);
                        if let StalePolicy::DropIfOlderThan(tau) = config.stale_policy {
                            if delay > tau {
                                dropped_stale += 1;
                                continue;
                            }
                        }
                        found = Some((msg, delay));
                        break;
                    }
                    match found {
                        Some((msg, delay)) => {
                            let ni = inst.partition.block_dim(msg.block);
                            grad_buf[..ni].copy_from_slice(&msg.grad);
                            break Some((msg.block, delay));
                        }
                        None if config.master_self_compute => break None,
                        None => std::thread::yield_now(),
                    }
                };
                let (i, delay) = match acquired {
                    Some((block, delay)) => (block, delay),
                    None => {
                        let i = sample_block(&mut master_rng, m);
                        let ni = inst.partition.block_dim(i);
                        inst.block_grad_at(&state.x, i, &mut grad_buf[..ni]);
                        (i, 0)
                    }
                };
                let ni = inst.partition.block_dim(i);
                compute_block_candidate(
                    inst,
                    i,
                    &state.x,
                    &grad_buf[..ni],
                    &state.r,
                    &state.lambda,
                    config.plan.beta,
                    config.plan.eta[i],
                    &mut combo,
                    &mut out[..ni],
                );
                state.apply_block_update(inst, config.plan.rho, i, &out[..ni]);
                if config.log_applied {
                    applied_log.push(i);
                }
                let range = inst.partition.block_range(i);
                shared.write_range(range.start, &state.x[range]);
                master_k.store(state.k, Ordering::Release);
                let d = delay as usize;
                if histogram.len() <= d {
                    histogram.resize(d + 1, 0);
                }
                histogram[d] += 1;
                if state.k % m as u64 == 0 {
                    let epoch = state.k / m as u64;
                    let feas = state.residual_norm();
                    let obj_err = objective_error(inst, &state.x);
                    let stopping = stop_met(&config.stop, feas, obj_err);
                    if epoch % config.trace_every == 0 || state.k == config.max_iters || stopping
                    {
                        let stats_so_far = DelayStats::from_histogram(
                            histogram.clone(),
                            dropped_stale,
                            dropped_overflow.load(Ordering::Relaxed),
                        );
                        let (wall_ms, ips) = if config.timing {
                            let secs = started.elapsed().as_secs_f64();
                            (secs * 1e3, Some(state.k as f64 / secs.max(1e-12)))
                        } else {
                            (0.0, None)
                        };
                        trace.rows.push(TraceRow {
                            epoch,
                            obj_err,
                            feas,
                            wall_ms,
                            iterations_per_sec: ips,
                            max_delay: Some(stats_so_far.max_delay),
                            mean_delay: Some(stats_so_far.mean_delay),
                            dropped: Some(
                                stats_so_far.dropped_stale + stats_so_far.dropped_overflow,
                            ),
                            tau: None,
                        });
                    }
                    if stopping {
                        break;
                    }
                }
            }
            Ok(())
        })();
        stop_flag.store(true, Ordering::Release);
        run
    });
    loop_result?;
    if config.log_applied {
        let joined: Vec<String> = applied_log.iter().map(|i| i.to_string()).collect();
        trace.push_meta("applied", joined.join(" "));
    }
    finalize_ergodic(inst, &state, &mut trace);
    trace.validate()?;
    let stats = DelayStats::from_histogram(
        histogram,
        dropped_stale,
        dropped_overflow.load(Ordering::Relaxed),
    );
    Ok((state, trace, stats))
}

/// The synchronous baseline: each round samples p distinct blocks, computes
/// their gradients at the common iterate in parallel, forms all candidates
/// from the common pre-round state with the round's weights, then commits
/// residual/dual updates sequentially in sorted block order. Thread joins
/// are the barrier between rounds. Runs whole rounds while k < max_iters,
/// so the final count may overshoot by at most p − 1.
pub fn run_sync_parallel<T: Scalar>(
    inst: &ProblemInstance<T>,
    config: &EngineConfig<T>,
) -> Result<(SaddleState<T>, RunTrace<T>)> {
    inst.validate()?;
    config.validate(inst)?;
    let m = inst.block_count();
    let p = match config.plan.mode {
        PlanMode::SyncParallel { group_size } => group_size,
        _ => {
            return Err(Error::Parameter(
                "run_sync_parallel needs a plan in SyncParallel mode".into(),
            ))
        }
    };
    if p == 0 || p > m {
        return Err(Error::Parameter(format!(
            "sync-parallel group size {p} must be between 1 and {m}"
        )));
    }
    let mut state = SaddleState::new(inst, config.x0.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trace = RunTrace::new();
    engine_meta(&mut trace, inst, config, "sync-parallel");
    let mut combo = vec![T::zero(); inst.constraint.num_rows()];
    let mut grads: Vec<Vec<T>> = vec![Vec::new(); p];
    let started = Instant::now();
    'rounds: while state.k < config.max_iters {
        let mut group = sample_distinct(&mut rng, m, p);
        group.sort_unstable();
        let weights: Vec<T> = match config.sync_weights {
            SyncWeights::GroupSum => sync_parallel_plan(inst, config.plan.beta, &group)?,
            SyncWeights::PlanWeights => group.iter().map(|&j| config.plan.eta[j]).collect(),
        };
        if p == 1 {
            let j = group[0];
            let ni = inst.partition.block_dim(j);
            grads[0].clear();
            grads[0].resize(ni, T::zero());
            inst.block_grad_at(&state.x, j, &mut grads[0]);
        } else {
            let xref = &state.x;
            std::thread::scope(|scope| {
                for (gbuf, &j) in grads.iter_mut().zip(&group) {
                    scope.spawn(move || {
                        let ni = inst.partition.block_dim(j);
                        gbuf.clear();
                        gbuf.resize(ni, T::zero());
                        inst.block_grad_at(xref, j, gbuf);
                    });
                }
            });
        }
        // all candidates from the common pre-round state
        let r0 = state.r.clone();
        let lam0 = state.lambda.clone();
        let mut candidates: Vec<Vec<T>> = Vec::with_capacity(p);
        for (slot, &j) in group.iter().enumerate() {
            let ni = inst.partition.block_dim(j);
            let mut cand = vec![T::zero(); ni];
            compute_block_candidate(
                inst,
                j,
                &state.x,
                &grads[slot][..ni],
                &r0,
                &lam0,
                config.plan.beta,
                weights[slot],
                &mut combo,
                &mut cand,
            );
            candidates.push(cand);
        }
        for (slot, &j) in group.iter().enumerate() {
            state.apply_block_update(inst, config.plan.rho, j, &candidates[slot]);
            if state.k % m as u64 == 0 {
                let epoch = state.k / m as u64;
                let feas = state.residual_norm();
                let obj_err = objective_error(inst, &state.x);
                let stopping = stop_met(&config.stop, feas, obj_err);
                if epoch % config.trace_every == 0 || state.k >= config.max_iters || stopping {
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
                    break 'rounds;
                }
            }
        }
    }
    finalize_ergodic(inst, &state, &mut trace);
    trace.validate()?;
    Ok((state, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMat;
    use crate::problem::{
        BlockMatrix, BlockPartition, ConstraintBlocks, OracleForm, ProxTerm, SmoothOracle,
    };
    use crate::serial::{run, RunConfig};
    use crate::stepsize::serial_plan;

    fn quad_instance(m: usize) -> ProblemInstance<f64> {
        let partition = BlockPartition::uniform(m, 1);
        let blocks = (0..m)
            .map(|i| {
                BlockMatrix::Dense(
                    DenseMat::from_rows(1, 1, vec![1.0 + 0.25 * (i % 3) as f64]).unwrap(),
                )
            })
            .collect();
        let constraint = ConstraintBlocks::new(blocks, vec![2.0]).unwrap();
        let mut qdata = vec![0.0; m * m];
        for i in 0..m {
            qdata[i * m + i] = 1.0 + (i % 2) as f64;
        }
        let q = DenseMat::from_rows(m, m, qdata).unwrap();
        let lips: Vec<f64> = (0..m).map(|i| 1.0 + (i % 2) as f64).collect();
        let smooth = SmoothOracle::new(
            OracleForm::DenseQuadratic { q, c: vec![0.0; m] },
            lips,
            2.0,
        )
        .unwrap();
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
    fn async_zero_workers_is_bitwise_serial() {
        let inst = quad_instance(5);
        let plan = serial_plan(&inst, 2.5).unwrap();
        let epochs = 30u64;
        let sconfig = RunConfig::new(plan.clone(), epochs, 77);
        let (s_state, s_trace) = run(&inst, &sconfig).unwrap();
        let aconfig = EngineConfig::new(plan, 77, epochs * 5);
        let (a_state, a_trace, stats) = run_async(&inst, &aconfig).unwrap();
        assert_eq!(s_state.x, a_state.x);
        assert_eq!(s_state.r, a_state.r);
        assert_eq!(s_state.lambda, a_state.lambda);
        assert_eq!(s_state.k, a_state.k);
        assert_eq!(stats.max_delay, 0);
        assert_eq!(stats.applied(), epochs * 5);
        for (a, b) in s_trace.rows.iter().zip(&a_trace.rows) {
            assert_eq!(a.epoch, b.epoch);
            assert_eq!(a.obj_err, b.obj_err);
            assert_eq!(a.feas, b.feas);
        }
    }

    #[test]
    fn sync_single_block_group_is_bitwise_serial() {
        let inst = quad_instance(5);
        let mut plan = serial_plan(&inst, 2.5).unwrap();
        let epochs = 30u64;
        let sconfig = RunConfig::new(plan.clone(), epochs, 91);
        let (s_state, s_trace) = run(&inst, &sconfig).unwrap();
        plan.mode = PlanMode::SyncParallel { group_size: 1 };
        let yconfig = EngineConfig::new(plan, 91, epochs * 5);
        let (y_state, y_trace) = run_sync_parallel(&inst, &yconfig).unwrap();
        assert_eq!(s_state.x, y_state.x);
        assert_eq!(s_state.r, y_state.r);
        assert_eq!(s_state.lambda, y_state.lambda);
        for (a, b) in s_trace.rows.iter().zip(&y_trace.rows) {
            assert_eq!(a.epoch, b.epoch);
            assert_eq!(a.obj_err, b.obj_err);
            assert_eq!(a.feas, b.feas);
        }
    }

    #[test]
    fn sync_full_group_sweeps_every_block() {
        let inst = quad_instance(4);
        let mut plan = serial_plan(&inst, 2.0).unwrap();
        plan.mode = PlanMode::SyncParallel { group_size: 4 };
        let config = EngineConfig::new(plan, 3, 4);
        let (state, _) = run_sync_parallel(&inst, &config).unwrap();
        assert_eq!(state.k, 4);
        // every coordinate moved off the origin in the single sweep
        for v in &state.x {
            assert!(v.abs() > 0.0);
        }
    }

    #[test]
    fn sync_rejects_wrong_mode_or_group() {
        let inst = quad_instance(4);
        let plan = serial_plan(&inst, 2.0).unwrap();
        let config = EngineConfig::new(plan.clone(), 3, 4);
        assert!(run_sync_parallel(&inst, &config).is_err());
        let mut big = plan;
        big.mode = PlanMode::SyncParallel { group_size: 9 };
        let config = EngineConfig::new(big, 3, 4);
        assert!(run_sync_parallel(&inst, &config).is_err());
    }

    #[test]
    fn async_one_worker_converges_and_reports_delays() {
        let inst = quad_instance(6);
        let plan = serial_plan(&inst, 3.0).unwrap();
        let config = EngineConfig::new(plan, 13, 3000).with_workers(1);
        let (state, trace, stats) = run_async(&inst, &config).unwrap();
        assert!(state.residual_norm() < 1e-6, "feas {}", state.residual_norm());
        assert_eq!(stats.applied(), 3000);
        let last = trace.rows.last().unwrap();
        assert!(last.max_delay.is_some());
        assert!(last.dropped.is_some());
    }

    #[test]
    fn forced_wait_mode_measures_pipeline_depth() {
        let inst = quad_instance(6);
        let plan = serial_plan(&inst, 3.0).unwrap();
        let mut config = EngineConfig::new(plan, 29, 500).with_workers(1);
        config.master_self_compute = false;
        let (_, _, stats) = run_async(&inst, &config).unwrap();
        // every applied update came from the queue; once the pipeline is
        // primed the master is always at least one iteration ahead
        assert_eq!(stats.applied(), 500);
        assert!(stats.max_delay >= 1, "max delay {}", stats.max_delay);
        assert!(stats.mean_delay > 0.0, "mean delay {}", stats.mean_delay);
    }

    #[test]
    fn forced_wait_without_workers_is_rejected() {
        let inst = quad_instance(4);
        let plan = serial_plan(&inst, 2.0).unwrap();
        let mut config = EngineConfig::new(plan, 1, 10);
        config.master_self_compute = false;
        assert!(run_async(&inst, &config).is_err());
    }

    #[test]
    fn worker_panic_aborts_with_oracle_failure() {
        let inst = quad_instance(6);
        let plan = serial_plan(&inst, 3.0).unwrap();
        let mut config = EngineConfig::new(plan, 5, 100_000).with_workers(1);
        config.master_self_compute = false;
        config.inject_worker_panic_after = Some(25);
        match run_async(&inst, &config) {
            Err(Error::OracleFailure(msg)) => assert!(msg.contains("worker")),
            other => panic!("expected abort, got {other:?}"),
        }
    }

    #[test]
    fn drop_if_older_bounds_consumed_delay() {
        let inst = quad_instance(6);
        let plan = serial_plan(&inst, 3.0).unwrap();
        let mut config = EngineConfig::new(plan, 31, 4000).with_workers(2);
        config.stale_policy = StalePolicy::DropIfOlderThan(3);
        let (_, _, stats) = run_async(&inst, &config).unwrap();
        assert!(stats.max_delay <= 3, "max delay {}", stats.max_delay);
    }

    #[test]
    fn zero_gradient_async_replays_as_serial_trajectory() {
        // f = 0: messages carry zero gradients, so the only thing the
        // async run decides is WHICH block each iteration updates. Feeding
        // that sequence through the serial step must land on the same
        // trajectory bit for bit, delays and all.
        let partition = BlockPartition::uniform(3, 1);
        let blocks = (0..3)
            .map(|i| {
                BlockMatrix::Dense(DenseMat::from_rows(1, 1, vec![1.0 + i as f64]).unwrap())
            })
            .collect();
        let constraint = ConstraintBlocks::new(blocks, vec![1.0]).unwrap();
        let inst = ProblemInstance {
            partition,
            constraint,
            smooth: SmoothOracle::zero(3),
            prox_terms: vec![ProxTerm::Zero; 3],
            optimum: None,
            meta: None,
        };
        let plan = serial_plan(&inst, 1.5).unwrap();
        let mut config = EngineConfig::new(plan.clone(), 3, 600).with_workers(1);
        config.log_applied = true;
        let (a_state, a_trace, _) = run_async(&inst, &config).unwrap();
        let applied: Vec<usize> = a_trace
            .meta_value("applied")
            .unwrap()
            .split_whitespace()
            .map(|s| s.parse().unwrap())
            .collect();
        assert_eq!(applied.len(), 600);
        let mut replay = SaddleState::new(&inst, None).unwrap();
        for &i in &applied {
            replay.step_at(&inst, &plan, i);
        }
        assert_eq!(replay.x, a_state.x);
        assert_eq!(replay.r, a_state.r);
        assert_eq!(replay.lambda, a_state.lambda);
    }
}

//! Deterministic single-threaded emulation of delayed block gradients: the
//! gradient is evaluated at a uniformly sampled recent iterate while the
//! anchor, residual, and multipliers stay current. Reproduces the
//! delay-sensitivity experiments without scheduler noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

use crate::error::Result;
use crate::problem::ProblemInstance;
use crate::prox::compute_block_candidate;
use crate::sampling::sample_block;
use crate::scalar::Scalar;
use crate::serial::{finalize_ergodic, objective_error, stop_met, RunConfig, SaddleState};
use crate::trace::{RunTrace, TraceRow};

/// The tau+1 most recent full iterates x^{k-tau}..x^k. Slots that would
/// reach before iterate 0 alias x⁰, which pre-filling achieves for free.
#[derive(Debug, Clone)]
pub struct IterateRing<T> {
    buffer: Vec<Vec<T>>,
    head: usize,
}

impl<T: Scalar> IterateRing<T> {
    pub fn new(tau: usize, x0: &[T]) -> Self {
        IterateRing { buffer: vec![x0.to_vec(); tau + 1], head: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.buffer.len()
    }

    /// Record the newest iterate, evicting the oldest.
    pub fn push(&mut self, x: &[T]) {
        self.head = (self.head + 1) % self.buffer.len();
        self.buffer[self.head].copy_from_slice(x);
    }

    /// The iterate d steps back (d = 0 is the newest).
    pub fn get(&self, d: usize) -> &[T] {
        debug_assert!(d < self.buffer.len());
        let cap = self.buffer.len();
        &self.buffer[(self.head + cap - d) % cap]
    }
}

/// Serial loop with simulated staleness: block choice comes from the same
/// stream a serial run would use, while the delay d is drawn from its own
/// stream (same seed, stream 1) so that tau = 0 consumes zero delay draws
/// and reproduces the serial trajectory bit for bit.
pub fn run_simulated_delay<T: Scalar>(
    inst: &ProblemInstance<T>,
    config: &RunConfig<T>,
    tau: usize,
) -> Result<(SaddleState<T>, RunTrace<T>)> {
    inst.validate()?;
    config.validate(inst)?;
    let m = inst.block_count();
    let mut state = SaddleState::new(inst, config.x0.clone())?;
    let mut index_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut delay_rng = ChaCha8Rng::seed_from_u64(config.seed);
    delay_rng.set_stream(1);
    let mut ring = IterateRing::new(tau, &state.x);
    let mut grad = vec![T::zero(); (0..m).map(|i| inst.partition.block_dim(i)).max().unwrap_or(0)];
    let mut combo = vec![T::zero(); inst.constraint.num_rows()];
    let mut out = grad.clone();
    let mut trace = RunTrace::new();
    trace.push_meta("mode", config.plan.mode.label());
    trace.push_meta("tau", tau);
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
            let i = sample_block(&mut index_rng, m);
            let d = sample_block(&mut delay_rng, tau + 1);
            let ni = inst.partition.block_dim(i);
            inst.block_grad_at(ring.get(d), i, &mut grad[..ni]);
            compute_block_candidate(
                inst,
                i,
                &state.x,
                &grad[..ni],
                &state.r,
                &state.lambda,
                config.plan.beta,
                config.plan.eta[i],
                &mut combo,
                &mut out[..ni],
            );
            state.apply_block_update(inst, config.plan.rho, i, &out[..ni]);
            ring.push(&state.x);
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
            row.tau = Some(tau);
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

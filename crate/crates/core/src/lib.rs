//! Randomized primal-dual block coordinate updates for linearly constrained
//! multi-block convex programs, with serial, simulated-delay, asynchronous,
//! and synchronous-parallel execution engines plus instance generators and
//! a reference solver for ground-truth optima.

pub mod delay;
pub mod engine;
pub mod error;
pub mod instances;
pub mod linalg;
pub mod problem;
pub mod prox;
pub mod sampling;
pub mod scalar;
pub mod serial;
pub mod stepsize;
pub mod trace;

pub use delay::{run_simulated_delay, IterateRing};
pub use engine::{
    run_async, run_sync_parallel, DelayedSnapshot, EngineConfig, GradientMessage, SharedIterate,
    StalePolicy, SyncWeights,
};
pub use error::{Error, Result};
pub use instances::{
    gen_basis_pursuit, gen_dual_svm, gen_ncqp, parse_libsvm, read_libsvm, reference_solve,
    write_libsvm, Family, GeneratorSpec, ReferenceSolution, SvmDataset, DEFAULT_SVM_CAP,
};
pub use problem::{
    BlockMatrix, BlockPartition, ConstraintBlocks, Optimum, OracleForm, ProblemInstance, ProxTerm,
    SmoothOracle,
};
pub use prox::{prox_apply, solve_block_subproblem, ScaledProxQuery};
pub use scalar::Scalar;
pub use serial::{check_eps_sigma, run, RunConfig, SaddleState, StopRule};
pub use stepsize::{
    async_plan, estimate_lipschitz, serial_plan, sync_parallel_plan, PlanMode, StepsizePlan,
};
pub use trace::{DelayStats, RunTrace, TraceRow, TRACE_HEADER};

/// Shorthand for the standard double-precision instantiation.
pub type Instance = ProblemInstance<f64>;
pub type State = SaddleState<f64>;
pub type Plan = StepsizePlan<f64>;
pub type Trace = RunTrace<f64>;

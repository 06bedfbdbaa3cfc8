//! Benchmark harness for the block coordinate update library: runs
//! experiment plans, measures parallel speedup, verifies instances and
//! traces, and generates instances to files.
//!
//! Exit codes: 0 success, 1 usage (bad flags or plan file), 2 numerical or
//! oracle failure (including failed verify checks), 3 I/O (unreadable,
//! unwritable, or undecodable files).

mod experiments;
mod gen;
mod plan;
mod speedup;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// One failure channel per exit code; every command funnels into this.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Numerical(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Numerical(_) => 2,
            Failure::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Numerical(m) | Failure::Io(m) => m,
        }
    }
}

impl From<bcu::Error> for Failure {
    fn from(e: bcu::Error) -> Self {
        match e {
            bcu::Error::Io(_) | bcu::Error::Serde(_) => Failure::Io(e.to_string()),
            other => Failure::Numerical(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "bcu-bench",
    version,
    about = "Benchmark harness for randomized block coordinate updates",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Execute every (experiment x seed) cell of a plan file; one CSV trace
    /// per cell plus a summary.json echoing the full resolved config
    Run {
        plan: PathBuf,
        /// Overrides the plan's [output] dir and $BCU_BENCH_OUTDIR
        #[arg(long)]
        outdir: Option<PathBuf>,
        #[command(flatten)]
        overrides: plan::Overrides,
    },
    /// Sync vs async throughput over the plan's worker list, normalized to
    /// p = 1; emits a table, speedup.csv, and speedup.json
    Speedup {
        plan: PathBuf,
        #[arg(long)]
        outdir: Option<PathBuf>,
        #[command(flatten)]
        overrides: plan::Overrides,
    },
    /// Run the invariant suite on an instance file, a generator spec given
    /// by flags, or a trace CSV; prints one line per check
    Verify(verify::VerifyArgs),
    /// Generate an instance from flags and write it as JSON
    Gen(gen::GenArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version are not errors; everything else is usage
            let done = e.print().is_ok();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
                    if done =>
                {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    let outcome = match cli.verb {
        Verb::Run { plan, outdir, overrides } => {
            experiments::cmd_run(&plan, outdir.as_deref(), &overrides)
        }
        Verb::Speedup { plan, outdir, overrides } => {
            speedup::cmd_speedup(&plan, outdir.as_deref(), &overrides)
        }
        Verb::Verify(args) => verify::cmd_verify(&args),
        Verb::Gen(args) => gen::cmd_gen(&args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

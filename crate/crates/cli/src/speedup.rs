//! The speedup verb: time the sync-parallel and async engines to a fixed
//! epoch budget across a worker list, normalize each to its own p = 1 run,
//! and emit the table as text, CSV, and JSON. Time covers the solver loop
//! only; generation and trace I/O sit outside the measured span.

use std::fs;
use std::path::Path;

use serde_json::json;

use bcu::{async_plan, run_async, run_sync_parallel, serial_plan, EngineConfig, Instance, PlanMode};

use crate::experiments::synthetic_svm;
use crate::plan::{self, Experiment, SvmSource};
use crate::Failure;

struct Row {
    p: usize,
    requested: bool,
    sync_wall: f64,
    sync_ips: f64,
    async_wall: f64,
    async_ips: f64,
}

pub fn cmd_speedup(
    plan_path: &Path,
    outdir_flag: Option<&Path>,
    overrides: &plan::Overrides,
) -> Result<(), Failure> {
    let mut resolved = plan::load(plan_path, outdir_flag)?;
    overrides.apply(&mut resolved)?;
    let (inst, beta, tau_key, workers) = match &resolved.experiment {
        Experiment::SvmParallel { source, cap, width, beta, workers, tau } => {
            let data = match source {
                SvmSource::File(path) => bcu::read_libsvm(path)?,
                SvmSource::Synthetic { samples, features, nnz_per, seed } => {
                    synthetic_svm(*samples, *features, *nnz_per, *seed)?
                }
            };
            (bcu::gen_dual_svm(&data, *cap, *width)?, *beta, *tau, workers.clone())
        }
        Experiment::NcqpDelay { qb, n, iseed, beta, workers: Some(list), .. } => {
            (bcu::gen_ncqp(*qb, *n, *iseed)?, *beta, None, list.clone())
        }
        _ => {
            return Err(Failure::Usage(
                "speedup needs an svm_parallel plan or an ncqp_delay plan with a [solver] workers list"
                    .into(),
            ))
        }
    };
    if workers.contains(&0) {
        return Err(Failure::Usage("[solver] workers entries must be >= 1".into()));
    }

    let cores = std::thread::available_parallelism().map(|c| c.get()).unwrap_or(1);
    for &p in &workers {
        if p > cores {
            eprintln!("warning: p = {p} exceeds the {cores} available core(s); timings will not scale");
        }
    }

    // each engine is normalized to its own p = 1 run, so measure one even
    // when the plan omits it
    let mut ps = workers.clone();
    if !ps.contains(&1) {
        ps.insert(0, 1);
    }

    let shared = &resolved.shared;
    let mut rows = Vec::new();
    for &p in &ps {
        let (mut sync_wall, mut sync_ips) = (Vec::new(), Vec::new());
        let (mut async_wall, mut async_ips) = (Vec::new(), Vec::new());
        for &seed in &shared.seeds {
            let (w, i) = time_sync(&inst, beta, p, shared.epochs, seed)?;
            sync_wall.push(w);
            sync_ips.push(i);
            let tau = tau_key.unwrap_or(4 * p);
            let (w, i) = time_async(&inst, beta, p, tau, shared.epochs, seed)?;
            async_wall.push(w);
            async_ips.push(i);
        }
        rows.push(Row {
            p,
            requested: workers.contains(&p),
            sync_wall: median(sync_wall),
            sync_ips: median(sync_ips),
            async_wall: median(async_wall),
            async_ips: median(async_ips),
        });
    }

    let base_sync = rows.iter().find(|r| r.p == 1).expect("p = 1 measured").sync_wall;
    let base_async = rows.iter().find(|r| r.p == 1).expect("p = 1 measured").async_wall;

    println!(
        "{:>4} {:>12} {:>12} {:>8} {:>12} {:>12} {:>8}  {}",
        "p", "sync ms", "sync it/s", "sync x", "async ms", "async it/s", "async x", "async>=0.95 sync"
    );
    let mut table = Vec::new();
    let mut violation: Option<String> = None;
    for r in &rows {
        let sync_speedup = base_sync / r.sync_wall;
        let async_speedup = base_async / r.async_wall;
        // the claim is about scaling, so compare normalized speedups; at p = 1
        // both are 1.0 by construction and the row only sets the baseline
        let ok = async_speedup >= 0.95 * sync_speedup;
        println!(
            "{:>4} {:>12.2} {:>12.0} {:>8.2} {:>12.2} {:>12.0} {:>8.2}  {}",
            r.p, r.sync_wall, r.sync_ips, sync_speedup, r.async_wall, r.async_ips, async_speedup,
            if ok { "yes" } else { "NO" }
        );
        if !ok && violation.is_none() {
            violation = Some(format!(
                "async speedup {async_speedup:.2} fell below 0.95 x sync speedup {sync_speedup:.2} at p = {}",
                r.p
            ));
        }
        table.push(json!({
            "p": r.p,
            "requested": r.requested,
            "sync": { "wall_ms": r.sync_wall, "iterations_per_sec": r.sync_ips, "speedup": sync_speedup },
            "async": { "wall_ms": r.async_wall, "iterations_per_sec": r.async_ips, "speedup": async_speedup },
            "async_ge_sync": ok,
        }));
    }

    let dir = resolved.outdir.join(resolved.name);
    fs::create_dir_all(&dir)
        .map_err(|e| Failure::Io(format!("cannot create {}: {e}", dir.display())))?;
    let mut csv = String::from("p,engine,wall_ms,iterations_per_sec,speedup\n");
    for r in &rows {
        csv.push_str(&format!("{},sync,{},{},{}\n", r.p, r.sync_wall, r.sync_ips, base_sync / r.sync_wall));
        csv.push_str(&format!("{},async,{},{},{}\n", r.p, r.async_wall, r.async_ips, base_async / r.async_wall));
    }
    fs::write(dir.join("speedup.csv"), csv)
        .map_err(|e| Failure::Io(format!("cannot write speedup.csv: {e}")))?;
    let summary = json!({
        "experiment": resolved.name,
        "config": resolved.echo,
        "cores": cores,
        "epochs": shared.epochs,
        "seeds": shared.seeds,
        "rows": table,
    });
    fs::write(dir.join("speedup.json"), format!("{:#}\n", summary))
        .map_err(|e| Failure::Io(format!("cannot write speedup.json: {e}")))?;
    println!("wrote speedup.csv and speedup.json to {}", dir.display());

    match violation {
        Some(why) => Err(Failure::Numerical(why)),
        None => Ok(()),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    v[v.len() / 2]
}

fn last_timing(trace: &bcu::Trace) -> Result<(f64, f64), Failure> {
    let row = trace
        .rows
        .last()
        .ok_or_else(|| Failure::Numerical("timed run produced no trace rows".into()))?;
    let ips = row
        .iterations_per_sec
        .ok_or_else(|| Failure::Numerical("timed run left iterations_per_sec empty".into()))?;
    Ok((row.wall_ms, ips))
}

fn time_sync(inst: &Instance, beta: f64, p: usize, epochs: u64, seed: u64) -> Result<(f64, f64), Failure> {
    let mut plan = serial_plan(inst, beta)?;
    plan.mode = PlanMode::SyncParallel { group_size: p };
    let m = inst.block_count() as u64;
    let mut cfg = EngineConfig::new(plan, seed, epochs * m);
    cfg.timing = true;
    cfg.trace_every = epochs;
    let (_, trace) = run_sync_parallel(inst, &cfg)?;
    last_timing(&trace)
}

fn time_async(
    inst: &Instance,
    beta: f64,
    p: usize,
    tau: usize,
    epochs: u64,
    seed: u64,
) -> Result<(f64, f64), Failure> {
    let plan = async_plan(inst, beta, tau, 1.0)?;
    let m = inst.block_count() as u64;
    let mut cfg = EngineConfig::new(plan, seed, epochs * m).with_workers(p - 1);
    cfg.timing = true;
    cfg.trace_every = epochs;
    let (_, trace, _) = run_async(inst, &cfg)?;
    last_timing(&trace)
}

//! The run verb: expand a plan into (cell x seed) runs, execute each on the
//! engine the experiment calls for, and leave behind one CSV per run plus a
//! summary.json tying every number back to its configuration.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use bcu::{
    async_plan, run, run_async, run_simulated_delay, run_sync_parallel, serial_plan,
    EngineConfig, Instance, Optimum, Plan, PlanMode, RunConfig, SvmDataset, Trace,
};

use crate::plan::{self, CustomMode, Experiment, RefMode, ResolvedPlan, Shared, SvmSource};
use crate::Failure;

pub enum EngineKind {
    Serial,
    DelaySim { tau: usize },
    Async { workers: usize },
    Sync,
}

pub struct Cell {
    pub label: String,
    pub varied: Value,
    pub inst: Rc<InstanceEntry>,
    pub plan: Plan,
    pub engine: EngineKind,
}

/// One generated instance shared by every cell that solves it.
pub struct InstanceEntry {
    pub label: String,
    pub inst: Instance,
    pub reference: Value,
}

pub fn cmd_run(
    plan_path: &Path,
    outdir_flag: Option<&Path>,
    overrides: &plan::Overrides,
) -> Result<(), Failure> {
    let mut resolved = plan::load(plan_path, outdir_flag)?;
    overrides.apply(&mut resolved)?;
    let dir = resolved.outdir.join(resolved.name);
    fs::create_dir_all(&dir)
        .map_err(|e| Failure::Io(format!("cannot create {}: {e}", dir.display())))?;

    let (instances, cells) = build_cells(&resolved)?;
    let shared = &resolved.shared;
    let mut outcomes = Vec::new();
    for cell in &cells {
        for &seed in &shared.seeds {
            let (trace, delay) = execute(cell, shared, seed)?;
            let csv_name = format!("{}_seed{seed}.csv", cell.label);
            write_csv(&dir.join(&csv_name), &trace)?;
            let outcome = summarize(cell, seed, &csv_name, &trace, delay, shared.tolerance);
            print_outcome(&outcome);
            outcomes.push(outcome);
        }
    }

    let summary = json!({
        "experiment": resolved.name,
        "config": resolved.echo,
        "instances": instances.iter().map(|e| json!({
            "label": e.label,
            "fingerprint": format!("{:016x}", e.inst.fingerprint()),
            "blocks": e.inst.block_count(),
            "dim": e.inst.dim(),
            "rows": e.inst.num_rows(),
            "reference": e.reference,
        })).collect::<Vec<_>>(),
        "cells": outcomes,
    });
    let summary_path = dir.join("summary.json");
    fs::write(&summary_path, format!("{:#}\n", summary))
        .map_err(|e| Failure::Io(format!("cannot write {}: {e}", summary_path.display())))?;
    println!(
        "wrote {} traces and summary.json to {}",
        cells.len() * shared.seeds.len(),
        dir.display()
    );
    Ok(())
}

fn print_outcome(o: &Value) {
    let obj_err = o["final"]["obj_err"]
        .as_f64()
        .map(|v| format!("{v:.3e}"))
        .unwrap_or_else(|| "-".into());
    let to_tol = o["epochs_to_tolerance"]
        .as_u64()
        .map(|v| v.to_string())
        .unwrap_or_else(|| "-".into());
    println!(
        "{} seed {}: feas {:.3e}, obj_err {}, epochs_to_tolerance {}",
        o["label"].as_str().unwrap_or("?"),
        o["seed"],
        o["final"]["feas"].as_f64().unwrap_or(f64::NAN),
        obj_err,
        to_tol,
    );
}

fn write_csv(path: &Path, trace: &Trace) -> Result<(), Failure> {
    let file = fs::File::create(path)
        .map_err(|e| Failure::Io(format!("cannot create {}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    trace
        .write_csv(&mut w)
        .and_then(|()| w.flush())
        .map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))
}

/// Run one cell at one seed. Returns the trace and, for the async engine,
/// the applied-delay statistics.
fn execute(cell: &Cell, shared: &Shared, seed: u64) -> Result<(Trace, Option<Value>), Failure> {
    let inst = &cell.inst.inst;
    let m = inst.block_count() as u64;
    match &cell.engine {
        EngineKind::Serial => {
            let mut cfg = RunConfig::new(cell.plan.clone(), shared.epochs, seed);
            cfg.trace_every = shared.trace_every;
            cfg.timing = shared.timing;
            let (_, trace) = run(inst, &cfg)?;
            Ok((trace, None))
        }
        EngineKind::DelaySim { tau } => {
            let mut cfg = RunConfig::new(cell.plan.clone(), shared.epochs, seed);
            cfg.trace_every = shared.trace_every;
            cfg.timing = shared.timing;
            let (_, trace) = run_simulated_delay(inst, &cfg, *tau)?;
            Ok((trace, None))
        }
        EngineKind::Async { workers } => {
            let mut cfg = EngineConfig::new(cell.plan.clone(), seed, shared.epochs * m)
                .with_workers(*workers);
            cfg.trace_every = shared.trace_every;
            cfg.timing = shared.timing;
            let (_, trace, stats) = run_async(inst, &cfg)?;
            let delay = json!({
                "max": stats.max_delay,
                "mean": stats.mean_delay,
                "applied": stats.applied(),
                "dropped_stale": stats.dropped_stale,
                "dropped_overflow": stats.dropped_overflow,
            });
            Ok((trace, Some(delay)))
        }
        EngineKind::Sync => {
            let mut cfg = EngineConfig::new(cell.plan.clone(), seed, shared.epochs * m);
            cfg.trace_every = shared.trace_every;
            cfg.timing = shared.timing;
            let (_, trace) = run_sync_parallel(inst, &cfg)?;
            Ok((trace, None))
        }
    }
}

fn summarize(
    cell: &Cell,
    seed: u64,
    csv_name: &str,
    trace: &Trace,
    delay: Option<Value>,
    tolerance: f64,
) -> Value {
    let last = trace.rows.last();
    let to_tol = trace.rows.iter().find(|r| r.feas <= tolerance).map(|r| r.epoch);
    json!({
        "label": cell.label,
        "seed": seed,
        "csv": csv_name,
        "engine": match cell.engine {
            EngineKind::Serial => "serial",
            EngineKind::DelaySim { .. } => "delay",
            EngineKind::Async { .. } => "async",
            EngineKind::Sync => "sync",
        },
        "varied": cell.varied,
        "instance": cell.inst.label,
        "rows": trace.rows.len(),
        "final": {
            "epoch": last.map(|r| r.epoch),
            "feas": last.map(|r| r.feas),
            "obj_err": last.and_then(|r| r.obj_err),
            "wall_ms": last.map(|r| r.wall_ms),
            "iterations_per_sec": last.and_then(|r| r.iterations_per_sec),
        },
        "epochs_to_tolerance": to_tol,
        "tolerance": tolerance,
        "delay": delay,
        "ergodic": {
            "feas": trace.final_ergodic_feas,
            "obj_err": trace.final_ergodic_obj_err,
        },
    })
}

/// Attach a reference optimum according to the mode. The report records
/// what happened either way so the summary never has silent gaps.
fn attach_reference(inst: &mut Instance, mode: RefMode) -> Result<Value, Failure> {
    match mode {
        RefMode::Off => Ok(json!({ "mode": "off", "attached": false })),
        RefMode::On | RefMode::Auto => match bcu::reference_solve(inst, 1e-8) {
            Ok(sol) => {
                let report = json!({
                    "mode": if mode == RefMode::On { "on" } else { "auto" },
                    "attached": true,
                    "f_star": sol.f_star,
                    "kkt_residual": sol.kkt_residual,
                    "method": sol.method,
                });
                inst.optimum = Some(Optimum {
                    x: Some(sol.x_star),
                    f: Some(sol.f_star),
                    lambda: Some(sol.lambda_star),
                });
                Ok(report)
            }
            Err(bcu::Error::Unsupported(why)) if mode == RefMode::Auto => {
                Ok(json!({ "mode": "auto", "attached": false, "skipped": why }))
            }
            Err(e) => Err(Failure::Numerical(format!("reference solve failed: {e}"))),
        },
    }
}

fn override_rho(plan: &mut Plan, inst: &Instance, rho: Option<f64>) -> Result<(), Failure> {
    if let Some(rho) = rho {
        plan.rho = rho;
        plan.validate(inst)
            .map_err(|e| Failure::Usage(format!("[solver] rho: {e}")))?;
    }
    Ok(())
}

/// Balanced-label sparse dataset for svm_parallel runs that do not point at
/// a LIBSVM file: values uniform in [-1, 1] on nnz_per random coordinates.
pub fn synthetic_svm(
    samples: usize,
    features: usize,
    nnz_per: usize,
    seed: u64,
) -> Result<SvmDataset<f64>, Failure> {
    if samples == 0 || features == 0 {
        return Err(Failure::Usage(
            "[instance] samples and features must be at least 1".into(),
        ));
    }
    if nnz_per == 0 || nnz_per > features {
        return Err(Failure::Usage(format!(
            "[instance] nnz_per must be in 1..={features}, got {nnz_per}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels = Vec::with_capacity(samples);
    let mut rows = Vec::with_capacity(samples);
    for s in 0..samples {
        labels.push(if s % 2 == 0 { 1.0 } else { -1.0 });
        let mut pool: Vec<usize> = (0..features).collect();
        for k in 0..nnz_per {
            let j = k + rng.gen_range(0..features - k);
            pool.swap(k, j);
        }
        let mut entries: Vec<(usize, f64)> =
            pool[..nnz_per].iter().map(|&f| (f, rng.gen_range(-1.0..=1.0))).collect();
        entries.sort_unstable_by_key(|(f, _)| *f);
        rows.push(entries);
    }
    Ok(SvmDataset { labels, samples: rows, num_features: features })
}

fn entry(
    label: impl Into<String>,
    mut inst: Instance,
    mode: RefMode,
) -> Result<Rc<InstanceEntry>, Failure> {
    let reference = attach_reference(&mut inst, mode)?;
    Ok(Rc::new(InstanceEntry { label: label.into(), inst, reference }))
}

pub fn build_cells(
    resolved: &ResolvedPlan,
) -> Result<(Vec<Rc<InstanceEntry>>, Vec<Cell>), Failure> {
    let shared = &resolved.shared;
    let mut instances = Vec::new();
    let mut cells = Vec::new();
    match &resolved.experiment {
        Experiment::BpBetaSweep { q, n, nnz, blocks, iseed, betas } => {
            let e = entry(
                format!("bp_q{q}"),
                bcu::gen_basis_pursuit(*q, *n, *nnz, *blocks, *iseed)?,
                shared.reference,
            )?;
            instances.push(e.clone());
            for &beta in betas {
                let mut plan = serial_plan(&e.inst, beta)?;
                override_rho(&mut plan, &e.inst, shared.rho)?;
                cells.push(Cell {
                    label: format!("beta{beta}"),
                    varied: json!({ "beta": beta }),
                    inst: e.clone(),
                    plan,
                    engine: EngineKind::Serial,
                });
            }
        }
        Experiment::BpQSweep { qs, n, nnz, blocks, iseed, beta } => {
            for &q in qs {
                let e = entry(
                    format!("bp_q{q}"),
                    bcu::gen_basis_pursuit(q, *n, *nnz, *blocks, *iseed)?,
                    shared.reference,
                )?;
                instances.push(e.clone());
                let mut plan = serial_plan(&e.inst, *beta)?;
                override_rho(&mut plan, &e.inst, shared.rho)?;
                cells.push(Cell {
                    label: format!("q{q}"),
                    varied: json!({ "q": q }),
                    inst: e,
                    plan,
                    engine: EngineKind::Serial,
                });
            }
        }
        Experiment::NcqpDelay { qb, n, iseed, beta, taus, dep, alpha, workers: _ } => {
            let e = entry(
                format!("ncqp_q{qb}_n{n}"),
                bcu::gen_ncqp(*qb, *n, *iseed)?,
                shared.reference,
            )?;
            instances.push(e.clone());
            for &tau in taus {
                let mut plan = if *dep {
                    async_plan(&e.inst, *beta, tau, *alpha)?
                } else {
                    serial_plan(&e.inst, *beta)?
                };
                override_rho(&mut plan, &e.inst, shared.rho)?;
                cells.push(Cell {
                    label: format!("tau{tau}"),
                    varied: json!({ "tau": tau, "weights": if *dep { "dep" } else { "indep" } }),
                    inst: e.clone(),
                    plan,
                    engine: EngineKind::DelaySim { tau },
                });
            }
        }
        Experiment::SvmParallel { source, cap, width, beta, workers, tau } => {
            let data = match source {
                SvmSource::File(path) => bcu::read_libsvm(path)?,
                SvmSource::Synthetic { samples, features, nnz_per, seed } => {
                    synthetic_svm(*samples, *features, *nnz_per, *seed)?
                }
            };
            let e = entry(
                format!("dual_svm_{}x{}", data.num_samples(), data.num_features),
                bcu::gen_dual_svm(&data, *cap, *width)?,
                shared.reference,
            )?;
            instances.push(e.clone());
            for &p in workers {
                if p == 0 {
                    return Err(Failure::Usage("[solver] workers entries must be >= 1".into()));
                }
                let mut sync_plan = serial_plan(&e.inst, *beta)?;
                sync_plan.mode = PlanMode::SyncParallel { group_size: p };
                override_rho(&mut sync_plan, &e.inst, shared.rho)?;
                cells.push(Cell {
                    label: format!("sync_p{p}"),
                    varied: json!({ "p": p, "engine": "sync" }),
                    inst: e.clone(),
                    plan: sync_plan,
                    engine: EngineKind::Sync,
                });
                let tau_p = tau.unwrap_or(4 * p);
                let mut async_pl = async_plan(&e.inst, *beta, tau_p, 1.0)?;
                override_rho(&mut async_pl, &e.inst, shared.rho)?;
                cells.push(Cell {
                    label: format!("async_p{p}"),
                    varied: json!({ "p": p, "engine": "async", "tau": tau_p }),
                    inst: e.clone(),
                    plan: async_pl,
                    engine: EngineKind::Async { workers: p - 1 },
                });
            }
        }
        Experiment::Custom { spec, mode, beta } => {
            let e = entry("custom", spec.build::<f64>()?, shared.reference)?;
            instances.push(e.clone());
            let (label, varied, plan, engine) = match mode {
                CustomMode::Serial => (
                    "serial".to_string(),
                    json!({ "mode": "serial" }),
                    serial_plan(&e.inst, *beta)?,
                    EngineKind::Serial,
                ),
                CustomMode::Delay { tau } => (
                    format!("delay_tau{tau}"),
                    json!({ "mode": "delay", "tau": tau }),
                    serial_plan(&e.inst, *beta)?,
                    EngineKind::DelaySim { tau: *tau },
                ),
                CustomMode::Async { workers, tau, alpha } => (
                    format!("async_w{workers}"),
                    json!({ "mode": "async", "workers": workers, "tau": tau, "alpha": alpha }),
                    async_plan(&e.inst, *beta, *tau, *alpha)?,
                    EngineKind::Async { workers: *workers },
                ),
                CustomMode::Sync { group } => {
                    let mut plan = serial_plan(&e.inst, *beta)?;
                    plan.mode = PlanMode::SyncParallel { group_size: *group };
                    (
                        format!("sync_p{group}"),
                        json!({ "mode": "sync", "group": group }),
                        plan,
                        EngineKind::Sync,
                    )
                }
            };
            let mut plan = plan;
            override_rho(&mut plan, &e.inst, shared.rho)?;
            cells.push(Cell { label, varied, inst: e, plan, engine });
        }
    }
    Ok((instances, cells))
}

//! The verify verb: an invariant suite over an instance (loaded from JSON
//! or built from generator flags) or a trace CSV. One line per check; any
//! failure exits with the numerical-failure code.

use std::fs;
use std::io::BufReader;
use std::path::PathBuf;

use clap::Args;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bcu::{prox_apply, serial_plan, Instance, SaddleState, ScaledProxQuery, Trace};

use crate::Failure;

/// Family flags shared by verify and gen; they mirror the [instance] keys
/// of a custom plan.
#[derive(Args, Debug)]
pub struct FamilyArgs {
    /// basis_pursuit, ncqp, or dual_svm
    #[arg(long)]
    pub family: Option<String>,
    /// Constraint rows (basis_pursuit) or structural rows q_b (ncqp)
    #[arg(long)]
    pub q: Option<usize>,
    /// Primal dimension
    #[arg(long)]
    pub n: Option<usize>,
    /// Planted support size (basis_pursuit)
    #[arg(long)]
    pub nnz: Option<usize>,
    /// Block count (basis_pursuit)
    #[arg(long)]
    pub blocks: Option<usize>,
    /// Block width (basis_pursuit, dual_svm)
    #[arg(long)]
    pub width: Option<usize>,
    /// LIBSVM dataset path (dual_svm)
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Box cap (dual_svm)
    #[arg(long)]
    pub cap: Option<f64>,
    /// Generator seed
    #[arg(long)]
    pub seed: Option<u64>,
}

impl FamilyArgs {
    pub fn is_empty(&self) -> bool {
        self.family.is_none()
            && self.q.is_none()
            && self.n.is_none()
            && self.nnz.is_none()
            && self.blocks.is_none()
            && self.width.is_none()
            && self.data.is_none()
            && self.cap.is_none()
            && self.seed.is_none()
    }

    pub fn build_spec(&self) -> Result<bcu::GeneratorSpec, Failure> {
        let usage = |m: String| Failure::Usage(m);
        let need = |v: Option<usize>, flag: &str, fam: &str| {
            v.ok_or_else(|| usage(format!("--{flag} is required for --family {fam}")))
        };
        let family = match self.family.as_deref() {
            Some("basis_pursuit") => {
                if self.data.is_some() || self.cap.is_some() {
                    return Err(usage("--data and --cap only apply to dual_svm".into()));
                }
                bcu::Family::BasisPursuit {
                    q: need(self.q, "q", "basis_pursuit")?,
                    n: need(self.n, "n", "basis_pursuit")?,
                    nnz: need(self.nnz, "nnz", "basis_pursuit")?,
                }
            }
            Some("ncqp") => {
                if self.nnz.is_some() || self.blocks.is_some() || self.width.is_some()
                    || self.data.is_some() || self.cap.is_some()
                {
                    return Err(usage("ncqp takes only --q, --n, and --seed".into()));
                }
                bcu::Family::Ncqp { q_b: need(self.q, "q", "ncqp")?, n: need(self.n, "n", "ncqp")? }
            }
            Some("dual_svm") => {
                if self.q.is_some() || self.n.is_some() || self.nnz.is_some() || self.blocks.is_some() {
                    return Err(usage("dual_svm takes only --data, --width, --cap, and --seed".into()));
                }
                bcu::Family::DualSvm {
                    source: self
                        .data
                        .clone()
                        .ok_or_else(|| usage("--data is required for --family dual_svm".into()))?,
                }
            }
            Some(other) => {
                return Err(usage(format!(
                    "--family: expected basis_pursuit, ncqp, or dual_svm, got {other:?}"
                )))
            }
            None => return Err(usage("--family is required".into())),
        };
        let spec = bcu::GeneratorSpec {
            family,
            seed: self.seed.ok_or_else(|| usage("--seed is required".into()))?,
            block_count: self.blocks,
            block_width: self.width,
            svm_cap: self.cap,
        };
        spec.validate().map_err(|e| usage(format!("generator spec: {e}")))?;
        Ok(spec)
    }
}

#[derive(Args)]
pub struct VerifyArgs {
    /// Instance JSON file written by gen (or the library's save)
    #[arg(long)]
    pub instance: Option<PathBuf>,
    /// Trace CSV written by run
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    pub family: FamilyArgs,
}

struct Report {
    checks: usize,
    failed: usize,
}

impl Report {
    fn new() -> Self {
        Report { checks: 0, failed: 0 }
    }

    fn check(&mut self, name: &str, outcome: Result<String, String>) {
        self.checks += 1;
        match outcome {
            Ok(detail) => println!("   ok {name}: {detail}"),
            Err(why) => {
                self.failed += 1;
                println!(" FAIL {name}: {why}");
            }
        }
    }

    fn finish(self) -> Result<(), Failure> {
        if self.failed == 0 {
            println!("verify: all {} checks passed", self.checks);
            Ok(())
        } else {
            Err(Failure::Numerical(format!(
                "verify: {} of {} checks failed",
                self.failed, self.checks
            )))
        }
    }
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<(), Failure> {
    let targets =
        args.instance.is_some() as u8 + args.trace.is_some() as u8 + !args.family.is_empty() as u8;
    if targets != 1 {
        return Err(Failure::Usage(
            "pass exactly one target: --instance FILE, --trace FILE, or --family flags".into(),
        ));
    }
    if let Some(path) = &args.trace {
        let text = fs::File::open(path)
            .map_err(|e| Failure::Io(format!("cannot open {}: {e}", path.display())))?;
        return verify_trace(BufReader::new(text));
    }
    let inst = match &args.instance {
        Some(path) => Instance::load(path)?,
        None => args.family.build_spec()?.build()?,
    };
    verify_instance(&inst)
}

fn verify_trace<R: std::io::BufRead>(reader: R) -> Result<(), Failure> {
    let mut report = Report::new();
    let trace = match Trace::read_csv(reader) {
        Ok(t) => {
            report.check("parse", Ok(format!("{} rows, {} meta keys", t.rows.len(), t.meta.len())));
            Some(t)
        }
        Err(e) => {
            report.check("parse", Err(e.to_string()));
            None
        }
    };
    match &trace {
        Some(t) => {
            report.check(
                "schema",
                t.validate().map(|()| "epochs strictly increasing, metrics finite".to_string())
                    .map_err(|e| e.to_string()),
            );
            report.check(
                "config echo",
                if t.meta_value("instance").is_some() {
                    Ok(format!("instance fingerprint {}", t.meta_value("instance").unwrap()))
                } else {
                    Err("no instance fingerprint in the header".to_string())
                },
            );
        }
        None => {
            println!("   -- schema: skipped (no parsed trace)");
            println!("   -- config echo: skipped (no parsed trace)");
        }
    }
    report.finish()
}

fn nrm2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn verify_instance(inst: &Instance) -> Result<(), Failure> {
    let mut report = Report::new();
    let m = inst.block_count();

    report.check(
        "structure",
        inst.validate()
            .map(|()| format!("{m} blocks, dim {}, {} rows", inst.dim(), inst.num_rows()))
            .map_err(|e| e.to_string()),
    );

    // stored per-block spectral bounds must cover a fresh power-iteration
    // estimate; a deflated bound silently breaks every stepsize plan
    report.check("spectral bounds", {
        let mut worst: (f64, usize) = (f64::INFINITY, 0);
        for (i, block) in inst.constraint.blocks.iter().enumerate() {
            let stored = inst.constraint.per_block_sq_norm[i];
            let fresh = block.sq_norm_estimate();
            let ratio = if fresh > 0.0 { stored / fresh } else { 1.0 };
            if ratio < worst.0 {
                worst = (ratio, i);
            }
        }
        if worst.0 >= 1.0 - 1e-9 {
            Ok(format!("worst stored/recomputed ratio {:.6} over {m} blocks", worst.0))
        } else {
            Err(format!(
                "block {}: stored ||A_i||^2 covers only {:.3} of the recomputed estimate",
                worst.1, worst.0
            ))
        }
    });

    report.check("lipschitz probes", lipschitz_probes(inst));
    report.check("residual recursion", residual_recursion(inst));
    report.check("prox certificates", prox_certificates(inst));

    report.check("reference kkt", match bcu::reference_solve(inst, 1e-8) {
        Ok(sol) => {
            let scale = 1.0 + nrm2(&inst.constraint.rhs);
            if sol.kkt_residual <= 1e-6 * scale {
                Ok(format!(
                    "f* = {:.12e}, kkt residual {:.2e}, method {}",
                    sol.f_star, sol.kkt_residual, sol.method
                ))
            } else {
                Err(format!("kkt residual {:.2e} above 1e-6 x (1 + ||b||)", sol.kkt_residual))
            }
        }
        Err(bcu::Error::Unsupported(why)) => Ok(format!("skipped: {why}")),
        Err(e) => Err(e.to_string()),
    });

    report.finish()
}

/// Evenly spaced block indices including both ends, at most `cap` of them.
fn sample_blocks(m: usize, cap: usize) -> Vec<usize> {
    if m <= cap {
        return (0..m).collect();
    }
    (0..cap).map(|k| k * (m - 1) / (cap - 1)).collect()
}

fn lipschitz_probes(inst: &Instance) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = inst.dim();
    let l = &inst.smooth.lipschitz_blocks;
    let l_r = inst.smooth.lipschitz_cross;
    let mut g0 = vec![0.0; n];
    let mut g1 = vec![0.0; n];
    let mut worst = 0.0f64;
    for i in sample_blocks(inst.block_count(), 16) {
        let range = inst.partition.block_range(i);
        for _ in 0..3 {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let mut y = x.clone();
            let mut step_sq = 0.0;
            for v in &mut y[range.clone()] {
                let d: f64 = rng.gen_range(-1.0..=1.0);
                *v += d;
                step_sq += d * d;
            }
            let step = step_sq.sqrt();
            inst.smooth.grad_into(&x, &mut g0);
            inst.smooth.grad_into(&y, &mut g1);
            let full_diff: f64 =
                g0.iter().zip(&g1).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let block_diff: f64 = g0[range.clone()]
                .iter()
                .zip(&g1[range.clone()])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let slack = 1e-7 * (1.0 + step);
            if block_diff > l[i] * step * (1.0 + 1e-6) + slack {
                return Err(format!(
                    "block {i}: gradient moved {block_diff:.3e} for a {step:.3e} block step, above L_i = {:.3e}",
                    l[i]
                ));
            }
            if full_diff > l_r * step * (1.0 + 1e-6) + slack {
                return Err(format!(
                    "block {i}: full gradient moved {full_diff:.3e} for a {step:.3e} block step, above L_r = {l_r:.3e}"
                ));
            }
            if l[i] * step > 0.0 {
                worst = worst.max(block_diff / (l[i] * step));
            }
        }
    }
    if worst == 0.0 {
        Ok("zero smooth part, gradients immobile as declared".to_string())
    } else {
        Ok(format!("tightest block bound used {:.0}% of L_i", 100.0 * worst))
    }
}

fn residual_recursion(inst: &Instance) -> Result<String, String> {
    let plan = serial_plan(inst, 1.0).map_err(|e| e.to_string())?;
    let steps = (20 * inst.block_count()).clamp(200, 2000);
    let b_norm = nrm2(&inst.constraint.rhs);
    let mut state = SaddleState::new(inst, None).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut worst = 0.0f64;
    for _ in 0..steps {
        bcu::serial::step(inst, &mut state, &plan, &mut rng);
        let direct = inst.residual(&state.x);
        let drift = state
            .r
            .iter()
            .zip(&direct)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        worst = worst.max(drift);
        if drift > 1e-8 * (1.0 + b_norm) {
            return Err(format!(
                "maintained residual drifted {drift:.3e} from the direct product at k = {}",
                state.k
            ));
        }
    }
    Ok(format!("max drift {worst:.2e} over {steps} steps"))
}

fn prox_certificates(inst: &Instance) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut queries = 0usize;
    for i in sample_blocks(inst.block_count(), 16) {
        let term = &inst.prox_terms[i];
        let dim = inst.partition.block_dim(i);
        for _ in 0..5 {
            let anchor: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..=2.0)).collect();
            let weight = rng.gen_range(0.05..=2.0);
            let y = prox_apply(term, &ScaledProxQuery { anchor: anchor.clone(), weight })
                .map_err(|e| format!("block {i}: {e}"))?;
            let value = |z: &[f64]| -> f64 {
                let quad: f64 =
                    z.iter().zip(&anchor).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                term.value(z) + quad / (2.0 * weight)
            };
            let at_y = value(&y);
            if !at_y.is_finite() {
                return Err(format!("block {i}: prox output is outside its own domain"));
            }
            // first-order optimality, probed: no nearby feasible point and
            // not the anchor itself may do better
            let mut candidates = vec![anchor.clone()];
            for c in 0..dim.min(4) {
                for delta in [1e-4, -1e-4] {
                    let mut z = y.clone();
                    z[c] += delta;
                    candidates.push(z);
                }
            }
            for z in candidates {
                if !term.feasible(&z, 0.0) {
                    continue;
                }
                let at_z = value(&z);
                if at_z < at_y - 1e-9 * (1.0 + at_y.abs()) {
                    return Err(format!(
                        "block {i}: a probe beat the prox output by {:.3e}",
                        at_y - at_z
                    ));
                }
            }
            queries += 1;
        }
    }
    Ok(format!("{queries} scaled queries optimal against probe points"))
}

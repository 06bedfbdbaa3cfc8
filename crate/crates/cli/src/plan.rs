//! Experiment plan files: a flat `key = value` format with `[sections]`.
//! Parsing is strict in both directions: malformed lines and unknown or
//! unused keys are usage errors naming the field path, and every field a
//! run consumes (defaults included) is echoed into the summary JSON so a
//! trace can always be tied back to its full configuration.
//!
//! Grammar, one item per line:
//!   # comment            ignored (no inline comments)
//!   [section]            one of [instance], [solver], [output]
//!   key = value          value runs to end of line; lists are comma separated
//! The `experiment` key sits above any section header.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::{json, Map, Value};

use crate::Failure;

const SECTIONS: [&str; 3] = ["instance", "solver", "output"];

pub fn field(section: &str, key: &str) -> String {
    if section.is_empty() {
        key.to_string()
    } else {
        format!("[{section}] {key}")
    }
}

fn usage(msg: impl Display) -> Failure {
    Failure::Usage(msg.to_string())
}

struct Entry {
    section: String,
    key: String,
    value: String,
    line: usize,
    used: bool,
}

/// Parsed plan plus the record of everything consumed so far.
pub struct PlanReader {
    entries: Vec<Entry>,
    echo: BTreeMap<String, BTreeMap<String, String>>,
}

impl PlanReader {
    pub fn parse(text: &str) -> Result<Self, Failure> {
        let mut entries: Vec<Entry> = Vec::new();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let t = raw.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            if let Some(inner) = t.strip_prefix('[') {
                let Some(name) = inner.strip_suffix(']') else {
                    return Err(usage(format!("line {line}: unterminated section header {t:?}")));
                };
                let name = name.trim();
                if !SECTIONS.contains(&name) {
                    return Err(usage(format!(
                        "line {line}: unknown section [{name}]; expected [instance], [solver], or [output]"
                    )));
                }
                section = name.to_string();
                continue;
            }
            let Some((key, value)) = t.split_once('=') else {
                return Err(usage(format!("line {line}: expected key = value, got {t:?}")));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return Err(usage(format!("line {line}: empty key")));
            }
            if let Some(dup) = entries.iter().find(|e| e.section == section && e.key == key) {
                return Err(usage(format!(
                    "line {line}: {} already set on line {}",
                    field(&section, &key),
                    dup.line
                )));
            }
            entries.push(Entry { section: section.clone(), key, value, line, used: false });
        }
        Ok(PlanReader { entries, echo: BTreeMap::new() })
    }

    fn record(&mut self, section: &str, key: &str, value: impl Display) {
        self.echo
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), value.to_string());
    }

    fn take(&mut self, section: &str, key: &str) -> Option<String> {
        let e = self.entries.iter_mut().find(|e| e.section == section && e.key == key)?;
        e.used = true;
        Some(e.value.clone())
    }

    pub fn str_opt(&mut self, section: &str, key: &str) -> Option<String> {
        let v = self.take(section, key)?;
        self.record(section, key, &v);
        Some(v)
    }

    pub fn req_str(&mut self, section: &str, key: &str) -> Result<String, Failure> {
        self.str_opt(section, key)
            .ok_or_else(|| usage(format!("{} is required", field(section, key))))
    }

    pub fn str_or(&mut self, section: &str, key: &str, default: &str) -> String {
        match self.str_opt(section, key) {
            Some(v) => v,
            None => {
                self.record(section, key, default);
                default.to_string()
            }
        }
    }

    fn parse_one<T: FromStr>(section: &str, key: &str, v: &str) -> Result<T, Failure> {
        v.parse().map_err(|_| {
            usage(format!(
                "{}: cannot parse {v:?} as {}",
                field(section, key),
                std::any::type_name::<T>()
            ))
        })
    }

    pub fn num_opt<T: FromStr + Display>(
        &mut self,
        section: &str,
        key: &str,
    ) -> Result<Option<T>, Failure> {
        match self.take(section, key) {
            None => Ok(None),
            Some(v) => {
                let parsed: T = Self::parse_one(section, key, &v)?;
                self.record(section, key, &parsed);
                Ok(Some(parsed))
            }
        }
    }

    pub fn num_or<T: FromStr + Display>(
        &mut self,
        section: &str,
        key: &str,
        default: T,
    ) -> Result<T, Failure> {
        match self.num_opt(section, key)? {
            Some(v) => Ok(v),
            None => {
                self.record(section, key, &default);
                Ok(default)
            }
        }
    }

    pub fn req_num<T: FromStr + Display>(&mut self, section: &str, key: &str) -> Result<T, Failure> {
        match self.num_opt(section, key)? {
            Some(v) => Ok(v),
            None => Err(usage(format!("{} is required", field(section, key)))),
        }
    }

    pub fn bool_or(&mut self, section: &str, key: &str, default: bool) -> Result<bool, Failure> {
        match self.take(section, key) {
            None => {
                self.record(section, key, default);
                Ok(default)
            }
            Some(v) => match v.as_str() {
                "true" => Ok(true),
                "false" => Ok(false),
                _ => Err(usage(format!(
                    "{}: expected true or false, got {v:?}",
                    field(section, key)
                ))),
            }
            .map(|b| {
                self.record(section, key, b);
                b
            }),
        }
    }

    pub fn list_opt<T: FromStr + Display>(
        &mut self,
        section: &str,
        key: &str,
    ) -> Result<Option<Vec<T>>, Failure> {
        let Some(v) = self.take(section, key) else { return Ok(None) };
        let mut out: Vec<T> = Vec::new();
        for piece in v.split(',') {
            let piece = piece.trim();
            if piece.is_empty() {
                continue;
            }
            out.push(Self::parse_one(section, key, piece)?);
        }
        let shown: Vec<String> = out.iter().map(|x| x.to_string()).collect();
        self.record(section, key, shown.join(", "));
        Ok(Some(out))
    }

    pub fn req_list<T: FromStr + Display>(
        &mut self,
        section: &str,
        key: &str,
    ) -> Result<Vec<T>, Failure> {
        let list = self
            .list_opt(section, key)?
            .ok_or_else(|| usage(format!("{} is required", field(section, key))))?;
        if list.is_empty() {
            return Err(usage(format!("{} must be a nonempty list", field(section, key))));
        }
        Ok(list)
    }

    /// Every entry must have been consumed; the echo becomes the config
    /// object written into summaries.
    pub fn finish(self) -> Result<Value, Failure> {
        let stray: Vec<String> = self
            .entries
            .iter()
            .filter(|e| !e.used)
            .map(|e| format!("{} (line {})", field(&e.section, &e.key), e.line))
            .collect();
        if !stray.is_empty() {
            return Err(usage(format!("unknown keys: {}", stray.join(", "))));
        }
        let mut root = Map::new();
        for (section, kv) in self.echo {
            if section.is_empty() {
                for (k, v) in kv {
                    root.insert(k, Value::String(v));
                }
            } else {
                let mut obj = Map::new();
                for (k, v) in kv {
                    obj.insert(k, Value::String(v));
                }
                root.insert(section, Value::Object(obj));
            }
        }
        Ok(Value::Object(root))
    }
}

/// Knobs shared by every experiment, read from [solver] and [output].
pub struct Shared {
    pub epochs: u64,
    pub seeds: Vec<u64>,
    pub trace_every: u64,
    pub tolerance: f64,
    pub timing: bool,
    pub reference: RefMode,
    pub rho: Option<f64>,
}

#[derive(Clone, Copy, PartialEq)]
pub enum RefMode {
    /// Attach a reference optimum when the reference solver supports the
    /// instance size; skip quietly otherwise.
    Auto,
    On,
    Off,
}

pub enum SvmSource {
    File(PathBuf),
    Synthetic { samples: usize, features: usize, nnz_per: usize, seed: u64 },
}

pub enum Experiment {
    BpBetaSweep { q: usize, n: usize, nnz: usize, blocks: usize, iseed: u64, betas: Vec<f64> },
    BpQSweep { qs: Vec<usize>, n: usize, nnz: usize, blocks: usize, iseed: u64, beta: f64 },
    NcqpDelay {
        qb: usize,
        n: usize,
        iseed: u64,
        beta: f64,
        taus: Vec<usize>,
        dep: bool,
        alpha: f64,
        /// consumed by the speedup verb only
        workers: Option<Vec<usize>>,
    },
    SvmParallel {
        source: SvmSource,
        cap: f64,
        width: usize,
        beta: f64,
        workers: Vec<usize>,
        tau: Option<usize>,
    },
    Custom { spec: bcu::GeneratorSpec, mode: CustomMode, beta: f64 },
}

pub enum CustomMode {
    Serial,
    Delay { tau: usize },
    Async { workers: usize, tau: usize, alpha: f64 },
    Sync { group: usize },
}

pub struct ResolvedPlan {
    pub name: &'static str,
    pub experiment: Experiment,
    pub shared: Shared,
    pub outdir: PathBuf,
    pub echo: Value,
}

/// Flag overrides for the shared [solver] fields, applied on top of a
/// parsed plan and folded into the config echo.
#[derive(clap::Args)]
pub struct Overrides {
    /// Override the plan's [solver] epochs
    #[arg(long)]
    pub epochs: Option<u64>,
    /// Override [solver] seeds (comma separated)
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Override [solver] trace_every
    #[arg(long)]
    pub trace_every: Option<u64>,
    /// Override [solver] tolerance
    #[arg(long)]
    pub tolerance: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, r: &mut ResolvedPlan) -> Result<(), Failure> {
        if let Some(e) = self.epochs {
            if e == 0 {
                return Err(usage("--epochs must be at least 1"));
            }
            r.shared.epochs = e;
            r.echo["solver"]["epochs"] = json!(e.to_string());
        }
        if let Some(seeds) = &self.seeds {
            for (i, s) in seeds.iter().enumerate() {
                if seeds[..i].contains(s) {
                    return Err(usage(format!("--seeds: seed {s} appears twice")));
                }
            }
            let shown: Vec<String> = seeds.iter().map(u64::to_string).collect();
            r.shared.seeds = seeds.clone();
            r.echo["solver"]["seeds"] = json!(shown.join(", "));
        }
        if let Some(t) = self.trace_every {
            if t == 0 {
                return Err(usage("--trace-every must be at least 1"));
            }
            r.shared.trace_every = t;
            r.echo["solver"]["trace_every"] = json!(t.to_string());
        }
        if let Some(t) = self.tolerance {
            if !(t > 0.0) {
                return Err(usage("--tolerance must be positive"));
            }
            r.shared.tolerance = t;
            r.echo["solver"]["tolerance"] = json!(t.to_string());
        }
        Ok(())
    }
}

pub fn load(path: &Path, outdir_flag: Option<&Path>) -> Result<ResolvedPlan, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Io(format!("cannot read plan {}: {e}", path.display())))?;
    let plan_dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    resolve(&text, &plan_dir, outdir_flag)
}

/// Relative data paths count from the plan file's directory, so a plan and
/// its dataset can travel together; the file must exist up front.
fn data_file(plan_dir: &Path, section: &str, key: &str, raw: &str) -> Result<PathBuf, Failure> {
    let p = PathBuf::from(raw);
    let full = if p.is_absolute() { p } else { plan_dir.join(p) };
    if !full.is_file() {
        return Err(usage(format!("{}: no such file {}", field(section, key), full.display())));
    }
    Ok(full)
}

pub fn resolve(
    text: &str,
    plan_dir: &Path,
    outdir_flag: Option<&Path>,
) -> Result<ResolvedPlan, Failure> {
    let mut p = PlanReader::parse(text)?;
    let requested = p.req_str("", "experiment")?;

    let (name, experiment): (&'static str, Experiment) = match requested.as_str() {
        "bp_beta_sweep" => (
            "bp_beta_sweep",
            Experiment::BpBetaSweep {
                q: p.num_or("instance", "q", 300)?,
                n: p.num_or("instance", "n", 1000)?,
                nnz: p.num_or("instance", "nnz", 30)?,
                blocks: p.num_or("instance", "blocks", 100)?,
                iseed: p.req_num("instance", "seed")?,
                betas: p.req_list("solver", "beta")?,
            },
        ),
        "bp_q_sweep" => (
            "bp_q_sweep",
            Experiment::BpQSweep {
                qs: p.req_list("instance", "q")?,
                n: p.num_or("instance", "n", 1000)?,
                nnz: p.num_or("instance", "nnz", 30)?,
                blocks: p.num_or("instance", "blocks", 100)?,
                iseed: p.req_num("instance", "seed")?,
                beta: p.num_or("solver", "beta", 10.0)?,
            },
        ),
        "ncqp_delay" => {
            let dep = match p.req_str("solver", "weights")?.as_str() {
                "dep" => true,
                "indep" => false,
                other => {
                    return Err(usage(format!(
                        "[solver] weights: expected dep or indep, got {other:?}"
                    )))
                }
            };
            (
                "ncqp_delay",
                Experiment::NcqpDelay {
                    qb: p.num_or("instance", "q", 200)?,
                    n: p.num_or("instance", "n", 2000)?,
                    iseed: p.req_num("instance", "seed")?,
                    beta: p.num_or("solver", "beta", std::f64::consts::SQRT_2)?,
                    taus: p.req_list("solver", "taus")?,
                    dep,
                    alpha: p.num_or("solver", "alpha", 1.0)?,
                    workers: p.list_opt("solver", "workers")?,
                },
            )
        }
        "svm_parallel" => {
            let source = match p.str_opt("instance", "data") {
                Some(path) => {
                    if p.num_opt::<u64>("instance", "seed")?.is_some() {
                        return Err(usage(
                            "[instance] seed only applies to synthetic data; drop it when data is set",
                        ));
                    }
                    SvmSource::File(data_file(plan_dir, "instance", "data", &path)?)
                }
                None => SvmSource::Synthetic {
                    samples: p.req_num("instance", "samples")?,
                    features: p.req_num("instance", "features")?,
                    nnz_per: p.num_or("instance", "nnz_per", 10)?,
                    seed: p.req_num("instance", "seed")?,
                },
            };
            (
                "svm_parallel",
                Experiment::SvmParallel {
                    source,
                    cap: p.num_or("instance", "cap", bcu::DEFAULT_SVM_CAP)?,
                    width: p.num_or("instance", "width", 1)?,
                    beta: p.num_or("solver", "beta", 1.0)?,
                    workers: p.req_list("solver", "workers")?,
                    tau: p.num_opt("solver", "tau")?,
                },
            )
        }
        "custom" => {
            let spec = custom_spec(&mut p, plan_dir)?;
            let beta = p.req_num("solver", "beta")?;
            let mode = match p.req_str("solver", "mode")?.as_str() {
                "serial" => CustomMode::Serial,
                "delay" => CustomMode::Delay { tau: p.req_num("solver", "tau")? },
                "async" => {
                    let workers: usize = p.req_num("solver", "workers")?;
                    CustomMode::Async {
                        workers,
                        tau: p.num_or("solver", "tau", 4 * workers.max(1))?,
                        alpha: p.num_or("solver", "alpha", 1.0)?,
                    }
                }
                "sync" => CustomMode::Sync { group: p.req_num("solver", "group")? },
                other => {
                    return Err(usage(format!(
                        "[solver] mode: expected serial, delay, async, or sync, got {other:?}"
                    )))
                }
            };
            ("custom", Experiment::Custom { spec, mode, beta })
        }
        other => {
            return Err(usage(format!(
                "experiment: expected bp_beta_sweep, bp_q_sweep, ncqp_delay, svm_parallel, or custom, got {other:?}"
            )))
        }
    };

    let seeds: Vec<u64> = p.req_list("solver", "seeds")?;
    for (i, s) in seeds.iter().enumerate() {
        if seeds[..i].contains(s) {
            return Err(usage(format!("[solver] seeds: seed {s} appears twice")));
        }
    }
    let trace_every = p.num_or("solver", "trace_every", 1)?;
    if trace_every == 0 {
        return Err(usage("[solver] trace_every must be at least 1"));
    }
    let tolerance = p.num_or("solver", "tolerance", 1e-4)?;
    if !(tolerance > 0.0) {
        return Err(usage("[solver] tolerance must be positive"));
    }
    let reference = match p.str_or("solver", "reference", "auto").as_str() {
        "auto" => RefMode::Auto,
        "on" => RefMode::On,
        "off" => RefMode::Off,
        other => {
            return Err(usage(format!(
                "[solver] reference: expected auto, on, or off, got {other:?}"
            )))
        }
    };
    let shared = Shared {
        epochs: p.req_num("solver", "epochs")?,
        seeds,
        trace_every,
        tolerance,
        timing: p.bool_or("solver", "timing", false)?,
        reference,
        rho: p.num_opt("solver", "rho")?,
    };
    if shared.epochs == 0 {
        return Err(usage("[solver] epochs must be at least 1"));
    }

    // --outdir beats the plan's [output] dir, which beats $BCU_BENCH_OUTDIR
    let plan_dir = p.str_opt("output", "dir");
    let outdir = outdir_flag.map(Path::to_path_buf).unwrap_or_else(|| {
        plan_dir
            .map(PathBuf::from)
            .or_else(|| std::env::var_os("BCU_BENCH_OUTDIR").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("bench-out"))
    });

    let mut echo = p.finish()?;
    echo["output"] = json!({ "dir": outdir.display().to_string() });
    Ok(ResolvedPlan { name, experiment, shared, outdir, echo })
}

/// [instance] keys for the custom experiment, mirrored by the gen and
/// verify flags: family plus its dimensions, routed through the library's
/// generator spec so validation lives in one place.
fn custom_spec(p: &mut PlanReader, plan_dir: &Path) -> Result<bcu::GeneratorSpec, Failure> {
    let family = match p.req_str("instance", "family")?.as_str() {
        "basis_pursuit" => bcu::Family::BasisPursuit {
            q: p.req_num("instance", "q")?,
            n: p.req_num("instance", "n")?,
            nnz: p.req_num("instance", "nnz")?,
        },
        "ncqp" => bcu::Family::Ncqp {
            q_b: p.req_num("instance", "q")?,
            n: p.req_num("instance", "n")?,
        },
        "dual_svm" => {
            let raw = p.req_str("instance", "data")?;
            bcu::Family::DualSvm { source: data_file(plan_dir, "instance", "data", &raw)? }
        }
        other => {
            return Err(usage(format!(
                "[instance] family: expected basis_pursuit, ncqp, or dual_svm, got {other:?}"
            )))
        }
    };
    let spec = bcu::GeneratorSpec {
        family,
        seed: p.req_num("instance", "seed")?,
        block_count: p.num_opt("instance", "blocks")?,
        block_width: p.num_opt("instance", "width")?,
        svm_cap: p.num_opt("instance", "cap")?,
    };
    spec.validate().map_err(|e| usage(format!("[instance]: {e}")))?;
    Ok(spec)
}

//! Per-epoch run traces with one stable CSV schema across every execution
//! mode. Serial runs leave the delay columns empty; the async engine fills
//! them; the delay simulator also stamps tau. Floats are written with the
//! shortest round-trip formatting so identical runs give identical bytes.

use std::io::{self, BufRead, Write};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const TRACE_HEADER: &str =
    "epoch,obj_err,feas,wall_ms,iterations_per_sec,max_delay,mean_delay,dropped,tau";

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow<T> {
    pub epoch: u64,
    /// |F(x^k) - F*|; absent when the instance carries no reference optimum.
    pub obj_err: Option<T>,
    /// ||r^k|| as maintained by the residual recursion.
    pub feas: T,
    /// 0 when timing is disabled so traces stay byte-deterministic.
    pub wall_ms: f64,
    pub iterations_per_sec: Option<f64>,
    pub max_delay: Option<u64>,
    pub mean_delay: Option<f64>,
    pub dropped: Option<u64>,
    pub tau: Option<usize>,
}

impl<T: Scalar> TraceRow<T> {
    pub fn serial(epoch: u64, obj_err: Option<T>, feas: T, wall_ms: f64) -> Self {
        TraceRow {
            epoch,
            obj_err,
            feas,
            wall_ms,
            iterations_per_sec: None,
            max_delay: None,
            mean_delay: None,
            dropped: None,
            tau: None,
        }
    }
}

/// Distribution of the staleness (in master iterations) of the updates an
/// engine actually applied, plus how many messages never made it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DelayStats {
    /// histogram[d] = number of applied updates whose inputs were d
    /// iterations old when applied.
    pub histogram: Vec<u64>,
    pub max_delay: u64,
    pub mean_delay: f64,
    pub dropped_stale: u64,
    pub dropped_overflow: u64,
}

impl DelayStats {
    pub fn from_histogram(histogram: Vec<u64>, dropped_stale: u64, dropped_overflow: u64) -> Self {
        let mut max_delay = 0u64;
        let mut total = 0u64;
        let mut weighted = 0f64;
        for (d, &count) in histogram.iter().enumerate() {
            if count > 0 {
                max_delay = d as u64;
                total += count;
                weighted += d as f64 * count as f64;
            }
        }
        let mean_delay = if total == 0 { 0.0 } else { weighted / total as f64 };
        DelayStats { histogram, max_delay, mean_delay, dropped_stale, dropped_overflow }
    }

    pub fn applied(&self) -> u64 {
        self.histogram.iter().sum()
    }
}

/// A complete run record: `# key: value` metadata lines (config echo and
/// instance fingerprint), the per-epoch rows, and the end-of-run ergodic
/// summary used by the (eps, sigma) check.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTrace<T> {
    pub meta: Vec<(String, String)>,
    pub rows: Vec<TraceRow<T>>,
    pub final_ergodic_obj_err: Option<T>,
    pub final_ergodic_feas: Option<T>,
}

impl<T: Scalar> RunTrace<T> {
    pub fn new() -> Self {
        RunTrace { meta: Vec::new(), rows: Vec::new(), final_ergodic_obj_err: None, final_ergodic_feas: None }
    }

    pub fn push_meta(&mut self, key: &str, value: impl std::fmt::Display) {
        self.meta.push((key.to_string(), value.to_string()));
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Epochs strictly increasing, feasibility finite and nonnegative,
    /// objective errors finite when present. A violated-indicator infinity
    /// leaking into obj_err fails here rather than being clamped.
    pub fn validate(&self) -> Result<()> {
        let mut prev: Option<u64> = None;
        for row in &self.rows {
            if let Some(p) = prev {
                if row.epoch <= p {
                    return Err(Error::State(format!(
                        "trace epochs not strictly increasing at epoch {}",
                        row.epoch
                    )));
                }
            }
            prev = Some(row.epoch);
            if !(row.feas >= T::zero()) || !row.feas.is_finite() {
                return Err(Error::State(format!(
                    "bad feasibility value at epoch {}: {}",
                    row.epoch, row.feas
                )));
            }
            if let Some(e) = row.obj_err {
                if !e.is_finite() || e < T::zero() {
                    return Err(Error::State(format!(
                        "bad objective error at epoch {}: {e}",
                        row.epoch
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        for (k, v) in &self.meta {
            writeln!(w, "# {k}: {v}")?;
        }
        writeln!(w, "{TRACE_HEADER}")?;
        for row in &self.rows {
            write!(w, "{},", row.epoch)?;
            match row.obj_err {
                Some(v) => write!(w, "{v},")?,
                None => write!(w, ",")?,
            }
            write!(w, "{},{},", row.feas, row.wall_ms)?;
            match row.iterations_per_sec {
                Some(v) => write!(w, "{v},")?,
                None => write!(w, ",")?,
            }
            match row.max_delay {
                Some(v) => write!(w, "{v},")?,
                None => write!(w, ",")?,
            }
            match row.mean_delay {
                Some(v) => write!(w, "{v},")?,
                None => write!(w, ",")?,
            }
            match row.dropped {
                Some(v) => write!(w, "{v},")?,
                None => write!(w, ",")?,
            }
            match row.tau {
                Some(v) => writeln!(w, "{v}")?,
                None => writeln!(w)?,
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("trace is valid utf8")
    }

    /// Parse a CSV produced by `write_csv`. Errors name the 1-based line.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut trace = RunTrace::new();
        let mut seen_header = false;
        for (idx, line) in r.lines().enumerate() {
            let lineno = idx + 1;
            let line = line?;
            let line = line.trim_end_matches(['\r', '\n']);
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim_start();
                match rest.split_once(':') {
                    Some((k, v)) => trace.meta.push((k.trim().to_string(), v.trim().to_string())),
                    None => trace.meta.push((rest.to_string(), String::new())),
                }
                continue;
            }
            if !seen_header {
                if line != TRACE_HEADER {
                    return Err(Error::Ingestion {
                        line: lineno,
                        msg: format!("expected trace header, got {line:?}"),
                    });
                }
                seen_header = true;
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 9 {
                return Err(Error::Ingestion {
                    line: lineno,
                    msg: format!("expected 9 cells, got {}", cells.len()),
                });
            }
            let bad = |what: &str| Error::Ingestion { line: lineno, msg: format!("bad {what} cell") };
            let parse_u64 = |s: &str, what: &str| -> Result<u64> {
                s.parse().map_err(|_| bad(what))
            };
            let parse_f64 = |s: &str, what: &str| -> Result<f64> {
                s.parse().map_err(|_| bad(what))
            };
            fn opt(s: &str) -> Option<&str> {
                if s.is_empty() {
                    None
                } else {
                    Some(s)
                }
            }
            let row = TraceRow {
                epoch: parse_u64(cells[0], "epoch")?,
                obj_err: match opt(cells[1]) {
                    Some(s) => Some(T::cast(parse_f64(s, "obj_err")?)),
                    None => None,
                },
                feas: T::cast(parse_f64(cells[2], "feas")?),
                wall_ms: parse_f64(cells[3], "wall_ms")?,
                iterations_per_sec: match opt(cells[4]) {
                    Some(s) => Some(parse_f64(s, "iterations_per_sec")?),
                    None => None,
                },
                max_delay: match opt(cells[5]) {
                    Some(s) => Some(parse_u64(s, "max_delay")?),
                    None => None,
                },
                mean_delay: match opt(cells[6]) {
                    Some(s) => Some(parse_f64(s, "mean_delay")?),
                    None => None,
                },
                dropped: match opt(cells[7]) {
                    Some(s) => Some(parse_u64(s, "dropped")?),
                    None => None,
                },
                tau: match opt(cells[8]) {
                    Some(s) => Some(parse_u64(s, "tau")? as usize),
                    None => None,
                },
            };
            trace.rows.push(row);
        }
        if !seen_header {
            return Err(Error::Ingestion { line: 0, msg: "no trace header found".into() });
        }
        Ok(trace)
    }
}

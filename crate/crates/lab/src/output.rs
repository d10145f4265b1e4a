//! CSV traces, run summaries and atomic file writes.
//!
//! Every file starts with a `# master_seed=...` comment line (or
//! `# seeds=...` for multi-seed files). Reals are written with 17
//! significant digits, so values read back bit-for-bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use adascale_core::analysis::MeanCi;
use adascale_core::engine::Trace;

use crate::error::{LabError, Result};

pub const TRACE_HEADER: &str = "t,tau,S,r,eta,F,grad_mean_sq,grad_agg_sq";

/// 17 significant digits in scientific notation.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x:.16e}")
    }
}

fn seed_line(seeds: &[u64]) -> String {
    match seeds {
        [one] => format!("# master_seed={one}\n"),
        many => {
            let list: Vec<String> = many.iter().map(u64::to_string).collect();
            format!("# seeds={}\n", list.join(" "))
        }
    }
}

pub fn trace_csv(trace: &Trace) -> String {
    let mut out = seed_line(&[trace.seed]);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in &trace.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.t,
            fmt_f64(r.tau),
            r.scale,
            fmt_f64(r.gain),
            fmt_f64(r.lr),
            fmt_f64(r.objective),
            fmt_f64(r.grad_mean_sq),
            fmt_f64(r.grad_agg_sq),
        );
    }
    out
}

/// Per-seed record: final F, total iterations, final τ and divergence.
pub fn runs_csv(traces: &[Trace]) -> String {
    let seeds: Vec<u64> = traces.iter().map(|t| t.seed).collect();
    let mut out = seed_line(&seeds);
    out.push_str("seed,final_F,total_iterations,final_tau,diverged\n");
    for t in traces {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            t.seed,
            fmt_f64(t.final_objective),
            t.iterations(),
            fmt_f64(t.final_tau),
            t.diverged
        );
    }
    out
}

/// Mean and sample standard deviation of the final metrics across seeds.
/// Desk-scale objectives have no held-out set, so the objective metric and
/// the training loss are both the final `F`. When any seed diverged the
/// loss columns read `N/A`.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub seeds: Vec<u64>,
    pub objective: Option<(f64, f64)>,
    pub iterations: (f64, f64),
    pub diverged: usize,
}

impl Summary {
    pub fn of(traces: &[Trace]) -> Self {
        let finals: Vec<f64> = traces.iter().map(|t| t.final_objective).collect();
        let iters: Vec<f64> = traces.iter().map(|t| t.iterations() as f64).collect();
        let diverged = traces.iter().filter(|t| t.diverged).count();
        let stats = |v: &[f64]| {
            let m = MeanCi::of(v);
            (m.mean, m.std_dev())
        };
        Self {
            seeds: traces.iter().map(|t| t.seed).collect(),
            objective: (diverged == 0).then(|| stats(&finals)),
            iterations: stats(&iters),
            diverged,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = seed_line(&self.seeds);
        out.push_str("metric,mean,std,n\n");
        let n = self.seeds.len();
        for name in ["objective", "training_loss"] {
            match self.objective {
                Some((m, s)) => {
                    let _ = writeln!(out, "{name},{},{},{n}", fmt_f64(m), fmt_f64(s));
                }
                None => {
                    let _ = writeln!(out, "{name},N/A,N/A,{n}");
                }
            }
        }
        let _ = writeln!(
            out,
            "total_iterations,{},{},{n}",
            fmt_f64(self.iterations.0),
            fmt_f64(self.iterations.1)
        );
        let _ = writeln!(out, "diverged,{},0,{n}", self.diverged);
        out
    }
}

/// Write through a temporary sibling and rename into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| LabError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| LabError::io(path, e))
}

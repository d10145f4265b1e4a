//! Online gain estimates against offline and closed-form gains along a run.

use std::fmt::Write as _;

use adascale_core::engine::{run_observed, Executor, Trace, TrainConfig};
use adascale_core::gain::{analytic_gain, oracle_gain};
use adascale_core::objectives::StochasticObjective;
use adascale_core::rng::{Purpose, StreamKey};
use adascale_core::{Error as CoreError, ParamVector};

use crate::error::Result;
use crate::output::fmt_f64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainRow {
    pub t: u64,
    pub tau: f64,
    pub scale: usize,
    pub online: f64,
    pub oracle: f64,
    /// `None` when the objective has no closed-form moments.
    pub analytic: Option<f64>,
}

/// Train with `cfg` and, every `every` iterations, evaluate the oracle gain
/// from `n_batches` fresh batches and the analytic gain at the current
/// iterate. Oracle batches come from a stream separate from training.
pub fn compare_gains<O, E>(
    obj: &O,
    w0: ParamVector,
    cfg: &TrainConfig,
    every: u64,
    n_batches: usize,
    exec: &E,
) -> Result<(Trace, Vec<GainRow>)>
where
    O: StochasticObjective + ?Sized,
    E: Executor,
{
    let oracle_key = StreamKey::new(cfg.seed, Purpose::Oracle);
    let mut rows = Vec::new();
    let trace = run_observed(obj, w0, cfg, exec, &mut |rec, w| {
        if rec.t % every != 0 {
            return Ok(());
        }
        let oracle = oracle_gain(obj, w, rec.scale, n_batches, &oracle_key.iteration(rec.t))?;
        let analytic = match analytic_gain(obj, w, rec.scale) {
            Ok(r) => Some(r),
            Err(CoreError::Capability(_)) => None,
            Err(e) => return Err(e),
        };
        rows.push(GainRow {
            t: rec.t,
            tau: rec.tau,
            scale: rec.scale,
            online: rec.gain,
            oracle,
            analytic,
        });
        Ok(())
    })?;
    Ok((trace, rows))
}

pub fn gain_csv(seed: u64, rows: &[GainRow]) -> String {
    let mut out = format!("# master_seed={seed}\nt,tau,S,online,oracle,analytic\n");
    for r in rows {
        let analytic = r.analytic.map_or_else(|| "NA".to_string(), fmt_f64);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.t,
            fmt_f64(r.tau),
            r.scale,
            fmt_f64(r.online),
            fmt_f64(r.oracle),
            analytic
        );
    }
    out
}

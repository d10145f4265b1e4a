//! Training loops: Scaled SGD, AdaScale SGD and elastic AdaScale.
//!
//! Each iteration samples `S` worker batches from counter-addressed streams,
//! reduces the worker gradients in worker order, and then updates gain,
//! learning rate and parameters on the calling thread. Results are therefore
//! independent of how many threads the [`Executor`] uses.

use alloc::vec::Vec;

use crate::error::{config_err, Result};
use crate::gain::{gain_sample, GainConfig, GainState};
use crate::linalg::ParamVector;
use crate::objectives::{sample_batch, StochasticObjective};
use crate::rng::{IterationStream, Purpose, StreamKey};
use crate::schedules::{LrSchedule, ScaledSchedule, ScalingRule, DEFAULT_WARMUP_FRACTION};

/// Objective values above this are treated as divergence.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Runs `n` independent jobs and returns their results in index order.
pub trait Executor: Sync {
    fn map<T, F>(&self, n: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs jobs one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, n: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(job).collect()
    }
}

/// Per-worker gradients and their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub per_worker: Vec<ParamVector>,
    pub mean: ParamVector,
}

/// Sample `scale` batches at `w` and reduce their gradients in worker order.
pub fn compute_gradient<O, E>(
    obj: &O,
    w: &ParamVector,
    scale: usize,
    stream: &IterationStream<'_>,
    exec: &E,
) -> Result<GradientBundle>
where
    O: StochasticObjective + ?Sized,
    E: Executor,
{
    if scale == 0 {
        return Err(config_err!("scale S must be at least 1"));
    }
    let per_worker = exec
        .map(scale, |i| {
            obj.stochastic_gradient(w, &sample_batch(obj, i, stream))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    if per_worker.iter().all(|g| g == &per_worker[0]) {
        // exact for zero-noise objectives at any S
        let mean = per_worker[0].clone();
        return Ok(GradientBundle { per_worker, mean });
    }
    let mut mean = ParamVector::zeros(w.dim());
    for g in &per_worker {
        mean.axpy(1.0, g);
    }
    let s = scale as f64;
    mean.as_mut_slice().iter_mut().for_each(|x| *x /= s);
    Ok(GradientBundle { per_worker, mean })
}

/// Which loop a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Algorithm {
    ScaledSgd,
    #[default]
    Adascale,
}

/// Scale `scale` becomes active once `τ ≥ start_tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ElasticStage {
    pub start_tau: f64,
    #[cfg_attr(feature = "serde", serde(rename = "S"))]
    pub scale: usize,
}

/// Loop parameters of one training run (objective and schedule excluded).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct RunSpec {
    pub algorithm: Algorithm,
    /// Fixed scale; ignored when `elastic` is given.
    #[cfg_attr(
        feature = "serde",
        serde(rename = "S", default, skip_serializing_if = "Option::is_none")
    )]
    pub scale: Option<usize>,
    /// Elastic scale schedule (AdaScale only), sorted by `start_tau`.
    #[cfg_attr(
        feature = "serde",
        serde(default, skip_serializing_if = "Option::is_none")
    )]
    pub elastic: Option<Vec<ElasticStage>>,
    /// Scaling rule for Scaled SGD.
    #[cfg_attr(
        feature = "serde",
        serde(default, skip_serializing_if = "Option::is_none")
    )]
    pub rule: Option<ScalingRule>,
    /// Single-batch horizon `T_1` for Scaled SGD.
    #[cfg_attr(
        feature = "serde",
        serde(rename = "T", default, skip_serializing_if = "Option::is_none")
    )]
    pub iterations: Option<u64>,
    /// Scale-invariant budget for AdaScale.
    #[cfg_attr(
        feature = "serde",
        serde(rename = "T_SI", default, skip_serializing_if = "Option::is_none")
    )]
    pub t_si: Option<u64>,
    /// Heavy-ball momentum ρ ∈ [0, 1).
    #[cfg_attr(feature = "serde", serde(default))]
    pub momentum: f64,
    #[cfg_attr(
        feature = "serde",
        serde(default, skip_serializing_if = "Option::is_none")
    )]
    pub warmup_fraction: Option<f64>,
    #[cfg_attr(
        feature = "serde",
        serde(rename = "T_target", default, skip_serializing_if = "Option::is_none")
    )]
    pub t_target: Option<u64>,
}

impl RunSpec {
    pub fn adascale(scale: usize, t_si: u64) -> Self {
        Self {
            algorithm: Algorithm::Adascale,
            scale: Some(scale),
            elastic: None,
            rule: None,
            iterations: None,
            t_si: Some(t_si),
            momentum: 0.0,
            warmup_fraction: None,
            t_target: None,
        }
    }

    pub fn elastic(stages: Vec<ElasticStage>, t_si: u64) -> Self {
        Self {
            scale: None,
            elastic: Some(stages),
            ..Self::adascale(1, t_si)
        }
    }

    pub fn scaled_sgd(rule: ScalingRule, scale: usize, t1: u64) -> Self {
        Self {
            algorithm: Algorithm::ScaledSgd,
            rule: Some(rule),
            iterations: Some(t1),
            t_si: None,
            ..Self::adascale(scale, 0)
        }
    }

    pub fn with_momentum(mut self, rho: f64) -> Self {
        self.momentum = rho;
        self
    }

    /// Largest scale the run can use.
    pub fn max_scale(&self) -> usize {
        match &self.elastic {
            Some(stages) => stages.iter().map(|s| s.scale).max().unwrap_or(1),
            None => self.scale.unwrap_or(1),
        }
    }
}

/// Everything needed to run one seed, besides the objective and start point.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub run: RunSpec,
    pub schedule: LrSchedule,
    pub gain: GainConfig,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(run: RunSpec, schedule: LrSchedule) -> Self {
        Self {
            run,
            schedule,
            gain: GainConfig::default(),
            seed: 0,
        }
    }

    pub fn with_gain(mut self, gain: GainConfig) -> Self {
        self.gain = gain;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let run = &self.run;
        self.schedule.validate()?;
        self.gain.validate()?;
        if !(0.0..1.0).contains(&run.momentum) {
            return Err(config_err!(
                "momentum must lie in [0, 1), got {}",
                run.momentum
            ));
        }
        match (run.iterations, run.t_si) {
            (Some(_), Some(_)) => {
                return Err(config_err!("set exactly one of T and T_SI, not both"))
            }
            (None, None) => return Err(config_err!("one of T or T_SI is required")),
            _ => {}
        }
        match run.algorithm {
            Algorithm::ScaledSgd => {
                if run.t_si.is_some() || run.iterations == Some(0) {
                    return Err(config_err!("scaled_sgd needs T >= 1 and no T_SI"));
                }
                if run.elastic.is_some() {
                    return Err(config_err!(
                        "elastic scaling is only supported for adascale"
                    ));
                }
                if run.scale.unwrap_or(0) == 0 {
                    return Err(config_err!("scaled_sgd needs S >= 1"));
                }
            }
            Algorithm::Adascale => {
                if run.iterations.is_some() || run.t_si == Some(0) {
                    return Err(config_err!("adascale needs T_SI >= 1 and no T"));
                }
                if run.rule.is_some() {
                    return Err(config_err!("scaling rules apply to scaled_sgd only"));
                }
                match &run.elastic {
                    Some(stages) => validate_stages(stages)?,
                    None if run.scale.unwrap_or(0) == 0 => {
                        return Err(config_err!("adascale needs S >= 1"));
                    }
                    None => {}
                }
            }
        }
        Ok(())
    }
}

fn validate_stages(stages: &[ElasticStage]) -> Result<()> {
    let Some(first) = stages.first() else {
        return Err(config_err!("elastic schedule must not be empty"));
    };
    if first.start_tau != 0.0 {
        return Err(config_err!("first elastic stage must start at tau = 0"));
    }
    // negated so NaN start points are rejected too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    let unsorted = stages
        .windows(2)
        .any(|w| !(w[0].start_tau < w[1].start_tau));
    if unsorted {
        return Err(config_err!(
            "elastic stages must be sorted by strictly increasing start_tau"
        ));
    }
    if stages.iter().any(|s| s.scale == 0) {
        return Err(config_err!("elastic stages need S >= 1"));
    }
    Ok(())
}

/// Scale of the latest stage that has started by `tau`.
pub fn active_scale(stages: &[ElasticStage], tau: f64) -> usize {
    stages
        .iter()
        .rev()
        .find(|s| s.start_tau <= tau)
        .map_or(stages[0].scale, |s| s.scale)
}

/// One logged iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub t: u64,
    /// Scale-invariant iteration at the start of the step.
    pub tau: f64,
    pub scale: usize,
    pub gain: f64,
    pub lr: f64,
    /// `F(w_t)` before the step.
    pub objective: f64,
    pub grad_mean_sq: f64,
    pub grad_agg_sq: f64,
}

/// Result of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub final_w: ParamVector,
    pub final_objective: f64,
    /// `τ_T`.
    pub final_tau: f64,
    pub diverged: bool,
    pub seed: u64,
}

impl Trace {
    /// Iterations actually executed, `T`.
    pub fn iterations(&self) -> u64 {
        self.records.len() as u64
    }

    /// `(τ_t, F(w_t))` for every iteration plus the final point.
    pub fn curve_by_tau(&self) -> (Vec<f64>, Vec<f64>) {
        self.curve(|r| r.tau, self.final_tau)
    }

    /// `(t, F(w_t))` for every iteration plus the final point.
    pub fn curve_by_iteration(&self) -> (Vec<f64>, Vec<f64>) {
        self.curve(|r| r.t as f64, self.iterations() as f64)
    }

    fn curve(&self, x: impl Fn(&TraceRecord) -> f64, x_end: f64) -> (Vec<f64>, Vec<f64>) {
        let mut xs: Vec<f64> = self.records.iter().map(&x).collect();
        let mut ys: Vec<f64> = self.records.iter().map(|r| r.objective).collect();
        xs.push(x_end);
        ys.push(self.final_objective);
        (xs, ys)
    }
}

/// Heavy-ball velocity `v ← ρ v + ḡ`, `w ← w − η v`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumState {
    pub velocity: ParamVector,
    pub rho: f64,
}

impl MomentumState {
    pub fn new(dim: usize, rho: f64) -> Self {
        Self {
            velocity: ParamVector::zeros(dim),
            rho,
        }
    }

    pub fn step(&mut self, w: &mut ParamVector, grad: &ParamVector, lr: f64) {
        if self.rho == 0.0 {
            w.axpy(-lr, grad);
            return;
        }
        self.velocity.scale(self.rho);
        self.velocity.axpy(1.0, grad);
        w.axpy(-lr, &self.velocity);
    }
}

fn diverging(f: f64, w: &ParamVector) -> bool {
    !f.is_finite() || f > DIVERGENCE_THRESHOLD || !w.is_finite()
}

/// Run whichever loop `cfg` selects.
pub fn run<O, E>(obj: &O, w0: ParamVector, cfg: &TrainConfig, exec: &E) -> Result<Trace>
where
    O: StochasticObjective + ?Sized,
    E: Executor,
{
    run_observed(obj, w0, cfg, exec, &mut |_, _| Ok(()))
}

/// Called once per iteration with the new record and the iterate `w_t` it
/// was computed at, before the update is applied.
pub type Observer<'a> = dyn FnMut(&TraceRecord, &ParamVector) -> Result<()> + 'a;

/// [`run`] with a per-iteration observer.
pub fn run_observed<O, E>(
    obj: &O,
    w0: ParamVector,
    cfg: &TrainConfig,
    exec: &E,
    observer: &mut Observer<'_>,
) -> Result<Trace>
where
    O: StochasticObjective + ?Sized,
    E: Executor,
{
    match cfg.run.algorithm {
        Algorithm::ScaledSgd => scaled_sgd_loop(obj, w0, cfg, exec, observer),
        Algorithm::Adascale => adascale_loop(obj, w0, cfg, exec, observer),
    }
}

/// Scaled SGD with a fixed scaling rule applied to `cfg.schedule`.
pub fn run_scaled_sgd<O, E>(obj: &O, w0: ParamVector, cfg: &TrainConfig, exec: &E) -> Result<Trace>
where
    O: StochasticObjective + ?Sized,
    E: Executor,
{
    scaled_sgd_loop(obj, w0, cfg, exec, &mut |_, _| Ok(()))
}

fn scaled_sgd_loop<O, E>(
    obj: &O,
    w0: ParamVector,
    cfg: &TrainConfig,
    exec: &E,
    observer: &mut Observer<'_>,
) -> Result<Trace>
where
    O: StochasticObjective + ?Sized,
    E: Executor,
{
    cfg.validate()?;
    w0.check_dim(obj.dim())?;
    let run = &cfg.run;
    if run.algorithm != Algorithm::ScaledSgd {
        return Err(config_err!("run_scaled_sgd needs algorithm = scaled_sgd"));
    }
    let scale = run.scale.unwrap_or(1);
    let mut sched = ScaledSchedule::new(
        cfg.schedule.clone(),
        run.rule.unwrap_or(ScalingRule::Identity),
        scale as u64,
        run.iterations.unwrap_or(0),
    )
    .with_warmup_fraction(run.warmup_fraction.unwrap_or(DEFAULT_WARMUP_FRACTION));
    sched.t_target = run.t_target;
    let lr_s = sched.apply()?;
    let gain = lr_s.nominal_gain();

    let key = StreamKey::new(cfg.seed, Purpose::Batches);
    let mut w = w0;
    let mut momentum = MomentumState::new(w.dim(), run.momentum);
    let mut records = Vec::with_capacity(lr_s.horizon() as usize);
    let mut diverged = false;
    for t in 0..lr_s.horizon() {
        let f = obj.objective_value(&w);
        if diverging(f, &w) {
            diverged = true;
            break;
        }
        let bundle = compute_gradient(obj, &w, scale, &key.iteration(t), exec)?;
        let sample = gain_sample(&bundle.per_worker, &bundle.mean)?;
        let lr = lr_s.eval(t);
        let record = TraceRecord {
            t,
            tau: t as f64,
            scale,
            gain,
            lr,
            objective: f,
            grad_mean_sq: sample.mean_sq_norm,
            grad_agg_sq: sample.agg_sq_norm,
        };
        observer(&record, &w)?;
        momentum.step(&mut w, &bundle.mean, lr);
        records.push(record);
    }
    let final_objective = obj.objective_value(&w);
    diverged |= diverging(final_objective, &w);
    Ok(Trace {
        final_tau: records.len() as f64,
        records,
        final_w: w,
        final_objective,
        diverged,
        seed: cfg.seed,
    })
}

/// AdaScale SGD, with a fixed or elastic scale.
pub fn run_adascale<O, E>(obj: &O, w0: ParamVector, cfg: &TrainConfig, exec: &E) -> Result<Trace>
where
    O: StochasticObjective + ?Sized,
    E: Executor,
{
    adascale_loop(obj, w0, cfg, exec, &mut |_, _| Ok(()))
}

fn adascale_loop<O, E>(
    obj: &O,
    w0: ParamVector,
    cfg: &TrainConfig,
    exec: &E,
    observer: &mut Observer<'_>,
) -> Result<Trace>
where
    O: StochasticObjective + ?Sized,
    E: Executor,
{
    cfg.validate()?;
    w0.check_dim(obj.dim())?;
    let run = &cfg.run;
    if run.algorithm != Algorithm::Adascale {
        return Err(config_err!("run_adascale needs algorithm = adascale"));
    }
    let stages: Vec<ElasticStage> = match &run.elastic {
        Some(stages) => stages.clone(),
        None => alloc::vec![ElasticStage {
            start_tau: 0.0,
            scale: run.scale.unwrap_or(1)
        }],
    };
    let t_si = run.t_si.unwrap_or(0) as f64;

    let key = StreamKey::new(cfg.seed, Purpose::Batches);
    let mut scale = active_scale(&stages, 0.0);
    let mut gain = GainState::new(cfg.gain, scale)?;
    let mut w = w0;
    let mut momentum = MomentumState::new(w.dim(), run.momentum);
    let mut records = Vec::new();
    let mut tau = 0.0_f64;
    let mut t = 0_u64;
    let mut diverged = false;
    while tau < t_si {
        let f = obj.objective_value(&w);
        if diverging(f, &w) {
            diverged = true;
            break;
        }
        let now = active_scale(&stages, tau);
        if now != scale {
            scale = now;
            gain.set_scale(scale)?;
        }
        let bundle = compute_gradient(obj, &w, scale, &key.iteration(t), exec)?;
        let sample = gain_sample(&bundle.per_worker, &bundle.mean)?;
        let r = gain.update(&sample)?;
        // ⌊τ⌋ indexes the single-batch schedule
        let lr = r * cfg.schedule.eval(libm::floor(tau) as u64);
        let record = TraceRecord {
            t,
            tau,
            scale,
            gain: r,
            lr,
            objective: f,
            grad_mean_sq: sample.mean_sq_norm,
            grad_agg_sq: sample.agg_sq_norm,
        };
        observer(&record, &w)?;
        momentum.step(&mut w, &bundle.mean, lr);
        records.push(record);
        tau += r;
        t += 1;
    }
    let final_objective = obj.objective_value(&w);
    diverged |= diverging(final_objective, &w);
    Ok(Trace {
        records,
        final_w: w,
        final_objective,
        final_tau: tau,
        diverged,
        seed: cfg.seed,
    })
}

/// AdaScale with an elastic scale schedule.
pub fn run_elastic<O, E>(obj: &O, w0: ParamVector, cfg: &TrainConfig, exec: &E) -> Result<Trace>
where
    O: StochasticObjective + ?Sized,
    E: Executor,
{
    if cfg.run.elastic.is_none() {
        return Err(config_err!("run_elastic needs an elastic scale schedule"));
    }
    run_adascale(obj, w0, cfg, exec)
}

//! Canonical verification suites. Each check carries the number of the
//! acceptance criterion it belongs to, the measured value and the
//! tolerance it was held to.

use std::fmt;
use std::str::FromStr;

use adascale_core::analysis::{
    bound_adascale, curve_alignment, linear_grid, mean_curve, steady_state,
    verify_bound_empirically, verify_prop2, MeanCi, TheoryParams,
};
use adascale_core::engine::{run, ElasticStage, Executor, RunSpec, Sequential, Trace, TrainConfig};
use adascale_core::gain::{
    default_theta, gain_sample, GainConfig, GainSample, GainState, GainVariant,
};
use adascale_core::objectives::{
    ClassifierModel, ClassifierSpec, GeneratedClassifier, NoisyQuadratic, QuadraticSpec,
    StochasticObjective,
};
use adascale_core::schedules::{LrSchedule, ScalingRule};
use adascale_core::ParamVector;
use rand::{Rng, SeedableRng};

use crate::compare::compare_gains;
use crate::error::{LabError, Result};
use crate::output::fmt_f64;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub criterion: u8,
    pub name: String,
    pub pass: bool,
    pub measured: String,
    pub tolerance: String,
    pub seeds: usize,
}

impl Check {
    fn new(
        criterion: u8,
        name: impl Into<String>,
        pass: bool,
        measured: String,
        tolerance: String,
        seeds: usize,
    ) -> Self {
        Self {
            criterion,
            name: name.into(),
            pass,
            measured,
            tolerance,
            seeds,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} [{:>2}] {}: {} (tolerance {}; seeds {})",
            if self.pass { "PASS" } else { "FAIL" },
            self.criterion,
            self.name,
            self.measured,
            self.tolerance,
            self.seeds
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Thm1,
    Thm2,
    Thm3,
    Prop1,
    Prop2,
    Gain,
    Alignment,
    Theta,
    Warmup,
    Elastic,
    All,
}

impl Suite {
    pub const NAMES: [&'static str; 11] = [
        "thm1",
        "thm2",
        "thm3",
        "prop1",
        "prop2",
        "gain",
        "alignment",
        "theta",
        "warmup",
        "elastic",
        "all",
    ];

    const EACH: [Suite; 10] = [
        Suite::Gain,
        Suite::Prop1,
        Suite::Thm1,
        Suite::Thm2,
        Suite::Thm3,
        Suite::Alignment,
        Suite::Prop2,
        Suite::Theta,
        Suite::Warmup,
        Suite::Elastic,
    ];
}

impl FromStr for Suite {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "thm1" => Self::Thm1,
            "thm2" => Self::Thm2,
            "thm3" => Self::Thm3,
            "prop1" => Self::Prop1,
            "prop2" => Self::Prop2,
            "gain" => Self::Gain,
            "alignment" => Self::Alignment,
            "theta" => Self::Theta,
            "warmup" => Self::Warmup,
            "elastic" => Self::Elastic,
            "all" => Self::All,
            other => {
                return Err(LabError::Usage(format!(
                    "unknown suite `{other}` (expected one of {})",
                    Self::NAMES.join(", ")
                )))
            }
        })
    }
}

pub fn run_suite<E: Executor>(suite: Suite, exec: &E) -> Result<Vec<Check>> {
    match suite {
        Suite::Gain => {
            let mut out = vec![gain_bound_property()?];
            out.extend(gain_consistency(exec)?);
            Ok(out)
        }
        Suite::Prop1 => {
            let mut out = s1_reduction()?;
            out.extend(zero_variance()?);
            Ok(out)
        }
        Suite::Thm1 => bound_suite(1, exec),
        Suite::Thm2 => bound_suite(4, exec),
        Suite::Thm3 => plateau_growth(exec),
        Suite::Alignment => alignment(exec),
        Suite::Prop2 => prop2(exec),
        Suite::Theta => theta_robustness(exec),
        Suite::Warmup => warmup_emergence(),
        Suite::Elastic => elastic(exec),
        Suite::All => {
            let mut out = Vec::new();
            for s in Suite::EACH {
                out.extend(run_suite(s, exec)?);
            }
            Ok(out)
        }
    }
}

fn seed_list(n: usize) -> Vec<u64> {
    (1..=n as u64).collect()
}

fn run_seeds<O, E>(
    obj: &O,
    w0: &ParamVector,
    cfg: &TrainConfig,
    seeds: &[u64],
    exec: &E,
) -> Result<Vec<Trace>>
where
    O: StochasticObjective + ?Sized,
    E: Executor,
{
    let traces = exec.map(seeds.len(), |k| {
        run(
            obj,
            w0.clone(),
            &cfg.clone().with_seed(seeds[k]),
            &Sequential,
        )
    });
    Ok(traces
        .into_iter()
        .collect::<std::result::Result<Vec<_>, _>>()?)
}

fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// `⌈T_SI/S_max⌉ ≤ T ≤ T_SI` for every AdaScale run.
fn iteration_contract(name: &str, traces: &[Trace], max_scale: usize, t_si: u64) -> Check {
    let lo = t_si.div_ceil(max_scale as u64);
    let bad = traces
        .iter()
        .filter(|t| !t.diverged && !(lo..=t_si).contains(&t.iterations()))
        .count();
    let (min_t, max_t) = traces
        .iter()
        .map(Trace::iterations)
        .fold((u64::MAX, 0), |(a, b), t| (a.min(t), b.max(t)));
    Check::new(
        7,
        format!("iteration count, {name}"),
        bad == 0,
        format!(
            "T in [{min_t}, {max_t}] over {} runs, {bad} outside",
            traces.len()
        ),
        format!("[{lo}, {t_si}]"),
        traces.len(),
    )
}

// ---------------------------------------------------------------- criterion 1

/// Random estimator updates over both variants, random scales, smoothing
/// factors and adversarial moment pairs.
fn gain_bound_property() -> Result<Check> {
    const CHAINS: usize = 4000;
    const STEPS: usize = 250;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let mut worst = (f64::INFINITY, f64::NEG_INFINITY);
    let mut violations = 0usize;
    let mut updates = 0usize;
    for chain in 0..CHAINS {
        let variant = if chain % 2 == 0 {
            GainVariant::Recommended
        } else {
            GainVariant::Separated
        };
        let scale = *[1usize, 2, 3, 8, 16, 32, 64, 128, 1000]
            .get(rng.gen_range(0..9))
            .unwrap();
        let theta = match rng.gen_range(0..3) {
            0 => None,
            1 => Some(0.0),
            _ => Some(rng.gen_range(0.0..0.9999)),
        };
        let cfg = GainConfig {
            variant,
            theta,
            exclude_current: rng.gen_bool(0.3),
            ..GainConfig::default()
        };
        let mut state = GainState::new(cfg, scale)?;
        for _ in 0..STEPS {
            let sample = random_sample(&mut rng, scale)?;
            let r = state.update(&sample)?;
            updates += 1;
            worst = (worst.0.min(r), worst.1.max(r / scale as f64));
            if !(r.is_finite() && (1.0..=scale as f64).contains(&r)) {
                violations += 1;
            }
        }
    }
    Ok(Check::new(
        1,
        format!("gain in [1, S] over {updates} updates"),
        violations == 0 && updates >= 1_000_000,
        format!(
            "min r = {}, max r/S = {}, {violations} violations",
            fmt_f64(worst.0),
            fmt_f64(worst.1)
        ),
        "exact".into(),
        1,
    ))
}

fn random_sample(rng: &mut impl Rng, scale: usize) -> Result<GainSample> {
    match rng.gen_range(0..4) {
        // real gradients: common mean plus per-worker noise
        0 | 1 => {
            let dim = rng.gen_range(1..6);
            let mu_scale = 10f64.powf(rng.gen_range(-8.0..4.0));
            let noise_scale = 10f64.powf(rng.gen_range(-8.0..4.0));
            let mu: Vec<f64> = (0..dim)
                .map(|_| mu_scale * rng.gen_range(-1.0..1.0))
                .collect();
            let grads: Vec<ParamVector> = (0..scale)
                .map(|_| {
                    ParamVector::from_vec(
                        mu.iter()
                            .map(|m| m + noise_scale * rng.gen_range(-1.0..1.0))
                            .collect(),
                    )
                })
                .collect();
            let mut agg = ParamVector::zeros(dim);
            for g in &grads {
                agg.axpy(1.0 / scale as f64, g);
            }
            Ok(gain_sample(&grads, &agg)?)
        }
        // arbitrary non-negative moment pairs, including m₂ > m₁ and zeros
        _ => {
            let draw = |rng: &mut dyn rand::RngCore| match rng.gen_range(0..5) {
                0 => 0.0,
                1 => f64::MIN_POSITIVE,
                _ => 10f64.powf(rng.gen_range(-12.0..12.0)),
            };
            Ok(GainSample {
                mean_sq_norm: draw(rng),
                agg_sq_norm: draw(rng),
                scale,
            })
        }
    }
}

// ---------------------------------------------------------------- criterion 2

fn bit_identical(a: &Trace, b: &Trace) -> bool {
    let rec = |t: &Trace| -> Vec<u64> {
        t.records
            .iter()
            .flat_map(|r| {
                [
                    r.t,
                    r.tau.to_bits(),
                    r.scale as u64,
                    r.gain.to_bits(),
                    r.lr.to_bits(),
                    r.objective.to_bits(),
                    r.grad_mean_sq.to_bits(),
                    r.grad_agg_sq.to_bits(),
                ]
            })
            .chain(t.final_w.as_slice().iter().map(|x| x.to_bits()))
            .chain([t.final_objective.to_bits(), t.final_tau.to_bits()])
            .collect()
    };
    rec(a) == rec(b)
}

fn s1_reduction() -> Result<Vec<Check>> {
    const T: u64 = 300;
    let schedule = LrSchedule::StepDecay {
        eta0: 0.2,
        d: 0.5,
        milestones: vec![100, 200],
    };
    let quad = QuadraticSpec {
        a_diag: Some(vec![0.5, 1.0, 2.0]),
        sigma_diag: Some(vec![0.3, 0.1, 0.2]),
        ..QuadraticSpec::default()
    }
    .build()?;
    let deterministic = QuadraticSpec {
        a_diag: Some(vec![0.5, 1.0, 2.0]),
        ..QuadraticSpec::default()
    }
    .build()?;
    let logistic = GeneratedClassifier::generate(&ClassifierSpec {
        n_examples: 128,
        ..ClassifierSpec::default()
    })?;
    let mlp = GeneratedClassifier::generate(&ClassifierSpec {
        model: ClassifierModel::Mlp { hidden: 6 },
        n_examples: 128,
        ..ClassifierSpec::default()
    })?;
    let objectives: [(&str, &dyn StochasticObjective); 4] = [
        ("noisy quadratic", &quad),
        ("deterministic quadratic", &deterministic),
        ("logistic classifier", &logistic),
        ("mlp classifier", &mlp),
    ];
    let mut identical = 0;
    let mut total = 0;
    let mut failures = Vec::new();
    for (name, obj) in objectives {
        for variant in [GainVariant::Recommended, GainVariant::Separated] {
            for seed in [7, 8] {
                let gain = GainConfig {
                    variant,
                    ..GainConfig::default()
                };
                let ada = TrainConfig::new(RunSpec::adascale(1, T), schedule.clone())
                    .with_gain(gain)
                    .with_seed(seed);
                let sgd = TrainConfig::new(
                    RunSpec::scaled_sgd(ScalingRule::Identity, 1, T),
                    schedule.clone(),
                )
                .with_seed(seed);
                let w0 = obj.default_start();
                let a = run(obj, w0.clone(), &ada, &Sequential)?;
                let b = run(obj, w0, &sgd, &Sequential)?;
                total += 1;
                if bit_identical(&a, &b) && a.iterations() == T {
                    identical += 1;
                } else {
                    failures.push(format!("{name}/{variant:?}/seed {seed}"));
                }
            }
        }
    }
    Ok(vec![Check::new(
        2,
        "S=1 AdaScale vs identity-rule SGD, bitwise",
        identical == total,
        format!(
            "{identical}/{total} identical{}",
            if failures.is_empty() {
                String::new()
            } else {
                format!(" ({})", failures.join(", "))
            }
        ),
        "bitwise".into(),
        2,
    )])
}

// ---------------------------------------------------------------- criterion 3

fn zero_variance() -> Result<Vec<Check>> {
    const T_SI: u64 = 200;
    let spec = QuadraticSpec {
        a_diag: Some(vec![0.5, 1.0, 1.5, 2.0]),
        w0: Some(vec![1.0, -2.0, 0.5, 3.0]),
        ..QuadraticSpec::default()
    };
    let q = spec.build()?;
    let schedule = LrSchedule::Constant { eta0: 0.3 };
    let mut finals = Vec::new();
    let mut traces = Vec::new();
    let mut all_one = true;
    for s in [1, 8, 64] {
        let cfg = TrainConfig::new(RunSpec::adascale(s, T_SI), schedule.clone()).with_seed(11);
        let tr = run(&q, spec.start(&q), &cfg, &Sequential)?;
        all_one &= tr.records.iter().all(|r| r.gain == 1.0);
        finals.push(tr.final_objective);
        traces.push(tr);
    }
    let spread = finals
        .iter()
        .map(|f| rel_diff(*f, finals[0]))
        .fold(0.0, f64::max);
    Ok(vec![
        Check::new(
            3,
            "zero variance: final F equal across S in {1, 8, 64}",
            spread <= 1e-12,
            format!("max relative difference {}", fmt_f64(spread)),
            "1e-12 relative".into(),
            1,
        ),
        Check::new(
            3,
            "zero variance: r_t = 1 throughout",
            all_one,
            format!("all gains exactly 1: {all_one}"),
            "exact".into(),
            1,
        ),
        iteration_contract("zero variance", &traces, 64, T_SI),
    ])
}

// ---------------------------------------------------------------- criterion 4

fn gain_consistency<E: Executor>(exec: &E) -> Result<Vec<Check>> {
    const DIM: usize = 64;
    const EVERY: u64 = 50;
    const N_BATCHES: usize = 1000;
    const T_SI: u64 = 30_000;
    // μ²(w₀) = 6.25 tr Σ; the small step keeps μ² nearly frozen over one
    // averaging window even at S = 4
    let spec = QuadraticSpec::isotropic(DIM, 1.0, 0.01, 0.25);
    let q = spec.build()?;
    let schedule = LrSchedule::Constant { eta0: 1e-4 };
    let mut checks = Vec::new();
    let scales = [4usize, 16, 64];
    let results = exec.map(scales.len(), |i| {
        let s = scales[i];
        let cfg =
            TrainConfig::new(RunSpec::adascale(s, T_SI), schedule.clone()).with_seed(41 + s as u64);
        compare_gains(&q, spec.start(&q), &cfg, EVERY, N_BATCHES, &Sequential)
    });
    for (s, res) in scales.iter().zip(results) {
        let (trace, rows) = res?;
        let burn_in = (1.0 / (1.0 - default_theta(*s))).ceil() as u64;
        let mut online_worst: f64 = 0.0;
        let mut oracle_worst: f64 = 0.0;
        let mut compared = 0;
        for row in rows.iter().filter(|r| r.t >= burn_in) {
            let analytic = row.analytic.expect("quadratic has closed-form moments");
            online_worst = online_worst.max(rel_diff(row.online, analytic));
            oracle_worst = oracle_worst.max(rel_diff(row.oracle, analytic));
            compared += 1;
        }
        let range = rows
            .iter()
            .filter_map(|r| r.analytic)
            .fold((f64::INFINITY, 0.0_f64), |(a, b), r| (a.min(r), b.max(r)));
        checks.push(Check::new(
            4,
            format!("online vs analytic gain, S={s}"),
            compared > 0 && online_worst <= 0.10,
            format!(
                "max relative error {} over {compared} points after burn-in {burn_in} (analytic r from {} to {})",
                fmt_f64(online_worst),
                fmt_f64(range.0),
                fmt_f64(range.1)
            ),
            "0.10 relative".into(),
            1,
        ));
        checks.push(Check::new(
            4,
            format!("oracle ({N_BATCHES} batches) vs analytic gain, S={s}"),
            compared > 0 && oracle_worst <= 0.05,
            format!("max relative error {}", fmt_f64(oracle_worst)),
            "0.05 relative".into(),
            1,
        ));
        checks.push(iteration_contract(
            &format!("gain consistency S={s}"),
            &[trace],
            *s,
            T_SI,
        ));
    }
    Ok(checks)
}

// ---------------------------------------------------------------- criterion 5

/// The quadratic behind the bound suites: `A = I` in two dimensions with
/// `Σ = 0.01 I`, so `α = β = 1` and `V = tr Σ = 0.02`.
fn bound_quadratic() -> Result<(NoisyQuadratic, ParamVector)> {
    let spec = QuadraticSpec::isotropic(2, 1.0, 0.01, 1.0);
    let q = spec.build()?;
    let w0 = spec.start(&q);
    Ok((q, w0))
}

const BOUND_ETA: f64 = 0.1;

fn bound_suite<E: Executor>(scale: usize, exec: &E) -> Result<Vec<Check>> {
    const T_SI: u64 = 500;
    const SEEDS: usize = 200;
    let (q, w0) = bound_quadratic()?;
    let p = TheoryParams::new(1.0, 1.0, 0.02, BOUND_ETA)?;
    let cfg = TrainConfig::new(
        RunSpec::adascale(scale, T_SI),
        LrSchedule::Constant { eta0: BOUND_ETA },
    );
    let seeds = seed_list(SEEDS);
    let report = verify_bound_empirically(&q, &w0, &cfg, &p, &seeds, 10, exec)?;
    let violated = report.points.iter().filter(|pt| !pt.holds()).count();
    let first_violation = report.points.iter().find(|pt| !pt.holds()).map(|pt| pt.t);
    let name = if scale == 1 {
        "single-batch bound"
    } else {
        "per-step product bound"
    };
    let mut checks = vec![Check::new(
        5,
        format!(
            "{name}, S={scale} (gamma={}, S <= 1/gamma = {})",
            fmt_g(p.gamma()),
            fmt_g(1.0 / p.gamma())
        ),
        report.pass(),
        format!(
            "max(mean + CI - bound) = {} at {} logged points; {violated} above the bound{}",
            fmt_f64(report.worst_margin()),
            report.points.len(),
            first_violation.map_or(String::new(), |t| format!(", first at t={t}"))
        ),
        "mean + 95% CI <= bound at every 10th iteration".into(),
        SEEDS,
    )];

    // average-gain form at the final iterate, per seed
    let traces = run_seeds(&q, &w0, &cfg, &seeds, exec)?;
    let f0 = q.objective_value(&w0);
    let finals: Vec<f64> = traces.iter().map(|t| t.final_objective).collect();
    let rbar: Vec<f64> = traces
        .iter()
        .map(|t| {
            let gains: Vec<f64> = t.records.iter().map(|r| r.gain).collect();
            bound_adascale(&p, f0, &gains, scale).map(|b| b.1)
        })
        .collect::<std::result::Result<_, _>>()?;
    let m = MeanCi::of(&finals);
    let b = MeanCi::of(&rbar).mean;
    checks.push(Check::new(
        5,
        format!("average-gain bound at T, S={scale}"),
        m.upper() <= b,
        format!("mean + CI = {} vs bound {}", fmt_f64(m.upper()), fmt_f64(b)),
        "mean + 95% CI <= bound".into(),
        SEEDS,
    ));
    checks.push(iteration_contract(
        &format!("bound suite S={scale}"),
        &traces,
        scale,
        T_SI,
    ));
    Ok(checks)
}

fn fmt_g(x: f64) -> String {
    format!("{x:.4}")
}

// ---------------------------------------------------------------- criterion 6

fn plateau_growth<E: Executor>(exec: &E) -> Result<Vec<Check>> {
    const T1: u64 = 6000;
    const SEEDS: usize = 200;
    let (q, w0) = bound_quadratic()?;
    let p = TheoryParams::new(1.0, 1.0, 0.02, BOUND_ETA)?;
    let schedule = LrSchedule::Constant { eta0: BOUND_ETA };
    let seeds = seed_list(SEEDS);
    let plateau = |scale: usize| -> Result<(MeanCi, usize)> {
        let cfg = TrainConfig::new(
            RunSpec::scaled_sgd(ScalingRule::Linear, scale, T1),
            schedule.clone(),
        );
        let traces = run_seeds(&q, &w0, &cfg, &seeds, exec)?;
        let diverged = traces.iter().filter(|t| t.diverged).count();
        let levels: Vec<f64> = traces.iter().map(steady_state).collect();
        Ok((MeanCi::of(&levels), diverged))
    };
    let mut checks = Vec::new();
    let mut levels = Vec::new();
    for s in [1usize, 5, 10, 15] {
        let (m, _) = plateau(s)?;
        let predicted = p.xi(s as f64)? * p.delta();
        let ratio = m.mean / predicted;
        checks.push(Check::new(
            6,
            format!("plateau vs xi(S)*Delta, S={s}"),
            (1.0 / 3.0..=3.0).contains(&ratio),
            format!(
                "steady state {} vs {} (ratio {})",
                fmt_f64(m.mean),
                fmt_f64(predicted),
                fmt_g(ratio)
            ),
            "factor 3".into(),
            SEEDS,
        ));
        levels.push((s, m.mean));
    }
    let increasing = levels.windows(2).all(|w| w[1].1 > w[0].1);
    checks.push(Check::new(
        6,
        "plateau strictly increasing in S",
        increasing,
        levels
            .iter()
            .map(|(s, l)| format!("S={s}: {}", fmt_f64(*l)))
            .collect::<Vec<_>>()
            .join(", "),
        "strict".into(),
        SEEDS,
    ));
    let limit = 10.0 * p.xi(15.0)? * p.delta();
    for s in [20usize, 25] {
        let (m, diverged) = plateau(s)?;
        checks.push(Check::new(
            6,
            format!("past the asymptote, S={s}"),
            diverged > 0 || m.mean > limit,
            format!(
                "{diverged}/{SEEDS} diverged, steady state {}",
                fmt_f64(m.mean)
            ),
            format!("diverges or exceeds 10*xi(15)*Delta = {}", fmt_f64(limit)),
            SEEDS,
        ));
    }
    Ok(checks)
}

// ---------------------------------------------------------------- criterion 8

fn alignment<E: Executor>(exec: &E) -> Result<Vec<Check>> {
    const SEEDS: usize = 50;
    let seeds = seed_list(SEEDS);
    let mut checks = Vec::new();

    let spec = QuadraticSpec::isotropic(16, 1.0, 0.05, 0.5);
    let q = spec.build()?;
    let w0 = spec.start(&q);
    checks.extend(alignment_for(
        "noisy quadratic",
        &q,
        &w0,
        0.0,
        LrSchedule::Constant { eta0: 0.02 },
        300,
        &seeds,
        exec,
    )?);

    let clf = GeneratedClassifier::generate(&ClassifierSpec::default())?;
    let f_star = clf.estimate_minimum(20_000);
    checks.extend(alignment_for(
        "logistic classifier",
        &clf,
        &clf.default_start(),
        f_star,
        LrSchedule::Constant { eta0: 0.1 },
        400,
        &seeds,
        exec,
    )?);
    Ok(checks)
}

#[allow(clippy::too_many_arguments)]
fn alignment_for<O, E>(
    name: &str,
    obj: &O,
    w0: &ParamVector,
    f_star: f64,
    schedule: LrSchedule,
    t_si: u64,
    seeds: &[u64],
    exec: &E,
) -> Result<Vec<Check>>
where
    O: StochasticObjective,
    E: Executor,
{
    let scales = [1usize, 4, 16];
    let gap0 = obj.objective_value(w0) - f_star;
    let mut by_scale = Vec::new();
    let mut all = Vec::new();
    for s in scales {
        let cfg = TrainConfig::new(RunSpec::adascale(s, t_si), schedule.clone());
        let traces = run_seeds(obj, w0, &cfg, seeds, exec)?;
        all.extend(traces.iter().cloned());
        by_scale.push((s, traces));
    }
    let tau_grid = linear_grid(0.0, t_si as f64, 201);
    let t_end = all.iter().map(Trace::iterations).min().unwrap_or(0) as f64;
    let t_grid = linear_grid(0.0, t_end, 201);
    let mean_curves = |grid: &[f64], by_tau: bool| -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        by_scale
            .iter()
            .map(|(_, traces)| {
                let curves: Vec<(Vec<f64>, Vec<f64>)> = traces
                    .iter()
                    .map(|t| {
                        if by_tau {
                            t.curve_by_tau()
                        } else {
                            t.curve_by_iteration()
                        }
                    })
                    .collect();
                Ok((grid.to_vec(), mean_curve(&curves, grid)?))
            })
            .collect()
    };
    let dev_tau = curve_alignment(&mean_curves(&tau_grid, true)?, &tau_grid)?;
    let dev_t = curve_alignment(&mean_curves(&t_grid, false)?, &t_grid)?;
    let tol = 0.1 * gap0;
    Ok(vec![
        Check::new(
            8,
            format!("{name}: mean curves vs tau, S in {{1, 4, 16}}"),
            dev_tau <= tol,
            format!(
                "max deviation {} (initial suboptimality {})",
                fmt_f64(dev_tau),
                fmt_f64(gap0)
            ),
            format!("<= {}", fmt_f64(tol)),
            seeds.len(),
        ),
        Check::new(
            8,
            format!("{name}: same runs vs raw t deviate more"),
            dev_t > 2.0 * dev_tau,
            format!(
                "max deviation vs t {} over t in [0, {t_end}]",
                fmt_f64(dev_t)
            ),
            format!("> 2 x {}", fmt_f64(dev_tau)),
            seeds.len(),
        ),
        iteration_contract(&format!("alignment {name}"), &all, 16, t_si),
    ])
}

// ---------------------------------------------------------------- criterion 9

fn prop2<E: Executor>(exec: &E) -> Result<Vec<Check>> {
    const SEEDS: usize = 5000;
    let base = NoisyQuadratic::new(
        adascale_core::Matrix::identity(1),
        adascale_core::Matrix::identity(1),
        ParamVector::zeros(1),
    )?;
    let w0 = ParamVector::from_vec(vec![1.0]);
    let report = verify_prop2(
        &base,
        &w0,
        0.2,
        50,
        4,
        &[1, 10, 100],
        &seed_list(SEEDS),
        exec,
    )?;
    let gaps = report
        .rows
        .iter()
        .map(|r| {
            format!(
                "nu={}: {} +- {}",
                r.nu,
                fmt_f64(r.gap.mean),
                fmt_f64(r.gap.half_width)
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    Ok(vec![
        Check::new(
            9,
            "large-noise gap non-increasing in nu",
            report.non_increasing(),
            gaps,
            "CI-adjusted".into(),
            SEEDS,
        ),
        Check::new(
            9,
            "largest-nu gap CI contains 0",
            report.final_gap_contains_zero(),
            report.rows.last().map_or(String::new(), |r| {
                format!("[{}, {}]", fmt_f64(r.gap.lower()), fmt_f64(r.gap.upper()))
            }),
            "95% CI".into(),
            SEEDS,
        ),
    ])
}

// ---------------------------------------------------------------- criterion 10

fn theta_robustness<E: Executor>(exec: &E) -> Result<Vec<Check>> {
    // Runs are long next to the slowest averaging window, about 1000 τ, and
    // the quadratic has many noise directions: with θ = 0 each estimate uses
    // one ‖ḡ‖² draw, and clamping its χ²_d noise biases r̂ low by roughly
    // 0.4·sqrt(2/d)·S.
    const T_SI: u64 = 20_000;
    let mut checks = Vec::new();

    let spec = QuadraticSpec::isotropic(1024, 1.0, 0.005, 0.25);
    let q = spec.build()?;
    let schedule = LrSchedule::StepDecay {
        eta0: 1e-3,
        d: 0.1,
        milestones: vec![10_000, 15_000],
    };
    checks.extend(theta_for(
        "noisy quadratic",
        &q,
        &spec.start(&q),
        schedule,
        T_SI,
        &seed_list(20),
        exec,
    )?);

    let clf = GeneratedClassifier::generate(&ClassifierSpec {
        features: 64,
        ..ClassifierSpec::default()
    })?;
    let schedule = LrSchedule::StepDecay {
        eta0: 0.05,
        d: 0.1,
        milestones: vec![10_000, 15_000],
    };
    checks.extend(theta_for(
        "logistic classifier",
        &clf,
        &clf.default_start(),
        schedule,
        T_SI,
        &seed_list(40),
        exec,
    )?);
    Ok(checks)
}

fn theta_for<O, E>(
    name: &str,
    obj: &O,
    w0: &ParamVector,
    schedule: LrSchedule,
    t_si: u64,
    seeds: &[u64],
    exec: &E,
) -> Result<Vec<Check>>
where
    O: StochasticObjective,
    E: Executor,
{
    let mut checks = Vec::new();
    for s in [8usize, 32] {
        let sf = s as f64;
        let thetas = [0.0, 1.0 - sf / 100.0, 1.0 - sf / 1000.0];
        let mut finals = Vec::new();
        let mut iters = Vec::new();
        let mut all = Vec::new();
        for theta in thetas {
            let gain = GainConfig {
                theta: Some(theta),
                ..GainConfig::default()
            };
            let cfg =
                TrainConfig::new(RunSpec::adascale(s, t_si), schedule.clone()).with_gain(gain);
            let traces = run_seeds(obj, w0, &cfg, seeds, exec)?;
            finals.push(
                MeanCi::of(&traces.iter().map(|t| t.final_objective).collect::<Vec<_>>()).mean,
            );
            iters.push(
                MeanCi::of(
                    &traces
                        .iter()
                        .map(|t| t.iterations() as f64)
                        .collect::<Vec<_>>(),
                )
                .mean,
            );
            all.extend(traces);
        }
        let spread = |v: &[f64]| {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (hi - lo) / lo
        };
        let list = |v: &[f64]| v.iter().map(|x| fmt_g(*x)).collect::<Vec<_>>().join(", ");
        checks.push(Check::new(
            10,
            format!("{name}, S={s}: final F across theta in {{0, 1-S/100, 1-S/1000}}"),
            spread(&finals) <= 0.05,
            format!(
                "means [{}], relative spread {}",
                finals
                    .iter()
                    .map(|x| fmt_f64(*x))
                    .collect::<Vec<_>>()
                    .join(", "),
                fmt_g(spread(&finals))
            ),
            "0.05 relative".into(),
            seeds.len(),
        ));
        checks.push(Check::new(
            10,
            format!("{name}, S={s}: total iterations across theta"),
            spread(&iters) <= 0.10,
            format!(
                "means [{}], relative spread {}",
                list(&iters),
                fmt_g(spread(&iters))
            ),
            "0.10 relative".into(),
            seeds.len(),
        ));
        checks.push(iteration_contract(
            &format!("theta {name} S={s}"),
            &all,
            s,
            t_si,
        ));
    }
    Ok(checks)
}

// ---------------------------------------------------------------- criterion 11

fn warmup_emergence() -> Result<Vec<Check>> {
    const LOG_EVERY: usize = 10;
    const T_SI: u64 = 6000;
    // μ²(w₀) = 2.25 tr Σ: close enough that noise soon dominates
    let spec = QuadraticSpec::isotropic(64, 1.0, 1.0, 1.5);
    let q = spec.build()?;
    let schedule = LrSchedule::StepDecay {
        eta0: 0.01,
        d: 0.1,
        milestones: vec![3000, 4500],
    };
    let cfg = TrainConfig::new(RunSpec::adascale(16, T_SI), schedule).with_seed(5);
    let trace = run(&q, spec.start(&q), &cfg, &Sequential)?;
    let logged: Vec<f64> = trace
        .records
        .iter()
        .step_by(LOG_EVERY)
        .map(|r| r.lr)
        .collect();
    let initial_rise = logged.windows(2).take_while(|w| w[1] > w[0]).count();
    let peak = logged.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let last = logged.last().copied().unwrap_or(f64::NAN);
    Ok(vec![
        Check::new(
            11,
            "effective learning rate rises from the start (S=16, step-decay schedule)",
            initial_rise >= 5,
            format!(
                "{initial_rise} consecutive increases from eta_0 = {} to {}",
                fmt_f64(logged[0]),
                fmt_f64(logged[initial_rise])
            ),
            ">= 5 logged points".into(),
            1,
        ),
        Check::new(
            11,
            "effective learning rate later decays",
            last < peak,
            format!("peak {}, final {}", fmt_f64(peak), fmt_f64(last)),
            "final < peak".into(),
            1,
        ),
        iteration_contract("warm-up", &[trace], 16, T_SI),
    ])
}

// ---------------------------------------------------------------- criterion 12

fn elastic<E: Executor>(exec: &E) -> Result<Vec<Check>> {
    const SEEDS: usize = 20;
    const T_SI: u64 = 8000;
    let spec = QuadraticSpec::isotropic(256, 1.0, 0.05, 1.0);
    let q = spec.build()?;
    let w0 = spec.start(&q);
    let schedule = LrSchedule::Constant { eta0: 0.002 };
    let seeds = seed_list(SEEDS);
    let stages = |scales: [usize; 3]| -> Vec<ElasticStage> {
        scales
            .iter()
            .enumerate()
            .map(|(i, &s)| ElasticStage {
                start_tau: (i as u64 * T_SI / 3) as f64,
                scale: s,
            })
            .collect()
    };
    let fixed_cfg = TrainConfig::new(RunSpec::adascale(8, T_SI), schedule.clone());
    let fixed = run_seeds(&q, &w0, &fixed_cfg, &seeds, exec)?;
    let reference = MeanCi::of(&fixed.iter().map(|t| t.final_objective).collect::<Vec<_>>()).mean;

    let mut checks = Vec::new();
    let mut all = fixed;
    for order in [[2, 8, 32], [32, 8, 2]] {
        let st = stages(order);
        let cfg = TrainConfig::new(RunSpec::elastic(st.clone(), T_SI), schedule.clone());
        let traces = run_seeds(&q, &w0, &cfg, &seeds, exec)?;
        let label = format!("{}->{}->{}", order[0], order[1], order[2]);
        let complete = traces
            .iter()
            .all(|t| !t.diverged && t.final_tau >= T_SI as f64);
        let clamp_ok = traces.iter().all(|t| {
            t.records.iter().all(|r| {
                let active = adascale_core::engine::active_scale(&st, r.tau);
                r.scale == active && r.gain >= 1.0 && r.gain <= active as f64
            })
        });
        let mean = MeanCi::of(&traces.iter().map(|t| t.final_objective).collect::<Vec<_>>()).mean;
        checks.push(Check::new(
            12,
            format!("elastic {label}: completes with r_t in [1, S_active]"),
            complete && clamp_ok,
            format!("completed: {complete}, clamp respected: {clamp_ok}"),
            "every iteration".into(),
            SEEDS,
        ));
        checks.push(Check::new(
            12,
            format!("elastic {label}: final F vs fixed S=8"),
            rel_diff(mean, reference) <= 0.10,
            format!(
                "{} vs {} (relative {})",
                fmt_f64(mean),
                fmt_f64(reference),
                fmt_g(rel_diff(mean, reference))
            ),
            "0.10 relative".into(),
            SEEDS,
        ));
        all.extend(traces);
    }
    checks.push(iteration_contract("elastic", &all, 32, T_SI));
    Ok(checks)
}

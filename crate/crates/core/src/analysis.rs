//! Convergence bounds for constant-learning-rate SGD under the PL condition,
//! and Monte-Carlo harnesses that hold training runs against them.

use alloc::vec::Vec;

use crate::engine::{run, Algorithm, Executor, RunSpec, Sequential, Trace, TrainConfig};
use crate::error::{config_err, domain_err, Result};
use crate::linalg::ParamVector;
use crate::objectives::{NoisyQuadratic, StochasticObjective};
use crate::schedules::{LrSchedule, ScalingRule};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// PL constant α, smoothness β, variance bound V and constant step η.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryParams {
    pub alpha: f64,
    pub beta: f64,
    pub variance: f64,
    pub eta: f64,
}

impl TheoryParams {
    pub fn new(alpha: f64, beta: f64, variance: f64, eta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0 && alpha <= beta) {
            return Err(domain_err!(
                "need 0 < alpha <= beta (alpha = {alpha}, beta = {beta})"
            ));
        }
        if !(variance >= 0.0 && variance.is_finite()) {
            return Err(domain_err!("variance bound must be non-negative"));
        }
        if !(eta > 0.0 && eta * beta < 2.0) {
            return Err(domain_err!(
                "need 0 < eta < 2/beta (eta = {eta}, beta = {beta})"
            ));
        }
        Ok(Self {
            alpha,
            beta,
            variance,
            eta,
        })
    }

    /// Constants of a [`NoisyQuadratic`] at step `eta`.
    pub fn for_quadratic(q: &NoisyQuadratic, eta: f64) -> Result<Self> {
        Self::new(q.pl_constant(), q.smoothness(), q.noise_variance(), eta)
    }

    /// `γ = ηα(2 − ηβ)`
    pub fn gamma(&self) -> f64 {
        self.eta * self.alpha * (2.0 - self.eta * self.beta)
    }

    /// `Δ = η²βV / (2γ)`
    pub fn delta(&self) -> f64 {
        self.eta * self.eta * self.beta * self.variance / (2.0 * self.gamma())
    }

    /// `ξ(S) = (2 − ηβ)/(2 − Sηβ)`; domain error at or past the asymptote.
    pub fn xi(&self, scale: f64) -> Result<f64> {
        let eb = self.eta * self.beta;
        if scale * eb >= 2.0 {
            return Err(domain_err!(
                "S = {scale} is at or past the asymptote 2/(eta beta) = {}",
                2.0 / eb
            ));
        }
        Ok((2.0 - eb) / (2.0 - scale * eb))
    }
}

/// `(1 − γ)^T · gap + Δ` for single-batch SGD.
pub fn bound_single_batch(p: &TheoryParams, f0_gap: f64, iterations: u64) -> Result<f64> {
    let p = TheoryParams::new(p.alpha, p.beta, p.variance, p.eta)?;
    Ok(libm::pow(1.0 - p.gamma(), iterations as f64) * f0_gap + p.delta())
}

fn check_gains(p: &TheoryParams, gains: &[f64], scale: usize) -> Result<()> {
    let gamma = p.gamma();
    if scale as f64 * gamma > 1.0 {
        return Err(domain_err!(
            "AdaScale bound needs S <= 1/gamma = {}, got S = {scale}",
            1.0 / gamma
        ));
    }
    for &r in gains {
        if !(1.0..=scale as f64).contains(&r) {
            return Err(domain_err!("gain {r} outside [1, {scale}]"));
        }
        if r * gamma >= 1.0 {
            return Err(domain_err!(
                "gain {r} violates r·gamma < 1 (gamma = {gamma})"
            ));
        }
    }
    Ok(())
}

/// AdaScale bounds after the given gains: the per-step product form
/// `gap · Π(1 − r_t γ) + Δ` and the average-gain form `(1 − γ)^{Σ r_t} · gap + Δ`.
/// The product form never exceeds the average-gain form.
pub fn bound_adascale(
    p: &TheoryParams,
    f0_gap: f64,
    gains: &[f64],
    scale: usize,
) -> Result<(f64, f64)> {
    let p = TheoryParams::new(p.alpha, p.beta, p.variance, p.eta)?;
    check_gains(&p, gains, scale)?;
    let gamma = p.gamma();
    let product: f64 = gains.iter().map(|r| 1.0 - r * gamma).product();
    let total: f64 = gains.iter().sum();
    Ok((
        f0_gap * product + p.delta(),
        f0_gap * libm::pow(1.0 - gamma, total) + p.delta(),
    ))
}

/// Product-form bound after each prefix of `gains`: entry `t` bounds
/// `E[F(w_t)] − F*` for `t = 0..=gains.len()`.
pub fn product_bound_curve(
    p: &TheoryParams,
    f0_gap: f64,
    gains: &[f64],
    scale: usize,
) -> Result<Vec<f64>> {
    let p = TheoryParams::new(p.alpha, p.beta, p.variance, p.eta)?;
    check_gains(&p, gains, scale)?;
    let (gamma, delta) = (p.gamma(), p.delta());
    let mut out = Vec::with_capacity(gains.len() + 1);
    let mut product = 1.0;
    out.push(f0_gap + delta);
    for r in gains {
        product *= 1.0 - r * gamma;
        out.push(f0_gap * product + delta);
    }
    Ok(out)
}

/// Linear-scaling bound `(1 − γ/ξ(S))^{ST} · gap + ξ(S)·Δ`.
pub fn bound_linear(p: &TheoryParams, f0_gap: f64, scale: usize, iterations: u64) -> Result<f64> {
    let p = TheoryParams::new(p.alpha, p.beta, p.variance, p.eta)?;
    let xi = p.xi(scale as f64)?;
    let exponent = scale as f64 * iterations as f64;
    Ok(libm::pow(1.0 - p.gamma() / xi, exponent) * f0_gap + xi * p.delta())
}

/// Sample mean with a 95% normal confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanCi {
    pub mean: f64,
    pub half_width: f64,
    pub n: usize,
}

impl MeanCi {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        let mean = pairwise_sum(values) / n as f64;
        if n < 2 {
            return Self {
                mean,
                half_width: 0.0,
                n,
            };
        }
        let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
        let var = pairwise_sum(&sq) / (n - 1) as f64;
        Self {
            mean,
            half_width: Z95 * libm::sqrt(var / n as f64),
            n,
        }
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.half_width
    }

    pub fn lower(&self) -> f64 {
        self.mean - self.half_width
    }

    /// Sample standard deviation.
    pub fn std_dev(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.half_width / Z95 * libm::sqrt(self.n as f64)
        }
    }
}

/// Order-independent-of-chunking summation: the result depends only on the
/// input order, which the seed→run mapping fixes.
fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().sum();
    }
    let (a, b) = values.split_at(values.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Which bound an empirical run is held against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundKind {
    /// Single-batch SGD, `(1 − γ)^t gap + Δ`.
    SingleBatch,
    /// AdaScale, per-step product with the run's gains.
    AdaScaleProduct,
    /// Linear scaling at scale `S`.
    Linear { scale: usize },
}

/// One logged iteration of a bound check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundPoint {
    pub t: u64,
    pub suboptimality: MeanCi,
    pub bound: f64,
}

impl BoundPoint {
    pub fn holds(&self) -> bool {
        self.suboptimality.upper() <= self.bound
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub points: Vec<BoundPoint>,
    pub n_seeds: usize,
    pub diverged: usize,
    /// Iteration counts of every seed.
    pub iterations: Vec<u64>,
}

impl BoundReport {
    /// Mean plus upper 95% CI under the bound at every logged point and no
    /// divergent seed.
    pub fn pass(&self) -> bool {
        self.diverged == 0 && !self.points.is_empty() && self.points.iter().all(BoundPoint::holds)
    }

    /// Largest `(mean + CI) − bound` over logged points.
    pub fn worst_margin(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.suboptimality.upper() - p.bound)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Run `cfg` once per seed and compare mean suboptimality (with a 95% CI)
/// against the matching bound every `log_every` iterations.
///
/// `cfg.schedule` must be constant with `eta0 = p.eta` (for linear scaling
/// `p.eta` is the single-batch rate), and `p` must dominate the objective's
/// true constants.
pub fn verify_bound_empirically<O, E>(
    obj: &O,
    w0: &ParamVector,
    cfg: &TrainConfig,
    p: &TheoryParams,
    seeds: &[u64],
    log_every: u64,
    exec: &E,
) -> Result<BoundReport>
where
    O: StochasticObjective + ?Sized,
    E: Executor,
{
    let f_star = obj
        .optimum_value()
        .ok_or_else(|| config_err!("bound checks need an objective with known F*"))?;
    let LrSchedule::Constant { eta0 } = cfg.schedule else {
        return Err(config_err!("bound checks need a constant learning rate"));
    };
    if eta0 != p.eta {
        return Err(config_err!(
            "schedule eta0 = {eta0} differs from theory eta = {}",
            p.eta
        ));
    }
    if seeds.is_empty() || log_every == 0 {
        return Err(config_err!("need at least one seed and log_every >= 1"));
    }
    let scale = cfg.run.scale.unwrap_or(1);
    let kind = match (
        cfg.run.algorithm,
        cfg.run.rule.unwrap_or(ScalingRule::Identity),
    ) {
        (Algorithm::Adascale, _) => BoundKind::AdaScaleProduct,
        (Algorithm::ScaledSgd, ScalingRule::Identity) if scale == 1 => BoundKind::SingleBatch,
        (Algorithm::ScaledSgd, ScalingRule::Linear) => BoundKind::Linear { scale },
        _ => return Err(config_err!("no bound for this algorithm/rule combination")),
    };
    let gap0 = obj.objective_value(w0) - f_star;

    let traces: Vec<Result<Trace>> = exec.map(seeds.len(), |k| {
        let cfg = cfg.clone().with_seed(seeds[k]);
        run(obj, w0.clone(), &cfg, &Sequential)
    });
    let traces = traces.into_iter().collect::<Result<Vec<_>>>()?;
    let diverged = traces.iter().filter(|t| t.diverged).count();
    let iterations: Vec<u64> = traces.iter().map(Trace::iterations).collect();

    // per-seed bound curves, indexed by iteration
    let bound_curves: Vec<Vec<f64>> = match kind {
        BoundKind::AdaScaleProduct => traces
            .iter()
            .map(|tr| {
                let gains: Vec<f64> = tr.records.iter().map(|r| r.gain).collect();
                product_bound_curve(p, gap0, &gains, scale)
            })
            .collect::<Result<_>>()?,
        _ => Vec::new(),
    };

    let horizon = iterations.iter().copied().min().unwrap_or(0);
    let mut points = Vec::new();
    let mut t = 0;
    while t <= horizon {
        let subopt: Vec<f64> = traces
            .iter()
            .map(|tr| objective_at(tr, t) - f_star)
            .collect();
        let bound = match kind {
            BoundKind::SingleBatch => bound_single_batch(p, gap0, t)?,
            BoundKind::Linear { scale } => bound_linear(p, gap0, scale, t)?,
            BoundKind::AdaScaleProduct => {
                let at_t: Vec<f64> = bound_curves.iter().map(|c| c[t as usize]).collect();
                pairwise_sum(&at_t) / at_t.len() as f64
            }
        };
        points.push(BoundPoint {
            t,
            suboptimality: MeanCi::of(&subopt),
            bound,
        });
        t += log_every;
    }
    Ok(BoundReport {
        kind,
        points,
        n_seeds: seeds.len(),
        diverged,
        iterations,
    })
}

/// `F(w_t)`, with `t = T` meaning the final iterate.
fn objective_at(trace: &Trace, t: u64) -> f64 {
    match trace.records.get(t as usize) {
        Some(r) => r.objective,
        None => trace.final_objective,
    }
}

/// Mean objective over the last 20% of iterations (at least one).
pub fn steady_state(trace: &Trace) -> f64 {
    let (_, ys) = trace.curve_by_iteration();
    let n = ys.len();
    let tail = (n / 5).max(1);
    pairwise_sum(&ys[n - tail..]) / tail as f64
}

/// One ν of a large-variance linear-scaling check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prop2Row {
    pub nu: u64,
    pub single: MeanCi,
    pub scaled: MeanCi,
    /// Paired difference `F(w⁽¹⁾) − F(w⁽ˢ⁾)` over seeds.
    pub gap: MeanCi,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prop2Report {
    pub rows: Vec<Prop2Row>,
}

impl Prop2Report {
    /// `|gap|` does not grow with ν beyond CI overlap.
    pub fn non_increasing(&self) -> bool {
        self.rows.windows(2).all(|w| {
            w[1].gap.mean.abs() <= w[0].gap.mean.abs() + w[0].gap.half_width + w[1].gap.half_width
        })
    }

    /// The 95% CI of the largest-ν gap contains 0.
    pub fn final_gap_contains_zero(&self) -> bool {
        self.rows
            .last()
            .is_some_and(|r| r.gap.lower() <= 0.0 && 0.0 <= r.gap.upper())
    }

    pub fn pass(&self) -> bool {
        self.non_increasing() && self.final_gap_contains_zero()
    }
}

/// Compare single-batch SGD (`lr = η/ν`, `T₁ = νT`) with its linearly
/// scaled counterpart at scale `S` under noise `νΣ`, for each ν. Both arms
/// use the same seeds, and the gap CI is computed from paired differences.
#[allow(clippy::too_many_arguments)]
pub fn verify_prop2<E: Executor>(
    base: &NoisyQuadratic,
    w0: &ParamVector,
    eta: f64,
    iterations: u64,
    scale: usize,
    nu_list: &[u64],
    seeds: &[u64],
    exec: &E,
) -> Result<Prop2Report> {
    if nu_list.is_empty() || seeds.len() < 2 {
        return Err(config_err!("need at least one nu and two seeds"));
    }
    let mut rows = Vec::with_capacity(nu_list.len());
    for &nu in nu_list {
        if nu == 0 {
            return Err(config_err!("nu must be a positive integer"));
        }
        let lr1 = eta / nu as f64;
        if lr1 * scale as f64 * base.smoothness() >= 2.0 {
            return Err(domain_err!("nu = {nu}: S·eta/nu must stay below 2/beta"));
        }
        let quad = base.with_noise_scale(nu as f64)?;
        let schedule = LrSchedule::Constant { eta0: lr1 };
        let t1 = nu * iterations;
        let single = TrainConfig::new(
            RunSpec::scaled_sgd(ScalingRule::Identity, 1, t1),
            schedule.clone(),
        );
        let scaled = TrainConfig::new(
            RunSpec::scaled_sgd(ScalingRule::Linear, scale, t1),
            schedule,
        );
        let finals: Vec<Result<(f64, f64)>> = exec.map(seeds.len(), |k| {
            let a = run(
                &quad,
                w0.clone(),
                &single.clone().with_seed(seeds[k]),
                &Sequential,
            )?;
            let b = run(
                &quad,
                w0.clone(),
                &scaled.clone().with_seed(seeds[k]),
                &Sequential,
            )?;
            Ok((a.final_objective, b.final_objective))
        });
        let finals = finals.into_iter().collect::<Result<Vec<_>>>()?;
        let a: Vec<f64> = finals.iter().map(|f| f.0).collect();
        let b: Vec<f64> = finals.iter().map(|f| f.1).collect();
        let d: Vec<f64> = finals.iter().map(|f| f.0 - f.1).collect();
        rows.push(Prop2Row {
            nu,
            single: MeanCi::of(&a),
            scaled: MeanCi::of(&b),
            gap: MeanCi::of(&d),
        });
    }
    Ok(Prop2Report { rows })
}

/// Linear interpolation of `(xs, ys)` at `x`; `xs` must be non-decreasing
/// and `x` inside `[xs[0], xs[last]]`.
pub fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> Result<f64> {
    let (Some(&lo), Some(&hi)) = (xs.first(), xs.last()) else {
        return Err(domain_err!("empty curve"));
    };
    if !(lo <= x && x <= hi) {
        return Err(domain_err!(
            "grid point {x} outside curve range [{lo}, {hi}]"
        ));
    }
    let i = xs.partition_point(|&v| v <= x);
    if i == 0 {
        return Ok(ys[0]);
    }
    if i == xs.len() {
        return Ok(ys[xs.len() - 1]);
    }
    let (x0, x1, y0, y1) = (xs[i - 1], xs[i], ys[i - 1], ys[i]);
    if x1 == x0 {
        return Ok(y1);
    }
    Ok(y0 + (y1 - y0) * (x - x0) / (x1 - x0))
}

/// Pointwise mean of several curves on a shared grid.
pub fn mean_curve(curves: &[(Vec<f64>, Vec<f64>)], grid: &[f64]) -> Result<Vec<f64>> {
    if curves.is_empty() {
        return Err(domain_err!("no curves to average"));
    }
    grid.iter()
        .map(|&x| {
            let vals = curves
                .iter()
                .map(|(xs, ys)| interpolate(xs, ys, x))
                .collect::<Result<Vec<_>>>()?;
            Ok(pairwise_sum(&vals) / vals.len() as f64)
        })
        .collect()
}

/// Largest spread `max − min` across curves over the grid.
pub fn curve_alignment(curves: &[(Vec<f64>, Vec<f64>)], grid: &[f64]) -> Result<f64> {
    if curves.is_empty() || grid.is_empty() {
        return Err(domain_err!("need at least one curve and one grid point"));
    }
    let mut worst = 0.0_f64;
    for &x in grid {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (xs, ys) in curves {
            let y = interpolate(xs, ys, x)?;
            lo = lo.min(y);
            hi = hi.max(y);
        }
        worst = worst.max(hi - lo);
    }
    Ok(worst)
}

/// `n` evenly spaced points covering `[lo, hi]`.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => alloc::vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

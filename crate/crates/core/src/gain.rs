//! Gain-ratio estimation.
//!
//! The gain `r_t = E[σ² + μ²] / E[σ²/S + μ²]` is the factor by which one
//! scale-`S` step is worth more than one single-batch step. Because the
//! per-worker gradients and their mean are both at hand, it can also be
//! written as the ratio of expectations
//! `E[(1/S) Σᵢ ‖gᵢ‖²] / E[‖ḡ‖²]`, which is what the online estimators track.

use alloc::vec::Vec;

use crate::error::{capability_err, config_err, Result};
use crate::linalg::ParamVector;
use crate::objectives::{sample_batch, StochasticObjective};
use crate::rng::IterationStream;

/// Default numerical-stability constant.
pub const DEFAULT_EPSILON: f64 = 1e-6;

/// `θ = max{1 − S/1000, 0}`.
pub fn default_theta(scale: usize) -> f64 {
    (1.0 - scale as f64 / 1000.0).max(0.0)
}

/// The two squared norms one iteration contributes to gain estimation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainSample {
    /// `(1/S) Σᵢ ‖gᵢ‖²`
    pub mean_sq_norm: f64,
    /// `‖ḡ‖²`
    pub agg_sq_norm: f64,
    pub scale: usize,
}

/// Build a [`GainSample`] from per-worker gradients and their mean.
pub fn gain_sample(grads: &[ParamVector], agg: &ParamVector) -> Result<GainSample> {
    if grads.is_empty() {
        return Err(config_err!(
            "gain sample needs at least one worker gradient"
        ));
    }
    let s = grads.len();
    let norms: Vec<f64> = grads.iter().map(ParamVector::norm_sq).collect();
    // identical workers (zero noise) must give m₁ = m₂ without rounding drift
    let mean_sq_norm = if norms.iter().all(|&n| n == norms[0]) {
        norms[0]
    } else {
        norms.iter().sum::<f64>() / s as f64
    };
    Ok(GainSample {
        mean_sq_norm,
        agg_sq_norm: agg.norm_sq(),
        scale: s,
    })
}

/// Per-iteration unbiased moment estimates `(σ̂², μ̂²)` before clamping.
pub fn separated_moments(sample: &GainSample) -> Result<(f64, f64)> {
    let s = sample.scale;
    if s < 2 {
        return Err(capability_err!(
            "separated gain estimator needs S >= 2; use the recommended variant"
        ));
    }
    let sf = s as f64;
    let sigma_sq = sf / (sf - 1.0) * (sample.mean_sq_norm - sample.agg_sq_norm);
    let mu_sq = sample.agg_sq_norm - sigma_sq / sf;
    Ok((sigma_sq, mu_sq))
}

/// `(σ² + μ²) / (σ²/S + μ²)`, or 1 when both moments vanish.
pub fn gain_from_moments(sigma_sq: f64, mu_sq: f64, scale: usize) -> f64 {
    let num = sigma_sq + mu_sq;
    let den = sigma_sq / scale as f64 + mu_sq;
    if num == 0.0 && den == 0.0 {
        return 1.0;
    }
    num / den
}

fn clamp_gain(r: f64, scale: usize) -> f64 {
    if r.is_nan() {
        return 1.0;
    }
    r.clamp(1.0, scale as f64)
}

/// Which online estimator a [`GainState`] runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum GainVariant {
    /// `r̂ = (m₁ + ε)/(m₂ + ε)` over moving averages of the two squared norms.
    #[default]
    Recommended,
    /// Moving averages of clamped unbiased `σ̂²` and `μ̂²`.
    Separated,
}

/// Estimator settings.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct GainConfig {
    pub variant: GainVariant,
    /// Moving-average parameter; `max{1 − S/1000, 0}` when absent.
    #[cfg_attr(feature = "serde", serde(skip_serializing_if = "Option::is_none"))]
    pub theta: Option<f64>,
    pub epsilon: f64,
    /// Estimate `r_t` from prior iterations only.
    pub exclude_current: bool,
}

impl Default for GainConfig {
    fn default() -> Self {
        Self {
            variant: GainVariant::Recommended,
            theta: None,
            epsilon: DEFAULT_EPSILON,
            exclude_current: false,
        }
    }
}

impl GainConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(theta) = self.theta {
            if !(0.0..1.0).contains(&theta) {
                return Err(config_err!("theta must lie in [0, 1), got {theta}"));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(config_err!(
                "epsilon must be positive, got {}",
                self.epsilon
            ));
        }
        Ok(())
    }

    pub fn theta_for(&self, scale: usize) -> f64 {
        self.theta.unwrap_or_else(|| default_theta(scale))
    }
}

/// Exponential moving average that starts as a plain running mean while
/// fewer than `1/(1 − θ)` samples have been seen.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct MovingAverage {
    value: f64,
    count: u64,
}

impl MovingAverage {
    fn push(&mut self, x: f64, theta: f64) {
        self.count += 1;
        let n = self.count as f64;
        if n * (1.0 - theta) <= 1.0 {
            self.value += (x - self.value) / n;
        } else {
            self.value = theta * self.value + (1.0 - theta) * x;
        }
    }
}

/// Running state of an online gain estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct GainState {
    config: GainConfig,
    scale: usize,
    theta: f64,
    /// `m₁` or `σ̄²` depending on the variant.
    first: MovingAverage,
    /// `m₂` or `μ̄²`.
    second: MovingAverage,
    last: f64,
}

impl GainState {
    pub fn new(config: GainConfig, scale: usize) -> Result<Self> {
        config.validate()?;
        if scale == 0 {
            return Err(config_err!("scale S must be at least 1"));
        }
        Ok(Self {
            config,
            scale,
            theta: config.theta_for(scale),
            first: MovingAverage::default(),
            second: MovingAverage::default(),
            last: 1.0,
        })
    }

    pub fn scale(&self) -> usize {
        self.scale
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn config(&self) -> &GainConfig {
        &self.config
    }

    /// Iterations absorbed so far.
    pub fn count(&self) -> u64 {
        self.first.count
    }

    /// Most recent estimate (1 before any update).
    pub fn estimate(&self) -> f64 {
        self.last
    }

    /// Switch to a new scale. Accumulators are kept; θ is recomputed unless
    /// it was fixed explicitly.
    pub fn set_scale(&mut self, scale: usize) -> Result<()> {
        if scale == 0 {
            return Err(config_err!("scale S must be at least 1"));
        }
        self.scale = scale;
        self.theta = self.config.theta_for(scale);
        Ok(())
    }

    /// Absorb one iteration and return `r_t ∈ [1, S]`.
    pub fn update(&mut self, sample: &GainSample) -> Result<f64> {
        if sample.scale != self.scale {
            return Err(config_err!(
                "sample from S = {} fed to estimator at S = {}",
                sample.scale,
                self.scale
            ));
        }
        match self.config.variant {
            GainVariant::Recommended => Ok(self.update_recommended(sample)),
            GainVariant::Separated => self.update_separated(sample),
        }
    }

    /// Recommended estimator: moving averages of the two squared norms.
    pub fn update_recommended(&mut self, sample: &GainSample) -> f64 {
        let exclude = self.config.exclude_current;
        let prior = (self.count() > 0).then(|| self.recommended_ratio());
        self.first.push(sample.mean_sq_norm, self.theta);
        self.second.push(sample.agg_sq_norm, self.theta);
        let r = if exclude {
            prior.unwrap_or(1.0)
        } else {
            self.recommended_ratio()
        };
        self.last = r;
        r
    }

    fn recommended_ratio(&self) -> f64 {
        let eps = self.config.epsilon;
        clamp_gain(
            (self.first.value + eps) / (self.second.value + eps),
            self.scale,
        )
    }

    /// Separated estimator: clamped `σ̂²` and `μ̂²` averaged separately.
    /// The first call always returns 1, as does every call at `S = 1`, where
    /// the moments are not identifiable and nothing is accumulated.
    pub fn update_separated(&mut self, sample: &GainSample) -> Result<f64> {
        if sample.scale < 2 {
            self.last = 1.0;
            return Ok(1.0);
        }
        let (sigma_sq, mu_sq) = separated_moments(sample)?;
        let sigma_sq = sigma_sq.max(self.config.epsilon);
        let mu_sq = mu_sq.max(0.0);
        let first_call = self.count() == 0;
        let prior = (!first_call).then(|| self.separated_ratio());
        self.first.push(sigma_sq, self.theta);
        self.second.push(mu_sq, self.theta);
        let r = if first_call {
            1.0
        } else if self.config.exclude_current {
            prior.unwrap_or(1.0)
        } else {
            self.separated_ratio()
        };
        self.last = r;
        Ok(r)
    }

    fn separated_ratio(&self) -> f64 {
        clamp_gain(
            gain_from_moments(self.first.value, self.second.value, self.scale),
            self.scale,
        )
    }
}

/// Exact gain from closed-form moments at `w`.
pub fn analytic_gain<O>(obj: &O, w: &ParamVector, scale: usize) -> Result<f64>
where
    O: StochasticObjective + ?Sized,
{
    if scale == 0 {
        return Err(config_err!("scale S must be at least 1"));
    }
    let (mu_sq, sigma_sq) = obj.analytic_moments(w)?;
    Ok(gain_from_moments(sigma_sq, mu_sq, scale))
}

/// Offline Monte-Carlo gain at a fixed `w` from `n_batches` independent
/// single-batch gradients (worker `j` of `stream` supplies batch `j`).
pub fn oracle_gain<O>(
    obj: &O,
    w: &ParamVector,
    scale: usize,
    n_batches: usize,
    stream: &IterationStream<'_>,
) -> Result<f64>
where
    O: StochasticObjective + ?Sized,
{
    if n_batches < 2 {
        return Err(config_err!("oracle gain needs at least 2 batches"));
    }
    if scale == 0 {
        return Err(config_err!("scale S must be at least 1"));
    }
    let mut mean = ParamVector::zeros(obj.dim());
    let mut grads = alloc::vec::Vec::with_capacity(n_batches);
    for j in 0..n_batches {
        let g = obj.stochastic_gradient(w, &sample_batch(obj, j, stream))?;
        mean.axpy(1.0, &g);
        grads.push(g);
    }
    let n = n_batches as f64;
    mean.scale(1.0 / n);
    let sigma_sq = grads.iter().map(|g| g.sub(&mean).norm_sq()).sum::<f64>() / (n - 1.0);
    let mu_sq = (mean.norm_sq() - sigma_sq / n).max(0.0);
    Ok(clamp_gain(gain_from_moments(sigma_sq, mu_sq, scale), scale))
}

//! Learning-rate schedule families and fixed scaling rules.
//!
//! A single-batch schedule `lr_1` with horizon `T_1` is mapped by a
//! [`ScalingRule`] to a schedule `lr_S` and horizon `T_S` for scale `S`.

use alloc::vec::Vec;

use crate::error::{config_err, Result};

/// Default warm-up length as a fraction of `T_S`.
pub const DEFAULT_WARMUP_FRACTION: f64 = 0.055;
/// Doubled warm-up preset.
pub const DOUBLED_WARMUP_FRACTION: f64 = 0.11;

/// Single-batch learning-rate schedule.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(
    feature = "serde",
    serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)
)]
pub enum LrSchedule {
    Constant {
        eta0: f64,
    },
    /// `eta0 · d^(t / T_S1)`
    ExponentialDecay {
        eta0: f64,
        d: f64,
        #[cfg_attr(feature = "serde", serde(rename = "T_S1"))]
        t_s1: u64,
    },
    /// `eta0 · d^(#{i : t > w_i})`
    StepDecay {
        eta0: f64,
        d: f64,
        milestones: Vec<u64>,
    },
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        let eta0 = self.initial();
        if !(eta0.is_finite() && eta0 > 0.0) {
            return Err(config_err!("eta0 must be positive, got {eta0}"));
        }
        match self {
            Self::Constant { .. } => Ok(()),
            Self::ExponentialDecay { d, t_s1, .. } => {
                check_decay(*d)?;
                if *t_s1 == 0 {
                    return Err(config_err!("T_S1 must be positive"));
                }
                Ok(())
            }
            Self::StepDecay { d, milestones, .. } => {
                check_decay(*d)?;
                if milestones.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(config_err!("milestones must be strictly increasing"));
                }
                Ok(())
            }
        }
    }

    /// `lr(0)`.
    pub fn initial(&self) -> f64 {
        match self {
            Self::Constant { eta0 }
            | Self::ExponentialDecay { eta0, .. }
            | Self::StepDecay { eta0, .. } => *eta0,
        }
    }

    /// `lr(t)` at an integer iteration.
    pub fn eval(&self, t: u64) -> f64 {
        match self {
            Self::StepDecay {
                eta0,
                d,
                milestones,
            } => {
                let passed = milestones.iter().filter(|&&m| t > m).count();
                eta0 * libm::pow(*d, passed as f64)
            }
            _ => self.eval_continuous(t as f64),
        }
    }

    /// The family formula at a real-valued position.
    pub fn eval_continuous(&self, x: f64) -> f64 {
        match self {
            Self::Constant { eta0 } => *eta0,
            Self::ExponentialDecay { eta0, d, t_s1 } => eta0 * libm::pow(*d, x / *t_s1 as f64),
            Self::StepDecay {
                eta0,
                d,
                milestones,
            } => {
                let passed = milestones.iter().filter(|&&m| x > m as f64).count();
                eta0 * libm::pow(*d, passed as f64)
            }
        }
    }
}

fn check_decay(d: f64) -> Result<()> {
    if !(d > 0.0 && d <= 1.0) {
        return Err(config_err!("decay factor d must lie in (0, 1], got {d}"));
    }
    Ok(())
}

/// Fixed rule translating `(S, lr_1, T_1)` into `(lr_S, T_S)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ScalingRule {
    /// `T_S = T_1`, `lr_S = lr_1`.
    Identity,
    /// `T_S = ⌈T_1/S⌉`, `lr_S(t) = S · lr_1(S t)`.
    Linear,
    /// Linear scaling with linear warm-up.
    Lsw,
    /// [`ScalingRule::Lsw`] stretched to a target iteration count.
    LswPlus,
}

/// Inputs of a scaling rule.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledSchedule {
    pub base: LrSchedule,
    pub rule: ScalingRule,
    pub scale: u64,
    pub t1: u64,
    pub warmup_fraction: f64,
    /// Total iterations for [`ScalingRule::LswPlus`].
    pub t_target: Option<u64>,
}

impl ScaledSchedule {
    pub fn new(base: LrSchedule, rule: ScalingRule, scale: u64, t1: u64) -> Self {
        Self {
            base,
            rule,
            scale,
            t1,
            warmup_fraction: DEFAULT_WARMUP_FRACTION,
            t_target: None,
        }
    }

    pub fn with_warmup_fraction(mut self, fraction: f64) -> Self {
        self.warmup_fraction = fraction;
        self
    }

    pub fn with_target(mut self, t_target: u64) -> Self {
        self.t_target = Some(t_target);
        self
    }

    /// Resolve the rule into an evaluable schedule and horizon.
    pub fn apply(&self) -> Result<ScaledLr> {
        self.base.validate()?;
        if self.scale == 0 {
            return Err(config_err!("scale S must be at least 1"));
        }
        if self.t1 == 0 {
            return Err(config_err!("T_1 must be at least 1"));
        }
        let s = self.scale;
        let t_s = self.t1.div_ceil(s);
        let shape = match self.rule {
            ScalingRule::Identity => Shape::Identity,
            ScalingRule::Linear => Shape::Linear,
            ScalingRule::Lsw | ScalingRule::LswPlus => {
                let f = self.warmup_fraction;
                if !(f > 0.0 && f < 1.0) {
                    return Err(config_err!("warmup_fraction must lie in (0, 1), got {f}"));
                }
                // the epsilon keeps exact products such as 0.055·200 = 11 from
                // rounding up to 12
                let warmup = libm::ceil(f * t_s as f64 - 1e-9).max(0.0) as u64;
                Shape::Warmup { warmup, t_lsw: t_s }
            }
        };
        let horizon = match (self.rule, shape) {
            (ScalingRule::Identity, _) => self.t1,
            (ScalingRule::LswPlus, _) => {
                let target = self
                    .t_target
                    .ok_or_else(|| config_err!("lsw_plus requires T_target"))?;
                if target < t_s {
                    return Err(config_err!("T_target {target} is below ⌈T_1/S⌉ = {t_s}"));
                }
                if target > self.t1 {
                    return Err(config_err!("T_target {target} exceeds T_1 = {}", self.t1));
                }
                target
            }
            _ => t_s,
        };
        Ok(ScaledLr {
            base: self.base.clone(),
            scale: s,
            t1: self.t1,
            shape,
            stretch: (self.rule == ScalingRule::LswPlus).then_some(horizon),
            horizon,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shape {
    Identity,
    Linear,
    Warmup { warmup: u64, t_lsw: u64 },
}

/// A resolved scale-`S` schedule: `t ↦ lr_S(t)` over `[0, T_S)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledLr {
    base: LrSchedule,
    scale: u64,
    t1: u64,
    shape: Shape,
    /// LSW+ total length; evaluation maps `t` back onto the LSW axis.
    stretch: Option<u64>,
    horizon: u64,
}

impl ScaledLr {
    /// `T_S`.
    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    /// `W_S`, or 0 for rules without warm-up.
    pub fn warmup_len(&self) -> u64 {
        match self.shape {
            Shape::Warmup { warmup, .. } => warmup,
            _ => 0,
        }
    }

    /// Effective gain the rule applies over the single-batch schedule,
    /// used when tracing fixed-rule runs alongside AdaScale.
    pub fn nominal_gain(&self) -> f64 {
        match self.shape {
            Shape::Identity => 1.0,
            _ => self.scale as f64,
        }
    }

    pub fn eval(&self, t: u64) -> f64 {
        let s = self.scale as f64;
        match self.shape {
            Shape::Identity => self.base.eval(t),
            Shape::Linear => s * self.base.eval(self.scale * t),
            Shape::Warmup { warmup, t_lsw } => {
                let t = match self.stretch {
                    // t' = ⌊t · T_lsw / T_target⌋
                    Some(target) => ((t as u128 * t_lsw as u128) / target as u128) as u64,
                    None => t,
                };
                self.eval_lsw(t, warmup, t_lsw)
            }
        }
    }

    fn eval_lsw(&self, t: u64, warmup: u64, t_lsw: u64) -> f64 {
        let s = self.scale as f64;
        let lr0 = self.base.initial();
        if t < warmup {
            return lr0 * (1.0 + (s - 1.0) * t as f64 / warmup as f64);
        }
        match &self.base {
            LrSchedule::Constant { eta0 } => s * eta0,
            // the first W_S post-warm-up iterations of the linearly scaled
            // schedule are skipped: iteration t resumes at S·t
            LrSchedule::StepDecay { .. } => s * self.base.eval(self.scale * t),
            // the whole scaled schedule is compressed into the remaining
            // T_S − W_S iterations: single-batch position 0 at t = W_S and
            // T_1 at t = T_S
            LrSchedule::ExponentialDecay { .. } => {
                let span = t_lsw.saturating_sub(warmup).max(1) as f64;
                let x = (t - warmup) as f64 * self.t1 as f64 / span;
                s * self.base.eval_continuous(x)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(f64::MIN_POSITIVE)
    }

    fn cifar() -> LrSchedule {
        LrSchedule::ExponentialDecay {
            eta0: 0.08,
            d: 0.0133,
            t_s1: 39100,
        }
    }

    fn imagenet() -> LrSchedule {
        LrSchedule::StepDecay {
            eta0: 0.1,
            d: 0.1,
            milestones: vec![150240, 300480, 400640],
        }
    }

    #[test]
    fn exponential_family_endpoints() {
        assert_eq!(cifar().eval(0), 0.08);
        assert!(close(cifar().eval(39100), 1.064e-3, 1e-12));
    }

    #[test]
    fn step_family_counts_passed_milestones() {
        let s = imagenet();
        assert!(close(s.eval(200_000), 0.01, 1e-12));
        // strict inequality: the milestone itself still uses the old rate
        assert_eq!(s.eval(150_240), 0.1);
        assert!(close(s.eval(150_241), 0.01, 1e-12));
        assert!(close(s.eval(500_000), 1e-4, 1e-12));
    }

    #[test]
    fn constant_family() {
        assert_eq!(LrSchedule::Constant { eta0: 0.3 }.eval(12345), 0.3);
    }

    #[test]
    fn validation() {
        assert!(LrSchedule::Constant { eta0: 0.0 }.validate().is_err());
        assert!(LrSchedule::ExponentialDecay {
            eta0: 1.0,
            d: 1.5,
            t_s1: 10
        }
        .validate()
        .is_err());
        assert!(LrSchedule::ExponentialDecay {
            eta0: 1.0,
            d: 0.5,
            t_s1: 0
        }
        .validate()
        .is_err());
        let bad = LrSchedule::StepDecay {
            eta0: 1.0,
            d: 0.1,
            milestones: vec![5, 5],
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn identity_rule_keeps_schedule() {
        let lr = ScaledSchedule::new(cifar(), ScalingRule::Identity, 4, 39100)
            .apply()
            .unwrap();
        assert_eq!(lr.horizon(), 39100);
        for t in [0, 1, 500, 39099] {
            assert_eq!(lr.eval(t), cifar().eval(t));
        }
    }

    #[test]
    fn linear_rule_constant_base() {
        let base = LrSchedule::Constant { eta0: 0.1 };
        let lr = ScaledSchedule::new(base, ScalingRule::Linear, 8, 1000)
            .apply()
            .unwrap();
        assert_eq!(lr.horizon(), 125);
        assert!((0..125).all(|t| close(lr.eval(t), 0.8, 1e-15)));
    }

    #[test]
    fn lsw_warmup_endpoints() {
        // T_1 chosen so that ⌈T_1/16⌉ = 2444
        let base = LrSchedule::Constant { eta0: 0.1 };
        let lr = ScaledSchedule::new(base, ScalingRule::Lsw, 16, 2444 * 16)
            .apply()
            .unwrap();
        assert_eq!(lr.horizon(), 2444);
        assert_eq!(lr.warmup_len(), 135);
        assert_eq!(lr.eval(0), 0.1);
        assert!(close(lr.eval(135), 1.6, 1e-12));
        // linear in between: midpoint of the ramp
        let mid = 0.1 * (1.0 + 15.0 * 67.0 / 135.0);
        assert!(close(lr.eval(67), mid, 1e-12));
        let slope = lr.eval(2) - lr.eval(1);
        assert!(close(lr.eval(101) - lr.eval(100), slope, 1e-9));
    }

    #[test]
    fn warmup_length_rounding_is_exact_for_integral_products() {
        let base = LrSchedule::Constant { eta0: 0.1 };
        // 0.055 · 200 = 11 exactly in decimal
        let lr = ScaledSchedule::new(base, ScalingRule::Lsw, 1, 200)
            .apply()
            .unwrap();
        assert_eq!(lr.warmup_len(), 11);
    }

    #[test]
    fn lsw_exponential_reaches_end_of_single_batch_schedule() {
        let lr = ScaledSchedule::new(cifar(), ScalingRule::Lsw, 16, 39100)
            .apply()
            .unwrap();
        let t_s = lr.horizon();
        assert_eq!(t_s, 2444);
        let w = lr.warmup_len();
        // warm-up ends at S · lr_1(0) and decay restarts from there
        assert!(close(lr.eval(w), 16.0 * 0.08, 1e-12));
        assert!(lr.eval(w - 1) < lr.eval(w));
        assert!(lr.eval(w + 1) < lr.eval(w));
        assert!(close(lr.eval(t_s), 16.0 * cifar().eval(39100), 1e-12));
        // per-step decay is slightly faster than plain linear scaling
        let t = 1000;
        let linear = cifar().eval(16 * (t + 1)) / cifar().eval(16 * t);
        assert!(lr.eval(t + 1) / lr.eval(t) < linear);
    }

    #[test]
    fn lsw_step_skips_post_warmup_iterations() {
        let lr = ScaledSchedule::new(imagenet(), ScalingRule::Lsw, 32, 450_000)
            .apply()
            .unwrap();
        let w = lr.warmup_len();
        for t in [w, w + 1, 5000, lr.horizon() - 1] {
            assert!(close(lr.eval(t), 32.0 * imagenet().eval(32 * t), 1e-12));
        }
    }

    #[test]
    fn lsw_plus_at_minimal_target_is_lsw() {
        let lsw = ScaledSchedule::new(cifar(), ScalingRule::Lsw, 16, 39100)
            .apply()
            .unwrap();
        let plus = ScaledSchedule::new(cifar(), ScalingRule::LswPlus, 16, 39100)
            .with_target(lsw.horizon())
            .apply()
            .unwrap();
        assert_eq!(plus.horizon(), lsw.horizon());
        assert!((0..lsw.horizon()).all(|t| plus.eval(t) == lsw.eval(t)));
    }

    #[test]
    fn lsw_plus_stretches() {
        let base = LrSchedule::Constant { eta0: 0.1 };
        let plus = ScaledSchedule::new(base.clone(), ScalingRule::LswPlus, 8, 8000)
            .with_target(2000)
            .apply()
            .unwrap();
        assert_eq!(plus.horizon(), 2000);
        // lsw: T_S = 1000, W_S = 55; stretched warm-up ends near t = 110
        assert!(plus.eval(109) < 0.8);
        assert!(close(plus.eval(110), 0.8, 1e-12));
    }

    #[test]
    fn lsw_plus_target_errors() {
        let base = LrSchedule::Constant { eta0: 0.1 };
        let sch = ScaledSchedule::new(base, ScalingRule::LswPlus, 8, 8000);
        assert!(sch.clone().with_target(999).apply().is_err());
        assert!(sch.clone().with_target(8001).apply().is_err());
        assert!(sch.apply().is_err());
    }

    #[test]
    fn doubled_warmup_preset() {
        let base = LrSchedule::Constant { eta0: 0.1 };
        let lr = ScaledSchedule::new(base, ScalingRule::Lsw, 4, 4000)
            .with_warmup_fraction(DOUBLED_WARMUP_FRACTION)
            .apply()
            .unwrap();
        assert_eq!(lr.warmup_len(), 110);
    }
}

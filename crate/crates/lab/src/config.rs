//! Experiment files.
//!
//! An experiment is a TOML document with `[objective]`, `[schedule]`,
//! `[gain]` and `[run]` tables, an optional `[sweep]` axis and an optional
//! `[compare]` table for gain comparisons:
//!
//! ```toml
//! seeds = [1, 2, 3]
//!
//! [objective]
//! kind = "quadratic"
//! a_diag = [1.0, 1.0]
//! sigma_diag = [0.01, 0.01]
//!
//! [schedule]
//! family = "constant"
//! eta0 = 0.1
//!
//! [run]
//! algorithm = "adascale"
//! S = 4
//! T_SI = 500
//! ```

use std::path::{Path, PathBuf};

use adascale_core::engine::TrainConfig;
use adascale_core::gain::GainConfig;
use adascale_core::objectives::{Objective, ObjectiveSpec, StochasticObjective};
use adascale_core::schedules::LrSchedule;
use adascale_core::{engine::RunSpec, ParamVector};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<u64>,
    pub objective: ObjectiveSpec,
    pub schedule: LrSchedule,
    #[serde(default)]
    pub gain: GainConfig,
    pub run: RunSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepAxis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareSpec>,
}

/// One sweep dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", rename_all = "snake_case", deny_unknown_fields)]
pub enum SweepAxis {
    /// Values of `run.S`.
    Scale { values: Vec<usize> },
    /// Values of `gain.theta`.
    Theta { values: Vec<f64> },
    /// Exponential-decay grid: every `(eta0, d)` pair.
    LrGrid { eta0: Vec<f64>, d: Vec<f64> },
}

/// One point of a sweep, as the columns it contributes to the matrix CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub labels: Vec<(&'static str, String)>,
    pub spec: ExperimentSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSpec {
    /// Comparison interval `K` in iterations.
    pub every: u64,
    pub n_batches: usize,
}

impl Default for CompareSpec {
    fn default() -> Self {
        Self {
            every: 50,
            n_batches: 1000,
        }
    }
}

impl ExperimentSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.train_config(0).validate()?;
        match &self.sweep {
            Some(SweepAxis::Scale { values }) if values.is_empty() => {
                return Err(LabError::Usage("sweep axis `S` is empty".into()))
            }
            Some(SweepAxis::Theta { values }) if values.is_empty() => {
                return Err(LabError::Usage("sweep axis `theta` is empty".into()))
            }
            Some(SweepAxis::LrGrid { eta0, d }) if eta0.is_empty() || d.is_empty() => {
                return Err(LabError::Usage("sweep axis `lr_grid` is empty".into()))
            }
            Some(SweepAxis::LrGrid { .. })
                if !matches!(self.schedule, LrSchedule::ExponentialDecay { .. }) =>
            {
                return Err(LabError::Usage(
                    "lr_grid sweeps need an exponential_decay schedule".into(),
                ))
            }
            _ => {}
        }
        if let Some(c) = &self.compare {
            if c.every == 0 || c.n_batches < 2 {
                return Err(LabError::Usage(
                    "compare needs every >= 1 and n_batches >= 2".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig::new(self.run.clone(), self.schedule.clone())
            .with_gain(self.gain)
            .with_seed(seed)
    }

    /// Build the objective and its starting point.
    pub fn build(&self) -> Result<(Objective, ParamVector)> {
        let obj = self.objective.build()?;
        let w0 = match self.objective.start() {
            Some(w0) => ParamVector::from_vec(w0.to_vec()),
            None => obj.default_start(),
        };
        Ok((obj, w0))
    }

    /// Expand the sweep axis into one experiment per point.
    pub fn sweep_points(&self) -> Result<Vec<SweepPoint>> {
        let axis = self
            .sweep
            .as_ref()
            .ok_or_else(|| LabError::Usage("config has no [sweep] axis".into()))?;
        let base = ExperimentSpec {
            sweep: None,
            ..self.clone()
        };
        let points = match axis {
            SweepAxis::Scale { values } => values
                .iter()
                .map(|&s| {
                    let mut spec = base.clone();
                    spec.run.scale = Some(s);
                    SweepPoint {
                        labels: vec![("S", s.to_string())],
                        spec,
                    }
                })
                .collect(),
            SweepAxis::Theta { values } => values
                .iter()
                .map(|&theta| {
                    let mut spec = base.clone();
                    spec.gain.theta = Some(theta);
                    SweepPoint {
                        labels: vec![("theta", crate::output::fmt_f64(theta))],
                        spec,
                    }
                })
                .collect(),
            SweepAxis::LrGrid { eta0, d } => {
                let LrSchedule::ExponentialDecay { t_s1, .. } = base.schedule else {
                    return Err(LabError::Usage(
                        "lr_grid sweeps need an exponential_decay schedule".into(),
                    ));
                };
                let mut points = Vec::with_capacity(eta0.len() * d.len());
                for &e in eta0 {
                    for &dd in d {
                        let mut spec = base.clone();
                        spec.schedule = LrSchedule::ExponentialDecay {
                            eta0: e,
                            d: dd,
                            t_s1,
                        };
                        points.push(SweepPoint {
                            labels: vec![
                                ("eta0", crate::output::fmt_f64(e)),
                                ("d", crate::output::fmt_f64(dd)),
                            ],
                            spec,
                        });
                    }
                }
                points
            }
        };
        for p in &points {
            p.spec.validate()?;
        }
        Ok(points)
    }
}

//! Stochastic objectives `F(w) = E_x[f(w, x)]` with batch samplers.

mod classifier;
mod quadratic;

use alloc::vec::Vec;

use rand::RngCore;

use crate::error::{capability_err, config_err, Result};
use crate::linalg::ParamVector;
use crate::rng::IterationStream;

pub use classifier::{ClassifierModel, ClassifierSpec, GeneratedClassifier};
pub use quadratic::{NoisyQuadratic, QuadraticSpec};

/// Objective-specific content of one worker's batch.
#[derive(Debug, Clone, PartialEq)]
pub enum BatchPayload {
    /// Additive gradient noise draw.
    Noise(ParamVector),
    /// Example indices, sampled with replacement.
    Indices(Vec<usize>),
}

/// One worker's batch at one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub payload: BatchPayload,
    /// 1-based worker index in `[1, S]`.
    pub worker_index: usize,
}

/// A differentiable loss family with a batch sampler.
///
/// Gradients must be unbiased: the mean of `stochastic_gradient` over
/// sampled batches is `true_gradient`.
pub trait StochasticObjective: Sync {
    fn dim(&self) -> usize;

    /// Draw one batch. Must consume randomness only from `rng`.
    fn sample_payload(&self, rng: &mut dyn RngCore) -> BatchPayload;

    fn stochastic_gradient(&self, w: &ParamVector, batch: &Batch) -> Result<ParamVector>;

    fn true_gradient(&self, w: &ParamVector) -> Result<ParamVector>;

    fn objective_value(&self, w: &ParamVector) -> f64;

    /// `(‖∇F(w)‖², tr Σ_g(w))` where available in closed form.
    fn analytic_moments(&self, _w: &ParamVector) -> Result<(f64, f64)> {
        Err(capability_err!(
            "objective has no closed-form gradient moments"
        ))
    }

    /// `F* = min F`, when known exactly.
    fn optimum_value(&self) -> Option<f64> {
        None
    }

    /// Starting point used when a run does not specify one.
    fn default_start(&self) -> ParamVector {
        ParamVector::zeros(self.dim())
    }

    /// True when every batch yields the exact gradient.
    fn is_deterministic(&self) -> bool {
        false
    }
}

/// Draw `scale` jointly independent batches, worker `i` from its own
/// substream of `stream`.
pub fn sample_batches<O>(obj: &O, scale: usize, stream: &IterationStream<'_>) -> Result<Vec<Batch>>
where
    O: StochasticObjective + ?Sized,
{
    if scale == 0 {
        return Err(config_err!("scale S must be at least 1"));
    }
    Ok((0..scale).map(|i| sample_batch(obj, i, stream)).collect())
}

/// Batch of the 0-based worker `worker` at this iteration.
pub fn sample_batch<O>(obj: &O, worker: usize, stream: &IterationStream<'_>) -> Batch
where
    O: StochasticObjective + ?Sized,
{
    let mut rng = stream.worker(worker);
    Batch {
        payload: obj.sample_payload(&mut rng),
        worker_index: worker + 1,
    }
}

/// Every objective the lab can construct from configuration.
#[derive(Debug, Clone)]
pub enum Objective {
    Quadratic(NoisyQuadratic),
    Classifier(GeneratedClassifier),
}

/// Serializable description of an [`Objective`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum ObjectiveSpec {
    Quadratic(QuadraticSpec),
    Classifier(ClassifierSpec),
}

impl ObjectiveSpec {
    pub fn build(&self) -> Result<Objective> {
        Ok(match self {
            Self::Quadratic(q) => Objective::Quadratic(q.build()?),
            Self::Classifier(c) => Objective::Classifier(GeneratedClassifier::generate(c)?),
        })
    }

    /// Configured starting point, if any.
    pub fn start(&self) -> Option<&[f64]> {
        match self {
            Self::Quadratic(q) => q.w0.as_deref(),
            Self::Classifier(_) => None,
        }
    }
}

macro_rules! dispatch {
    ($self:ident, $o:ident => $e:expr) => {
        match $self {
            Objective::Quadratic($o) => $e,
            Objective::Classifier($o) => $e,
        }
    };
}

impl StochasticObjective for Objective {
    fn dim(&self) -> usize {
        dispatch!(self, o => o.dim())
    }
    fn sample_payload(&self, rng: &mut dyn RngCore) -> BatchPayload {
        dispatch!(self, o => o.sample_payload(rng))
    }
    fn stochastic_gradient(&self, w: &ParamVector, batch: &Batch) -> Result<ParamVector> {
        dispatch!(self, o => o.stochastic_gradient(w, batch))
    }
    fn true_gradient(&self, w: &ParamVector) -> Result<ParamVector> {
        dispatch!(self, o => o.true_gradient(w))
    }
    fn objective_value(&self, w: &ParamVector) -> f64 {
        dispatch!(self, o => o.objective_value(w))
    }
    fn analytic_moments(&self, w: &ParamVector) -> Result<(f64, f64)> {
        dispatch!(self, o => o.analytic_moments(w))
    }
    fn optimum_value(&self) -> Option<f64> {
        dispatch!(self, o => o.optimum_value())
    }
    fn default_start(&self) -> ParamVector {
        dispatch!(self, o => o.default_start())
    }
    fn is_deterministic(&self) -> bool {
        dispatch!(self, o => o.is_deterministic())
    }
}

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use super::{Batch, BatchPayload, StochasticObjective};
use crate::error::{config_err, Result};
use crate::linalg::ParamVector;
use crate::rng::{Purpose, StreamKey};

/// Model trained by a [`GeneratedClassifier`].
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "model", rename_all = "snake_case"))]
pub enum ClassifierModel {
    /// Linear logit `wᵀx + b`.
    Logistic,
    /// `w₂ᵀ tanh(W₁x + b₁) + b₂`.
    Mlp { hidden: usize },
}

/// Data and model description. The dataset is a pure function of these
/// fields, so two runs with the same spec see the same examples.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ClassifierSpec {
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub model: ClassifierModel,
    pub n_examples: usize,
    pub features: usize,
    pub batch_size: usize,
    /// Distance between the two cluster means.
    pub separation: f64,
    /// L2 penalty `(l2/2)‖w‖²`, included in every per-example loss.
    pub l2: f64,
    pub data_seed: u64,
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        Self {
            model: ClassifierModel::Logistic,
            n_examples: 512,
            features: 8,
            batch_size: 8,
            separation: 2.0,
            l2: 1e-2,
            data_seed: 20200711,
        }
    }
}

/// Binary classification with logistic loss over a fixed, generated
/// two-cluster dataset. `F` is the mean per-example loss; batches sample
/// examples uniformly with replacement.
#[derive(Debug, Clone)]
pub struct GeneratedClassifier {
    spec: ClassifierSpec,
    /// Row-major `n × p`.
    inputs: Vec<f64>,
    /// Labels in `{−1, +1}`.
    labels: Vec<f64>,
    start: ParamVector,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

impl GeneratedClassifier {
    pub fn generate(spec: &ClassifierSpec) -> Result<Self> {
        let (n, p) = (spec.n_examples, spec.features);
        if n == 0 || p == 0 || spec.batch_size == 0 {
            return Err(config_err!(
                "classifier needs positive n_examples, features and batch_size"
            ));
        }
        if let ClassifierModel::Mlp { hidden: 0 } = spec.model {
            return Err(config_err!("mlp needs at least one hidden unit"));
        }
        if !(spec.l2 >= 0.0 && spec.separation.is_finite()) {
            return Err(config_err!("l2 must be non-negative and separation finite"));
        }
        let key = StreamKey::new(spec.data_seed, Purpose::Data);
        let mut rng = key.iteration(0).worker(0);
        // cluster means at ±(separation/2)·u for a random unit direction u
        let mut dir: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let norm = libm::sqrt(dir.iter().map(|x| x * x).sum::<f64>());
        dir.iter_mut().for_each(|x| *x /= norm);
        let mut inputs = Vec::with_capacity(n * p);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let y = if i % 2 == 0 { 1.0 } else { -1.0 };
            labels.push(y);
            for &u in &dir {
                let z: f64 = rng.sample(StandardNormal);
                inputs.push(0.5 * spec.separation * y * u + z);
            }
        }
        let mut obj = Self {
            spec: spec.clone(),
            inputs,
            labels,
            start: ParamVector::zeros(0),
        };
        let mut init_rng = key.iteration(1).worker(0);
        obj.start = match spec.model {
            ClassifierModel::Logistic => ParamVector::zeros(obj.dim()),
            ClassifierModel::Mlp { hidden } => {
                let fan_in = libm::sqrt(p as f64);
                let mut w = ParamVector::zeros(obj.dim());
                for j in 0..hidden * p {
                    w[j] = rng_normal(&mut init_rng) / fan_in;
                }
                let w2 = hidden * p + hidden;
                for j in 0..hidden {
                    w[w2 + j] = rng_normal(&mut init_rng) / libm::sqrt(hidden as f64);
                }
                w
            }
        };
        Ok(obj)
    }

    pub fn spec(&self) -> &ClassifierSpec {
        &self.spec
    }

    pub fn n_examples(&self) -> usize {
        self.labels.len()
    }

    fn example(&self, i: usize) -> (&[f64], f64) {
        let p = self.spec.features;
        (&self.inputs[i * p..(i + 1) * p], self.labels[i])
    }

    /// Loss of example `i` and, if `grad` is given, its gradient added in.
    fn example_loss(&self, w: &[f64], i: usize, grad: Option<&mut [f64]>) -> f64 {
        let (x, y) = self.example(i);
        let p = x.len();
        let reg = 0.5 * self.spec.l2 * w.iter().map(|v| v * v).sum::<f64>();
        match self.spec.model {
            ClassifierModel::Logistic => {
                let z = w[..p].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[p];
                let loss = softplus(-y * z) + reg;
                if let Some(g) = grad {
                    let dz = -y * sigmoid(-y * z);
                    for j in 0..p {
                        g[j] += dz * x[j] + self.spec.l2 * w[j];
                    }
                    g[p] += dz + self.spec.l2 * w[p];
                }
                loss
            }
            ClassifierModel::Mlp { hidden } => {
                let (w1, rest) = w.split_at(hidden * p);
                let (b1, rest) = rest.split_at(hidden);
                let (w2, b2) = rest.split_at(hidden);
                let act: Vec<f64> = (0..hidden)
                    .map(|k| {
                        let pre = w1[k * p..(k + 1) * p]
                            .iter()
                            .zip(x)
                            .map(|(a, b)| a * b)
                            .sum::<f64>();
                        libm::tanh(pre + b1[k])
                    })
                    .collect();
                let z = act.iter().zip(w2).map(|(a, b)| a * b).sum::<f64>() + b2[0];
                let loss = softplus(-y * z) + reg;
                if let Some(g) = grad {
                    let dz = -y * sigmoid(-y * z);
                    for k in 0..hidden {
                        let dpre = dz * w2[k] * (1.0 - act[k] * act[k]);
                        for j in 0..p {
                            g[k * p + j] += dpre * x[j];
                        }
                        g[hidden * p + k] += dpre;
                        g[hidden * p + hidden + k] += dz * act[k];
                    }
                    g[hidden * p + 2 * hidden] += dz;
                    for (gj, wj) in g.iter_mut().zip(w) {
                        *gj += self.spec.l2 * wj;
                    }
                }
                loss
            }
        }
    }

    fn mean_gradient<I: ExactSizeIterator<Item = usize>>(
        &self,
        w: &ParamVector,
        idx: I,
    ) -> ParamVector {
        let m = idx.len() as f64;
        let mut g = vec![0.0; self.dim()];
        for i in idx {
            self.example_loss(w.as_slice(), i, Some(&mut g));
        }
        g.iter_mut().for_each(|x| *x /= m);
        ParamVector::from_vec(g)
    }

    /// Approximate `min F` by full-batch gradient descent with backtracking.
    /// Only meaningful for convex models (logistic with `l2 > 0`).
    pub fn estimate_minimum(&self, iterations: usize) -> f64 {
        let mut w = self.start.clone();
        let mut f = self.objective_value(&w);
        let mut step = 1.0;
        for _ in 0..iterations {
            let g = self.mean_gradient(&w, 0..self.n_examples());
            let gg = g.norm_sq();
            if gg < 1e-30 {
                break;
            }
            loop {
                let mut trial = w.clone();
                trial.axpy(-step, &g);
                let ft = self.objective_value(&trial);
                if ft <= f - 0.5 * step * gg {
                    w = trial;
                    f = ft;
                    step *= 1.5;
                    break;
                }
                step *= 0.5;
                if step < 1e-12 {
                    return f;
                }
            }
        }
        f
    }
}

fn rng_normal(rng: &mut dyn RngCore) -> f64 {
    rng.sample(StandardNormal)
}

impl StochasticObjective for GeneratedClassifier {
    fn dim(&self) -> usize {
        let p = self.spec.features;
        match self.spec.model {
            ClassifierModel::Logistic => p + 1,
            ClassifierModel::Mlp { hidden } => hidden * p + 2 * hidden + 1,
        }
    }

    fn sample_payload(&self, rng: &mut dyn RngCore) -> BatchPayload {
        let n = self.n_examples();
        BatchPayload::Indices(
            (0..self.spec.batch_size)
                .map(|_| rng.gen_range(0..n))
                .collect(),
        )
    }

    fn stochastic_gradient(&self, w: &ParamVector, batch: &Batch) -> Result<ParamVector> {
        w.check_dim(self.dim())?;
        let BatchPayload::Indices(idx) = &batch.payload else {
            return Err(config_err!("classifier objective expects an index batch"));
        };
        if idx.is_empty() || idx.iter().any(|&i| i >= self.n_examples()) {
            return Err(config_err!("batch indices out of range"));
        }
        Ok(self.mean_gradient(w, idx.iter().copied()))
    }

    fn true_gradient(&self, w: &ParamVector) -> Result<ParamVector> {
        w.check_dim(self.dim())?;
        Ok(self.mean_gradient(w, 0..self.n_examples()))
    }

    fn objective_value(&self, w: &ParamVector) -> f64 {
        let n = self.n_examples();
        (0..n)
            .map(|i| self.example_loss(w.as_slice(), i, None))
            .sum::<f64>()
            / n as f64
    }

    fn default_start(&self) -> ParamVector {
        self.start.clone()
    }
}

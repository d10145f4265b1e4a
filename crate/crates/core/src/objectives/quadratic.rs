use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use super::{Batch, BatchPayload, StochasticObjective};
use crate::error::{config_err, Result};
use crate::linalg::{Matrix, ParamVector};

/// Symmetric operator, with a fast path for diagonal matrices.
#[derive(Debug, Clone, PartialEq)]
enum SymOp {
    Diag(Vec<f64>),
    Dense(Matrix),
}

impl SymOp {
    fn from_matrix(m: Matrix) -> Self {
        if m.is_diagonal() {
            Self::Diag((0..m.dim()).map(|i| m[(i, i)]).collect())
        } else {
            Self::Dense(m)
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Self::Diag(d) => d.iter().zip(x).map(|(a, b)| a * b).collect(),
            Self::Dense(m) => m.mul_vec(x),
        }
    }

    fn is_zero(&self) -> bool {
        match self {
            Self::Diag(d) => d.iter().all(|&v| v == 0.0),
            Self::Dense(m) => (0..m.dim()).all(|i| (0..m.dim()).all(|j| m[(i, j)] == 0.0)),
        }
    }
}

/// `F(w) = ½ (w − w*)ᵀ A (w − w*)` with gradient noise `ξ ~ N(0, Σ)`.
///
/// The gradient covariance does not depend on `w`, so `σ²_g = tr Σ`
/// everywhere, the PL constant is `λ_min(A)` and the smoothness constant is
/// `λ_max(A)`.
#[derive(Debug, Clone)]
pub struct NoisyQuadratic {
    curvature: SymOp,
    covariance: Matrix,
    noise_factor: SymOp,
    w_star: ParamVector,
    pl: f64,
    smoothness: f64,
}

impl NoisyQuadratic {
    pub fn new(a: Matrix, sigma: Matrix, w_star: ParamVector) -> Result<Self> {
        let d = a.dim();
        if d == 0 {
            return Err(config_err!("quadratic dimension must be positive"));
        }
        if sigma.dim() != d || w_star.dim() != d {
            return Err(config_err!("A, Sigma and w_star must share dimension {d}"));
        }
        if !a.is_symmetric(1e-12) || !sigma.is_symmetric(1e-12) {
            return Err(config_err!("A and Sigma must be symmetric"));
        }
        if !w_star.is_finite() {
            return Err(config_err!("w_star must be finite"));
        }
        let eig = a.symmetric_eigenvalues();
        let (pl, smoothness) = (eig[0], eig[d - 1]);
        if pl <= 0.0 {
            return Err(config_err!("A must be positive definite (λ_min = {pl})"));
        }
        let noise_factor = SymOp::from_matrix(sigma.psd_factor()?);
        Ok(Self {
            curvature: SymOp::from_matrix(a),
            covariance: sigma,
            noise_factor,
            w_star,
            pl,
            smoothness,
        })
    }

    /// Noise-free variant: every batch returns the exact gradient.
    pub fn deterministic(a: Matrix, w_star: ParamVector) -> Result<Self> {
        let d = a.dim();
        Self::new(a, Matrix::zeros(d), w_star)
    }

    /// Scale the noise covariance, `Σ → ν Σ`.
    pub fn with_noise_scale(&self, nu: f64) -> Result<Self> {
        if !(nu.is_finite() && nu > 0.0) {
            return Err(config_err!("noise scale must be positive, got {nu}"));
        }
        let a = match &self.curvature {
            SymOp::Diag(d) => Matrix::diag(d),
            SymOp::Dense(m) => m.clone(),
        };
        Self::new(a, self.covariance.scaled(nu), self.w_star.clone())
    }

    /// α = λ_min(A).
    pub fn pl_constant(&self) -> f64 {
        self.pl
    }

    /// β = λ_max(A).
    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    /// V = tr Σ.
    pub fn noise_variance(&self) -> f64 {
        self.covariance.trace()
    }

    pub fn minimizer(&self) -> &ParamVector {
        &self.w_star
    }

    fn residual_gradient(&self, w: &ParamVector) -> Result<ParamVector> {
        w.check_dim(self.dim())?;
        let e = w.sub(&self.w_star);
        Ok(ParamVector::from_vec(self.curvature.apply(e.as_slice())))
    }
}

impl StochasticObjective for NoisyQuadratic {
    fn dim(&self) -> usize {
        self.w_star.dim()
    }

    fn sample_payload(&self, rng: &mut dyn RngCore) -> BatchPayload {
        let d = self.dim();
        if self.noise_factor.is_zero() {
            return BatchPayload::Noise(ParamVector::zeros(d));
        }
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        BatchPayload::Noise(ParamVector::from_vec(self.noise_factor.apply(&z)))
    }

    fn stochastic_gradient(&self, w: &ParamVector, batch: &Batch) -> Result<ParamVector> {
        let BatchPayload::Noise(noise) = &batch.payload else {
            return Err(config_err!("quadratic objective expects a noise batch"));
        };
        noise.check_dim(self.dim())?;
        let mut g = self.residual_gradient(w)?;
        g.axpy(1.0, noise);
        Ok(g)
    }

    fn true_gradient(&self, w: &ParamVector) -> Result<ParamVector> {
        self.residual_gradient(w)
    }

    fn objective_value(&self, w: &ParamVector) -> f64 {
        let e = w.sub(&self.w_star);
        let ae = self.curvature.apply(e.as_slice());
        0.5 * e
            .as_slice()
            .iter()
            .zip(&ae)
            .map(|(a, b)| a * b)
            .sum::<f64>()
    }

    fn analytic_moments(&self, w: &ParamVector) -> Result<(f64, f64)> {
        Ok((self.residual_gradient(w)?.norm_sq(), self.noise_variance()))
    }

    fn optimum_value(&self) -> Option<f64> {
        Some(0.0)
    }

    fn default_start(&self) -> ParamVector {
        let mut w = self.w_star.clone();
        for x in w.as_mut_slice() {
            *x += 1.0;
        }
        w
    }

    fn is_deterministic(&self) -> bool {
        self.noise_factor.is_zero()
    }
}

/// Configuration form of [`NoisyQuadratic`]. Give `A` either as full rows
/// (`a`) or as a diagonal (`a_diag`); likewise `sigma` / `sigma_diag`
/// (omit both for a noise-free objective).
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct QuadraticSpec {
    #[cfg_attr(feature = "serde", serde(skip_serializing_if = "Option::is_none"))]
    pub a: Option<Vec<Vec<f64>>>,
    #[cfg_attr(feature = "serde", serde(skip_serializing_if = "Option::is_none"))]
    pub a_diag: Option<Vec<f64>>,
    #[cfg_attr(feature = "serde", serde(skip_serializing_if = "Option::is_none"))]
    pub sigma: Option<Vec<Vec<f64>>>,
    #[cfg_attr(feature = "serde", serde(skip_serializing_if = "Option::is_none"))]
    pub sigma_diag: Option<Vec<f64>>,
    /// Noise scale ν applied as `Σ → νΣ`; 1 when absent.
    #[cfg_attr(feature = "serde", serde(skip_serializing_if = "Option::is_none"))]
    pub nu: Option<f64>,
    /// Minimizer; zero when absent.
    #[cfg_attr(feature = "serde", serde(skip_serializing_if = "Option::is_none"))]
    pub w_star: Option<Vec<f64>>,
    /// Starting point; `w_star` + 1 in every coordinate when absent.
    #[cfg_attr(feature = "serde", serde(skip_serializing_if = "Option::is_none"))]
    pub w0: Option<Vec<f64>>,
}

impl QuadraticSpec {
    /// `A = a·I`, `Σ = s·I` in `dim` dimensions, starting at `w* + offset·1`.
    pub fn isotropic(dim: usize, a: f64, s: f64, offset: f64) -> Self {
        Self {
            a_diag: Some(vec![a; dim]),
            sigma_diag: if s == 0.0 { None } else { Some(vec![s; dim]) },
            w0: Some(vec![offset; dim]),
            ..Self::default()
        }
    }

    pub fn build(&self) -> Result<NoisyQuadratic> {
        let a = match (&self.a, &self.a_diag) {
            (Some(rows), None) => Matrix::from_rows(rows)?,
            (None, Some(d)) => Matrix::diag(d),
            _ => {
                return Err(config_err!(
                    "quadratic needs exactly one of `a` or `a_diag`"
                ))
            }
        };
        let dim = a.dim();
        let sigma = match (&self.sigma, &self.sigma_diag) {
            (Some(rows), None) => Matrix::from_rows(rows)?,
            (None, Some(d)) => Matrix::diag(d),
            (None, None) => Matrix::zeros(dim),
            _ => {
                return Err(config_err!(
                    "quadratic accepts at most one of `sigma` or `sigma_diag`"
                ))
            }
        };
        let w_star = match &self.w_star {
            Some(v) => ParamVector::from_vec(v.clone()),
            None => ParamVector::zeros(dim),
        };
        if let Some(w0) = &self.w0 {
            if w0.len() != dim || w0.iter().any(|x| !x.is_finite()) {
                return Err(config_err!("w0 must be {dim} finite values"));
            }
        }
        let q = NoisyQuadratic::new(a, sigma, w_star)?;
        match self.nu {
            Some(nu) => q.with_noise_scale(nu),
            None => Ok(q),
        }
    }

    /// Starting point for a run on the built objective.
    pub fn start(&self, q: &NoisyQuadratic) -> ParamVector {
        match &self.w0 {
            Some(w0) => ParamVector::from_vec(w0.clone()),
            None => q.default_start(),
        }
    }
}

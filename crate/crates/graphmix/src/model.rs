//! Mixture model parameters and likelihood evaluations.
//!
//! Components are parameterized by their precision matrix; densities are
//! evaluated in precision form and covariances are never materialized
//! unless explicitly requested.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// One Gaussian component: mean and symmetric positive-definite precision.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    mean: DVector<f64>,
    precision: DMatrix<f64>,
    log_det_precision: f64,
}

impl GaussianComponent {
    /// Validate symmetry and positive-definiteness, and cache the
    /// log-determinant of the precision.
    pub fn new(mean: DVector<f64>, precision: DMatrix<f64>) -> Result<Self> {
        let p = mean.len();
        if precision.nrows() != p || precision.ncols() != p {
            return Err(Error::DimensionMismatch(format!(
                "mean has length {p} but precision is {}x{}",
                precision.nrows(),
                precision.ncols()
            )));
        }
        if !symmetric_within(&precision, 1e-10) {
            return Err(Error::InvalidInput(
                "precision matrix is not symmetric within 1e-10".into(),
            ));
        }
        let log_det_precision = log_det_spd(&precision).ok_or_else(|| {
            Error::SingularMatrix("precision matrix is not positive-definite".into())
        })?;
        Ok(Self {
            mean,
            precision,
            log_det_precision,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn log_det_precision(&self) -> f64 {
        self.log_det_precision
    }

    /// Covariance (inverse precision), materialized on request only.
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        self.precision
            .clone()
            .cholesky()
            .map(|c| c.inverse())
            .ok_or_else(|| Error::SingularMatrix("precision lost positive-definiteness".into()))
    }

    /// Log-density at `x` without inverting the precision:
    /// -(p/2) log 2π + (1/2) log|Ω| - (1/2)(x-μ)ᵀΩ(x-μ).
    pub fn log_density_slice(&self, x: &[f64]) -> Result<f64> {
        let p = self.dim();
        debug_assert_eq!(x.len(), p);
        let mut diff = vec![0.0; p];
        for j in 0..p {
            diff[j] = x[j] - self.mean[j];
        }
        let q = quad_form(&self.precision, &diff);
        let value = -0.5 * (p as f64) * LN_2PI + 0.5 * self.log_det_precision - 0.5 * q;
        if value.is_nan() {
            return Err(Error::DegenerateModel(
                "log-density evaluated to NaN".into(),
            ));
        }
        Ok(value)
    }
}

/// dᵀ M d for symmetric M, column-major inner loop.
pub(crate) fn quad_form(m: &DMatrix<f64>, d: &[f64]) -> f64 {
    let p = d.len();
    let data = m.as_slice();
    let mut total = 0.0;
    for j in 0..p {
        let col = &data[j * p..(j + 1) * p];
        let mut acc = 0.0;
        for i in 0..p {
            acc += col[i] * d[i];
        }
        total += acc * d[j];
    }
    total
}

pub(crate) fn symmetric_within(m: &DMatrix<f64>, tol: f64) -> bool {
    let p = m.nrows();
    if m.ncols() != p {
        return false;
    }
    for j in 0..p {
        for i in 0..j {
            if (m[(i, j)] - m[(j, i)]).abs() > tol {
                return false;
            }
        }
    }
    true
}

/// log|M| for symmetric positive-definite M via Cholesky; None if not PD.
pub(crate) fn log_det_spd(m: &DMatrix<f64>) -> Option<f64> {
    let chol = m.clone().cholesky()?;
    let l = chol.l();
    let mut acc = 0.0;
    for i in 0..l.nrows() {
        let d = l[(i, i)];
        if d <= 0.0 || !d.is_finite() {
            return None;
        }
        acc += d.ln();
    }
    Some(2.0 * acc)
}

/// Elementwise l1 matrix norm: sum of |m_ij| over all entries, diagonal
/// included.
pub fn elementwise_l1_norm(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v.abs()).sum()
}

/// l1 penalty configuration: level `lambda` and whether each cluster's
/// term is weighted by its mixing proportion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    /// Nonnegative penalty level.
    pub lambda: f64,
    /// When true the penalty is λ Σ_k π_k ‖Ω_k‖₁; when false the cluster
    /// terms are unweighted (λ Σ_k ‖Ω_k‖₁).
    pub proportion_weighted: bool,
}

impl PenaltyConfig {
    pub fn new(lambda: f64, proportion_weighted: bool) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "lambda must be nonnegative, got {lambda}"
            )));
        }
        Ok(Self {
            lambda,
            proportion_weighted,
        })
    }

    /// π_k^γ with γ ∈ {0, 1}.
    pub fn proportion_factor(&self, pi_k: f64) -> f64 {
        if self.proportion_weighted {
            pi_k
        } else {
            1.0
        }
    }
}

/// A K-component Gaussian mixture: the full parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    components: Vec<GaussianComponent>,
    weights: Vec<f64>,
}

impl MixtureModel {
    pub fn new(components: Vec<GaussianComponent>, weights: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidInput("mixture needs K >= 1 components".into()));
        }
        if components.len() != weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} components but {} weights",
                components.len(),
                weights.len()
            )));
        }
        let p = components[0].dim();
        if components.iter().any(|c| c.dim() != p) {
            return Err(Error::DimensionMismatch(
                "components have inconsistent dimensions".into(),
            ));
        }
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidInput("weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidInput(format!(
                "weights sum to {total}, expected 1 within 1e-10"
            )));
        }
        Ok(Self {
            components,
            weights,
        })
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn to_json(&self) -> ModelJson {
        ModelJson {
            k: self.k(),
            p: self.dim(),
            weights: self.weights.clone(),
            components: self
                .components
                .iter()
                .map(|c| ComponentJson {
                    mean: c.mean().iter().copied().collect(),
                    precision: (0..c.dim())
                        .map(|i| (0..c.dim()).map(|j| c.precision()[(i, j)]).collect())
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn from_json(json: &ModelJson) -> Result<Self> {
        let mut components = Vec::with_capacity(json.components.len());
        for c in &json.components {
            let p = c.mean.len();
            if c.precision.len() != p || c.precision.iter().any(|r| r.len() != p) {
                return Err(Error::InvalidInput(
                    "component precision is not square of the mean's length".into(),
                ));
            }
            let mean = DVector::from_vec(c.mean.clone());
            let precision = DMatrix::from_fn(p, p, |i, j| c.precision[i][j]);
            components.push(GaussianComponent::new(mean, precision)?);
        }
        Self::new(components, json.weights.clone())
    }
}

/// Serializable mirror of [`MixtureModel`]; row-major precision matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelJson {
    pub k: usize,
    pub p: usize,
    pub weights: Vec<f64>,
    pub components: Vec<ComponentJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentJson {
    pub mean: Vec<f64>,
    pub precision: Vec<Vec<f64>>,
}

/// Soft assignment matrix τ: n rows that each sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    tau: DMatrix<f64>,
}

impl Responsibilities {
    pub fn new(tau: DMatrix<f64>) -> Result<Self> {
        for i in 0..tau.nrows() {
            let mut sum = 0.0;
            for k in 0..tau.ncols() {
                let v = tau[(i, k)];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidInput(format!(
                        "responsibility ({i},{k}) = {v} outside [0,1]"
                    )));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidInput(format!(
                    "responsibility row {i} sums to {sum}"
                )));
            }
        }
        Ok(Self { tau })
    }

    pub fn n(&self) -> usize {
        self.tau.nrows()
    }

    pub fn k(&self) -> usize {
        self.tau.ncols()
    }

    pub fn tau(&self) -> &DMatrix<f64> {
        &self.tau
    }

    /// Column sums Σ_i τ_ik: the effective cluster sample sizes.
    pub fn cluster_sizes(&self) -> Vec<f64> {
        (0..self.k()).map(|k| self.tau.column(k).sum()).collect()
    }
}

/// log N(x | μ, Ω⁻¹) computed from the precision parameterization.
pub fn log_density(x: &[f64], comp: &GaussianComponent) -> Result<f64> {
    if x.len() != comp.dim() {
        return Err(Error::DimensionMismatch(format!(
            "x has length {} but component dimension is {}",
            x.len(),
            comp.dim()
        )));
    }
    comp.log_density_slice(x)
}

/// Per-observation mixture log-densities log Σ_k π_k f_k(x_i), each inner
/// sum stabilized with log-sum-exp.
pub(crate) fn per_observation_log_mixture(
    data: &DataMatrix,
    model: &MixtureModel,
) -> Result<Vec<f64>> {
    if data.p() != model.dim() {
        return Err(Error::DimensionMismatch(format!(
            "data has p={} but model dimension is {}",
            data.p(),
            model.dim()
        )));
    }
    let n = data.n();
    let k = model.k();
    let log_pi: Vec<f64> = model.weights().iter().map(|w| w.ln()).collect();
    let mut row = vec![0.0; data.p()];
    let mut terms = vec![0.0; k];
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        data.row_into(i, &mut row);
        for (j, t) in terms.iter_mut().enumerate() {
            *t = log_pi[j] + model.components()[j].log_density_slice(&row)?;
        }
        out.push(log_sum_exp(&terms));
    }
    Ok(out)
}

/// Σ_i log Σ_k π_k f_k(x_i), the unpenalized mixture log-likelihood.
pub fn mixture_log_likelihood(data: &DataMatrix, model: &MixtureModel) -> Result<f64> {
    Ok(per_observation_log_mixture(data, model)?.iter().sum())
}

/// Mixture log-likelihood minus the (n/2) λ Σ_k π_k^γ ‖Ω_k‖₁ penalty.
pub fn penalized_log_likelihood(
    data: &DataMatrix,
    model: &MixtureModel,
    penalty: &PenaltyConfig,
) -> Result<f64> {
    let ll = mixture_log_likelihood(data, model)?;
    Ok(ll - penalty_term(data.n(), model, penalty))
}

/// (n/2) λ Σ_k π_k^γ ‖Ω_k‖₁.
pub fn penalty_term(n: usize, model: &MixtureModel, penalty: &PenaltyConfig) -> f64 {
    let sum: f64 = model
        .components()
        .iter()
        .zip(model.weights())
        .map(|(c, &pi)| penalty.proportion_factor(pi) * elementwise_l1_norm(c.precision()))
        .sum();
    0.5 * (n as f64) * penalty.lambda * sum
}

/// Numerically stable log Σ exp(v_i); -inf when all inputs are -inf.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

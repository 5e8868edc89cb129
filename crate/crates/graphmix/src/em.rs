//! Penalized EM for the mixture of l1-penalized Gaussian graphical models.
//!
//! The E-step computes soft assignments in the log domain; the M-step
//! applies the closed-form weight and mean updates and re-estimates each
//! cluster precision with a graphical-lasso solve at the cluster-scaled
//! penalty level. Each cluster's precision update is accepted only when it
//! does not decrease its M-step objective, so for the unweighted penalty
//! the penalized log-likelihood is monotone across iterations up to
//! floating-point rounding.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::glasso::{glasso_fit_warm, penalized_objective, GlassoProblem, GlassoSolution};
use crate::model::{
    elementwise_l1_norm, log_sum_exp, penalized_log_likelihood, GaussianComponent, MixtureModel,
    PenaltyConfig, Responsibilities,
};
use crate::seed::substream;

/// EM configuration. Defaults follow the reference experimental setup:
/// at most 100 iterations, minimum cluster size 4, relative tolerance
/// 1e-4, 25 random restarts.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EmConfig {
    pub k: usize,
    pub penalty: PenaltyConfig,
    pub max_iter: usize,
    pub min_cluster_size: f64,
    pub rel_tol: f64,
    pub restarts: usize,
    pub seed: u64,
    pub glasso_tol: f64,
    pub glasso_max_sweeps: usize,
}

impl EmConfig {
    pub fn new(k: usize, penalty: PenaltyConfig) -> Self {
        Self {
            k,
            penalty,
            max_iter: 100,
            min_cluster_size: 4.0,
            rel_tol: 1e-4,
            restarts: 25,
            seed: 0,
            glasso_tol: crate::glasso::DEFAULT_TOL,
            glasso_max_sweeps: crate::glasso::DEFAULT_MAX_SWEEPS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("K must be >= 1".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be >= 1".into()));
        }
        if !(self.min_cluster_size >= 1.0) {
            return Err(Error::Config("min_cluster_size must be >= 1".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::Config("rel_tol must be positive".into()));
        }
        if self.restarts == 0 {
            return Err(Error::Config("restarts must be >= 1".into()));
        }
        Ok(())
    }
}

/// Why an EM run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    /// Iteration budget exhausted.
    MaxIter,
    /// Some effective cluster size fell below the minimum.
    MinClusterSize,
    /// Relative change in penalized log-likelihood fell below tolerance.
    RelTolConverged,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Termination::MaxIter => "MaxIter",
            Termination::MinClusterSize => "MinClusterSize",
            Termination::RelTolConverged => "RelTolConverged",
        };
        f.write_str(s)
    }
}

/// Outcome of a fit: the winning restart's parameters and diagnostics.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: MixtureModel,
    pub tau: Responsibilities,
    /// Penalized log-likelihood after initialization and after each
    /// iteration.
    pub pll_trace: Vec<f64>,
    pub termination: Termination,
    pub degenerate: bool,
    pub restart_index: usize,
    /// For the proportion-weighted penalty: whether each iteration's
    /// standard weight update improved its part of the EM surrogate.
    /// Recorded for diagnostics, never enforced.
    pub pi_update_improved_q: Vec<bool>,
}

impl FitResult {
    pub fn final_pll(&self) -> f64 {
        *self.pll_trace.last().expect("trace nonempty")
    }

    pub fn labels(&self) -> Vec<usize> {
        harden(&self.tau)
    }

    pub fn to_json(&self, method: &str, seed: u64) -> FitJson {
        FitJson {
            schema_version: 1,
            method: method.to_string(),
            seed,
            model: self.model.to_json(),
            labels: self.labels(),
            pll_trace: self.pll_trace.clone(),
            termination: self.termination,
            degenerate: self.degenerate,
            restart_index: self.restart_index,
        }
    }
}

/// Serializable fit summary shared by the mixture fit and the baselines.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitJson {
    pub schema_version: u32,
    pub method: String,
    pub seed: u64,
    pub model: crate::model::ModelJson,
    pub labels: Vec<usize>,
    pub pll_trace: Vec<f64>,
    pub termination: Termination,
    pub degenerate: bool,
    pub restart_index: usize,
}

/// Posterior cluster probabilities τ_ik ∝ π_k f_k(x_i), normalized per
/// observation in the log domain.
pub fn e_step(data: &DataMatrix, model: &MixtureModel) -> Result<Responsibilities> {
    if data.p() != model.dim() {
        return Err(Error::DimensionMismatch(format!(
            "data p={} vs model dimension {}",
            data.p(),
            model.dim()
        )));
    }
    let n = data.n();
    let k = model.k();
    let log_pi: Vec<f64> = model.weights().iter().map(|w| w.ln()).collect();
    let mut tau = DMatrix::<f64>::zeros(n, k);
    let mut row = vec![0.0; data.p()];
    let mut terms = vec![0.0; k];
    for i in 0..n {
        data.row_into(i, &mut row);
        for (j, t) in terms.iter_mut().enumerate() {
            *t = log_pi[j] + model.components()[j].log_density_slice(&row)?;
        }
        let lse = log_sum_exp(&terms);
        if lse == f64::NEG_INFINITY {
            return Err(Error::DegenerateModel(format!(
                "all component densities underflowed for observation {i}"
            )));
        }
        let mut sum = 0.0;
        for j in 0..k {
            let v = (terms[j] - lse).exp();
            tau[(i, j)] = v;
            sum += v;
        }
        for j in 0..k {
            tau[(i, j)] /= sum;
        }
    }
    Responsibilities::new(tau)
}

/// Standard weight update π_k = (Σ_i τ_ik)/n, used for both penalty forms.
pub fn m_step_pi(tau: &Responsibilities) -> Vec<f64> {
    let n = tau.n() as f64;
    tau.cluster_sizes().into_iter().map(|t| t / n).collect()
}

/// Weighted mean update μ_k = Σ_i τ_ik x_i / Σ_i τ_ik.
pub fn m_step_mu(data: &DataMatrix, tau: &Responsibilities) -> Result<Vec<DVector<f64>>> {
    let n = data.n();
    let p = data.p();
    let mut out = Vec::with_capacity(tau.k());
    for k in 0..tau.k() {
        let total: f64 = tau.tau().column(k).sum();
        if total <= 0.0 {
            return Err(Error::DegenerateModel(format!(
                "cluster {k} has zero effective sample size"
            )));
        }
        let mut mu = DVector::<f64>::zeros(p);
        for i in 0..n {
            let w = tau.tau()[(i, k)];
            if w != 0.0 {
                for j in 0..p {
                    mu[j] += w * data.values()[(i, j)];
                }
            }
        }
        mu /= total;
        out.push(mu);
    }
    Ok(out)
}

/// Responsibility-weighted scatter about `mu`:
/// S_k = Σ_i τ_ik (x_i-μ)(x_i-μ)ᵀ / Σ_i τ_ik.
pub fn weighted_scatter(data: &DataMatrix, weights: &[f64], mu: &DVector<f64>) -> DMatrix<f64> {
    let n = data.n();
    let p = data.p();
    debug_assert_eq!(weights.len(), n);
    let mut s = DMatrix::<f64>::zeros(p, p);
    let mut d = vec![0.0; p];
    let mut total = 0.0;
    for i in 0..n {
        let w = weights[i];
        if w == 0.0 {
            continue;
        }
        total += w;
        for j in 0..p {
            d[j] = data.values()[(i, j)] - mu[j];
        }
        for a in 0..p {
            let wda = w * d[a];
            let col = &mut s.as_mut_slice()[a * p..(a + 1) * p];
            for (b, db) in d.iter().enumerate().skip(a) {
                col[b] += wda * db;
            }
        }
    }
    for a in 0..p {
        for b in a + 1..p {
            s[(a, b)] = s[(b, a)];
        }
    }
    s / total
}

/// Cluster-specific penalty level inside the M-step: λ/π_k for the
/// unweighted penalty (inversely proportional to effective cluster sample
/// size), λ itself for the proportion-weighted penalty.
pub fn lambda_tilde(penalty: &PenaltyConfig, pi_k: f64) -> f64 {
    if penalty.proportion_weighted {
        penalty.lambda
    } else {
        penalty.lambda / pi_k
    }
}

/// Precision updates: one graphical-lasso solve per cluster on the
/// weighted scatter at the cluster-scaled penalty level.
pub fn m_step_omega(
    data: &DataMatrix,
    tau: &Responsibilities,
    mu: &[DVector<f64>],
    pi_new: &[f64],
    penalty: &PenaltyConfig,
    glasso_tol: f64,
    glasso_max_sweeps: usize,
) -> Result<Vec<DMatrix<f64>>> {
    let mut out = Vec::with_capacity(tau.k());
    for k in 0..tau.k() {
        let col: Vec<f64> = tau.tau().column(k).iter().copied().collect();
        let s_k = weighted_scatter(data, &col, &mu[k]);
        let lt = lambda_tilde(penalty, pi_new[k]);
        let problem = GlassoProblem::new(s_k, lt)?
            .with_tol(glasso_tol)?
            .with_max_sweeps(glasso_max_sweeps)?;
        let sol = crate::glasso::glasso_fit(&problem).map_err(|e| annotate_cluster(e, k))?;
        out.push(sol.omega);
    }
    Ok(out)
}

fn annotate_cluster(e: Error, k: usize) -> Error {
    match e {
        Error::SingularMatrix(m) => Error::SingularMatrix(format!("cluster {k}: {m}")),
        Error::InvalidInput(m) => Error::InvalidInput(format!("cluster {k}: {m}")),
        Error::InvalidCovariance(m) => Error::InvalidCovariance(format!("cluster {k}: {m}")),
        other => other,
    }
}

/// Hard assignments: argmax_k τ_ik, ties broken toward the smallest index.
pub fn harden(tau: &Responsibilities) -> Vec<usize> {
    let mut labels = Vec::with_capacity(tau.n());
    for i in 0..tau.n() {
        let mut best = 0;
        let mut best_val = tau.tau()[(i, 0)];
        for k in 1..tau.k() {
            let v = tau.tau()[(i, k)];
            if v > best_val {
                best_val = v;
                best = k;
            }
        }
        labels.push(best);
    }
    labels
}

/// Random hard partition with every cluster at or above the minimum size;
/// rejected and redrawn otherwise.
fn random_partition<R: Rng>(rng: &mut R, n: usize, k: usize, n_min: f64) -> Result<Vec<usize>> {
    for _ in 0..100_000 {
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let mut counts = vec![0usize; k];
        for &l in &labels {
            counts[l] += 1;
        }
        if counts.iter().all(|&c| (c as f64) >= n_min) {
            return Ok(labels);
        }
    }
    Err(Error::Config(format!(
        "could not draw a partition of {n} observations into {k} clusters of size >= {n_min}"
    )))
}

/// Hard-label proportions, means and scatters.
pub(crate) fn hard_moments(
    data: &DataMatrix,
    labels: &[usize],
    k: usize,
) -> (Vec<f64>, Vec<DVector<f64>>, Vec<DMatrix<f64>>) {
    let n = data.n();
    let p = data.p();
    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l] += 1;
    }
    let pi: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
    let mut mus = Vec::with_capacity(k);
    let mut scatters = Vec::with_capacity(k);
    for c in 0..k {
        let weights: Vec<f64> = labels
            .iter()
            .map(|&l| if l == c { 1.0 } else { 0.0 })
            .collect();
        let mut mu = DVector::<f64>::zeros(p);
        for i in 0..n {
            if labels[i] == c {
                for j in 0..p {
                    mu[j] += data.values()[(i, j)];
                }
            }
        }
        mu /= counts[c].max(1) as f64;
        let s = weighted_scatter(data, &weights, &mu);
        mus.push(mu);
        scatters.push(s);
    }
    (pi, mus, scatters)
}

/// One EM run from a fixed initial hard partition.
fn run_restart(
    data: &DataMatrix,
    cfg: &EmConfig,
    init_labels: &[usize],
    restart_index: usize,
) -> Result<FitResult> {
    let n = data.n();
    let k = cfg.k;

    // Initialization: hard moments and per-cluster penalized precision at
    // the cluster-scaled penalty implied by the initial hard counts.
    let (pi0, mu0, s0) = hard_moments(data, init_labels, k);
    let mut warm: Vec<Option<GlassoSolution>> = vec![None; k];
    let mut components = Vec::with_capacity(k);
    for (c, s0_c) in s0.iter().enumerate() {
        let lt = lambda_tilde(&cfg.penalty, pi0[c]);
        let problem = GlassoProblem::new(s0_c.clone(), lt)?
            .with_tol(cfg.glasso_tol)?
            .with_max_sweeps(cfg.glasso_max_sweeps)?;
        let sol = match glasso_fit_warm(&problem, None) {
            Ok(sol) => sol,
            Err(Error::NoConvergence { best, .. }) => *best,
            Err(e) => return Err(annotate_cluster(e, c)),
        };
        components.push(GaussianComponent::new(mu0[c].clone(), sol.omega.clone())?);
        warm[c] = Some(sol);
    }
    let mut model = MixtureModel::new(components, pi0)?;

    let mut trace = vec![penalized_log_likelihood(data, &model, &cfg.penalty)?];
    let mut q_flags: Vec<bool> = Vec::new();
    let mut termination = Termination::MaxIter;
    let mut degenerate = false;
    let mut tau = e_step(data, &model)?;

    for _t in 1..=cfg.max_iter {
        tau = e_step(data, &model)?;
        let sizes: Vec<f64> = tau.cluster_sizes();
        if sizes.iter().any(|&s| s < cfg.min_cluster_size) {
            termination = Termination::MinClusterSize;
            degenerate = true;
            break;
        }

        let pi_new = m_step_pi(&tau);
        if cfg.penalty.proportion_weighted {
            q_flags.push(pi_update_improves_q(
                &sizes,
                model.weights(),
                &pi_new,
                &model,
                n,
                cfg.penalty.lambda,
            ));
        }
        let mu_new = m_step_mu(data, &tau)?;

        let mut new_components = Vec::with_capacity(k);
        for c in 0..k {
            let col: Vec<f64> = tau.tau().column(c).iter().copied().collect();
            let s_c = weighted_scatter(data, &col, &mu_new[c]);
            let lt = lambda_tilde(&cfg.penalty, pi_new[c]);
            let problem = GlassoProblem::new(s_c.clone(), lt)?
                .with_tol(cfg.glasso_tol)?
                .with_max_sweeps(cfg.glasso_max_sweeps)?;
            let candidate = match glasso_fit_warm(&problem, warm[c].as_ref()) {
                Ok(sol) => sol,
                Err(Error::NoConvergence { best, .. }) => *best,
                Err(e) => return Err(annotate_cluster(e, c)),
            };
            // Accept the solve only if it does not decrease the M-step
            // objective relative to the previous precision.
            let prev_omega = model.components()[c].precision();
            let prev_obj = penalized_objective(prev_omega, &s_c, lt);
            let cand_obj = penalized_objective(&candidate.omega, &s_c, lt);
            let omega = if cand_obj >= prev_obj {
                let om = candidate.omega.clone();
                warm[c] = Some(candidate);
                om
            } else {
                prev_omega.clone()
            };
            new_components.push(GaussianComponent::new(mu_new[c].clone(), omega)?);
        }
        model = MixtureModel::new(new_components, pi_new)?;

        let pll = penalized_log_likelihood(data, &model, &cfg.penalty)?;
        let prev = *trace.last().unwrap();
        trace.push(pll);
        let change = (pll - prev).abs();
        let converged = if prev.abs() > cfg.rel_tol {
            (pll / prev - 1.0).abs() <= cfg.rel_tol
        } else {
            change <= cfg.rel_tol * pll.abs().max(1.0)
        };
        if converged {
            termination = Termination::RelTolConverged;
            break;
        }
    }

    // Responsibilities under the final parameters.
    if !degenerate {
        tau = e_step(data, &model)?;
    }

    Ok(FitResult {
        model,
        tau,
        pll_trace: trace,
        termination,
        degenerate,
        restart_index,
        pi_update_improved_q: q_flags,
    })
}

/// Part of the EM surrogate affected by the weight update under the
/// proportion-weighted penalty: Σ_k T_k log π_k - (n/2) λ Σ_k π_k ‖Ω_k‖₁,
/// evaluated at the incoming precisions.
fn pi_update_improves_q(
    sizes: &[f64],
    pi_old: &[f64],
    pi_new: &[f64],
    model: &MixtureModel,
    n: usize,
    lambda: f64,
) -> bool {
    let norms: Vec<f64> = model
        .components()
        .iter()
        .map(|c| elementwise_l1_norm(c.precision()))
        .collect();
    let g = |pi: &[f64]| -> f64 {
        let mut acc = 0.0;
        for (k, &pk) in pi.iter().enumerate() {
            let term = if sizes[k] > 0.0 { sizes[k] * pk.ln() } else { 0.0 };
            acc += term - 0.5 * (n as f64) * lambda * pk * norms[k];
        }
        acc
    };
    g(pi_new) >= g(pi_old)
}

/// Fit by penalized EM with random restarts; returns the non-degenerate
/// restart with the highest penalized log-likelihood.
pub fn fit(data: &DataMatrix, cfg: &EmConfig) -> Result<FitResult> {
    cfg.validate()?;
    if (data.n() as f64) < cfg.k as f64 * cfg.min_cluster_size {
        return Err(Error::Config(format!(
            "n={} is below K*n_min={}",
            data.n(),
            cfg.k as f64 * cfg.min_cluster_size
        )));
    }

    let partitions: Result<Vec<Vec<usize>>> = (0..cfg.restarts)
        .map(|r| {
            let mut rng = substream(cfg.seed, r as u64);
            random_partition(&mut rng, data.n(), cfg.k, cfg.min_cluster_size)
        })
        .collect();
    let partitions = partitions?;

    let runs: Vec<Result<FitResult>> = partitions
        .par_iter()
        .enumerate()
        .map(|(r, labels)| run_restart(data, cfg, labels, r))
        .collect();

    select_winner(runs)
}

/// Single EM run from a caller-supplied hard partition.
pub fn fit_from_partition(
    data: &DataMatrix,
    cfg: &EmConfig,
    init_labels: &[usize],
) -> Result<FitResult> {
    cfg.validate()?;
    if init_labels.len() != data.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} observations",
            init_labels.len(),
            data.n()
        )));
    }
    if init_labels.iter().any(|&l| l >= cfg.k) {
        return Err(Error::InvalidInput("label out of range".into()));
    }
    let result = run_restart(data, cfg, init_labels, 0)?;
    if result.degenerate {
        return Err(Error::FitFailed(format!("restart 0: {}", result.termination)));
    }
    Ok(result)
}

fn select_winner(runs: Vec<Result<FitResult>>) -> Result<FitResult> {
    let mut best: Option<FitResult> = None;
    let mut reports = Vec::with_capacity(runs.len());
    for (r, run) in runs.into_iter().enumerate() {
        match run {
            Ok(result) => {
                reports.push(format!(
                    "restart {r}: {}{}",
                    result.termination,
                    if result.degenerate { " (degenerate)" } else { "" }
                ));
                if !result.degenerate {
                    let better = match &best {
                        None => true,
                        Some(b) => result.final_pll() > b.final_pll(),
                    };
                    if better {
                        best = Some(result);
                    }
                }
            }
            Err(e) => reports.push(format!("restart {r}: error: {e}")),
        }
    }
    best.ok_or_else(|| Error::FitFailed(reports.join("\n")))
}

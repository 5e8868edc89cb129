//! Synthetic two-cluster benchmark problems with overlapping sparse
//! network structures and controlled mean separation.
//!
//! Each cluster's precision matrix has exactly `p` nonzero symmetric
//! off-diagonal pairs; the second support is derived from the first by
//! relocating half of the pairs (⌊p/2⌋ for odd `p`) to fresh positions,
//! so ⌈p/2⌉ pairs are common to both structures. A diagonal shift makes
//! each matrix positive-definite with condition number below `p` before
//! rescaling to an exactly unit diagonal.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::seed::{mix, substream};

/// Generator configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub p: usize,
    /// Per-cluster sample sizes (two clusters).
    pub n_k: [usize; 2],
    /// Euclidean distance between the cluster means.
    pub alpha: f64,
    /// Value placed at the chosen off-diagonal support positions.
    pub edge_value: f64,
    pub seed: u64,
    /// Odd `p` relocates ⌊p/2⌋ pairs when true; rejected when false.
    pub allow_odd_p: bool,
}

impl SyntheticConfig {
    pub fn new(p: usize, n_k: [usize; 2], seed: u64) -> Self {
        Self {
            p,
            n_k,
            alpha: 3.5,
            edge_value: 0.5,
            seed,
            allow_odd_p: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 4 {
            return Err(Error::Config(format!("p must be >= 4, got {}", self.p)));
        }
        if self.n_k.iter().any(|&n| n == 0) {
            return Err(Error::Config("per-cluster sample sizes must be >= 1".into()));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::Config("alpha must be nonnegative".into()));
        }
        if !(self.edge_value.is_finite()) || self.edge_value == 0.0 {
            return Err(Error::Config("edge_value must be finite and nonzero".into()));
        }
        Ok(())
    }
}

/// The pair of standardized true precision matrices.
#[derive(Debug, Clone)]
pub struct PrecisionPair {
    pub omegas: [DMatrix<f64>; 2],
    /// Number of symmetric off-diagonal pairs common to both supports.
    pub shared_pairs: usize,
    /// Condition numbers of B_k + δ_k I before unit-diagonal rescaling.
    pub pre_std_condition: [f64; 2],
}

/// A generated problem: data, generating labels and true structure.
#[derive(Debug, Clone)]
pub struct SyntheticProblem {
    pub config: SyntheticConfig,
    pub data: DataMatrix,
    pub true_labels: Vec<usize>,
    pub true_precisions: [DMatrix<f64>; 2],
    pub shared_edge_count: usize,
    pub pre_std_condition: [f64; 2],
}

impl SyntheticProblem {
    /// Cluster means implied by the configuration: zero and (α/√p)·1.
    pub fn true_means(&self) -> [DVector<f64>; 2] {
        true_means(self.config.p, self.config.alpha)
    }

    /// Draw a fresh dataset from the same true parameters with matched
    /// per-cluster sample sizes (independent test set).
    pub fn resample(&self, seed: u64) -> Result<(DataMatrix, Vec<usize>)> {
        sample_observations(
            &self.true_precisions,
            self.config.alpha,
            self.config.n_k,
            seed,
        )
    }
}

fn true_means(p: usize, alpha: f64) -> [DVector<f64>; 2] {
    let shift = alpha / (p as f64).sqrt();
    [
        DVector::zeros(p),
        DVector::from_element(p, shift),
    ]
}

/// All off-diagonal index pairs (i < j) of a p x p matrix.
fn all_pairs(p: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(p * (p - 1) / 2);
    for j in 0..p {
        for i in 0..j {
            pairs.push((i, j));
        }
    }
    pairs
}

/// Build the two standardized precision matrices.
///
/// The first support is `p` pairs chosen uniformly; the second keeps all
/// but `m` of them (`m` = ⌊p/2⌋) and places `m` fresh pairs disjoint from
/// the entire first support, so the shared count is exactly `p - m`.
pub fn make_precision_pair(
    p: usize,
    edge_value: f64,
    allow_odd_p: bool,
    seed: u64,
) -> Result<PrecisionPair> {
    if p < 4 {
        return Err(Error::Config(format!("p must be >= 4, got {p}")));
    }
    if p % 2 == 1 && !allow_odd_p {
        return Err(Error::Config(format!(
            "p = {p} is odd; the half-shared support construction needs even p \
             (set allow_odd_p to relocate ⌊p/2⌋ pairs instead)"
        )));
    }
    let moved = p / 2;
    let total_pairs = p * (p - 1) / 2;
    if total_pairs < p + moved {
        return Err(Error::Config(format!(
            "p = {p} leaves no room to relocate {moved} pairs disjointly"
        )));
    }

    let mut rng = substream(seed, 0x51_4A);
    let mut pairs = all_pairs(p);
    pairs.shuffle(&mut rng);
    let support1: Vec<(usize, usize)> = pairs[..p].to_vec();
    let complement: Vec<(usize, usize)> = pairs[p..].to_vec();

    // choose which pairs move, then fresh destinations from the complement
    let mut move_idx: Vec<usize> = (0..p).collect();
    move_idx.shuffle(&mut rng);
    let moving: Vec<usize> = move_idx[..moved].to_vec();
    let mut fresh = complement;
    fresh.shuffle(&mut rng);
    let relocated: Vec<(usize, usize)> = fresh[..moved].to_vec();

    let mut support2: Vec<(usize, usize)> = support1
        .iter()
        .enumerate()
        .filter(|(idx, _)| !moving.contains(idx))
        .map(|(_, &pair)| pair)
        .collect();
    support2.extend_from_slice(&relocated);

    let shared = p - moved;
    let omega1 = standardized_from_support(p, &support1, edge_value);
    let omega2 = standardized_from_support(p, &support2, edge_value);
    Ok(PrecisionPair {
        pre_std_condition: [omega1.1, omega2.1],
        omegas: [omega1.0, omega2.0],
        shared_pairs: shared,
    })
}

/// B has `edge_value` at the support pairs and zero elsewhere. The shift
/// δ = (λ_max - p λ_min)/(p - 1) + 1e-6 is the smallest (plus slack) that
/// makes B + δI positive-definite with condition number below p; the
/// returned matrix is (B + δI)/δ with the unit diagonal written exactly.
fn standardized_from_support(
    p: usize,
    support: &[(usize, usize)],
    edge_value: f64,
) -> (DMatrix<f64>, f64) {
    let mut b = DMatrix::<f64>::zeros(p, p);
    for &(i, j) in support {
        b[(i, j)] = edge_value;
        b[(j, i)] = edge_value;
    }
    let eig = b.clone().symmetric_eigen();
    let lambda_min = eig.eigenvalues.min();
    let lambda_max = eig.eigenvalues.max();
    let delta = (lambda_max - (p as f64) * lambda_min) / (p as f64 - 1.0) + 1e-6;
    let condition = (lambda_max + delta) / (lambda_min + delta);

    let scaled = edge_value / delta;
    let mut omega = DMatrix::<f64>::identity(p, p);
    for &(i, j) in support {
        omega[(i, j)] = scaled;
        omega[(j, i)] = scaled;
    }
    (omega, condition)
}

/// Draw n_k[0] observations from N(0, Ω₁⁻¹) and n_k[1] from
/// N((α/√p)·1, Ω₂⁻¹) by triangular solves against the precision Cholesky
/// factors, then shuffle rows with labels retained.
pub fn sample_observations(
    precisions: &[DMatrix<f64>; 2],
    alpha: f64,
    n_k: [usize; 2],
    seed: u64,
) -> Result<(DataMatrix, Vec<usize>)> {
    let p = precisions[0].nrows();
    let means = true_means(p, alpha);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n_k[0] + n_k[1]);
    let mut labels: Vec<usize> = Vec::with_capacity(n_k[0] + n_k[1]);

    let mut rng = substream(seed, 0xDA_7A);
    for cluster in 0..2 {
        let chol = precisions[cluster].clone().cholesky().ok_or_else(|| {
            Error::SingularMatrix(format!("true precision {cluster} is not positive-definite"))
        })?;
        let lt = chol.l().transpose();
        for _ in 0..n_k[cluster] {
            let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
            let w = lt
                .solve_upper_triangular(&z)
                .ok_or_else(|| Error::SingularMatrix("triangular solve failed".into()))?;
            let x = &means[cluster] + w;
            rows.push(x.iter().copied().collect());
            labels.push(cluster);
        }
    }

    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut rng_shuffle = substream(seed, 0x5F_0F);
    order.shuffle(&mut rng_shuffle);
    let data = DataMatrix::from_rows(&order.iter().map(|&i| rows[i].clone()).collect::<Vec<_>>())?;
    let labels = order.iter().map(|&i| labels[i]).collect();
    Ok((data, labels))
}

/// Generate a full problem from a configuration, deterministically in the
/// seed.
pub fn sample_problem(cfg: &SyntheticConfig) -> Result<SyntheticProblem> {
    cfg.validate()?;
    let pair = make_precision_pair(cfg.p, cfg.edge_value, cfg.allow_odd_p, mix(cfg.seed, &[1]))?;
    let (data, labels) =
        sample_observations(&pair.omegas, cfg.alpha, cfg.n_k, mix(cfg.seed, &[2]))?;
    Ok(SyntheticProblem {
        config: *cfg,
        data,
        true_labels: labels,
        true_precisions: pair.omegas,
        shared_edge_count: pair.shared_pairs,
        pre_std_condition: pair.pre_std_condition,
    })
}

fn matrix_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format!("{}", m[(i, j)]));
        }
        out.push('\n');
    }
    out
}

fn matrix_from_csv(text: &str) -> Result<DMatrix<f64>> {
    let dm = DataMatrix::from_csv_reader(text.as_bytes())?;
    Ok(dm.values().clone())
}

/// Write a problem as a directory: data.csv, labels.csv, omega1.csv,
/// omega2.csv, config.json. Byte-identical for a fixed configuration.
pub fn export_dir(problem: &SyntheticProblem, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("data.csv"), problem.data.to_csv_string())?;
    let labels: String = problem
        .true_labels
        .iter()
        .map(|l| format!("{l}\n"))
        .collect();
    std::fs::write(dir.join("labels.csv"), labels)?;
    std::fs::write(
        dir.join("omega1.csv"),
        matrix_csv(&problem.true_precisions[0]),
    )?;
    std::fs::write(
        dir.join("omega2.csv"),
        matrix_csv(&problem.true_precisions[1]),
    )?;
    let config = serde_json::to_string_pretty(&problem.config)?;
    std::fs::write(dir.join("config.json"), config)?;
    Ok(())
}

/// Read a problem directory written by [`export_dir`].
pub fn load_dir(dir: &Path) -> Result<SyntheticProblem> {
    let config: SyntheticConfig =
        serde_json::from_str(&std::fs::read_to_string(dir.join("config.json"))?)?;
    let data = DataMatrix::from_csv_path(&dir.join("data.csv"))?;
    let labels: Vec<usize> = std::fs::read_to_string(dir.join("labels.csv"))?
        .lines()
        .map(|l| l.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::InvalidInput(format!("labels.csv: {e}")))?;
    let omega1 = matrix_from_csv(&std::fs::read_to_string(dir.join("omega1.csv"))?)?;
    let omega2 = matrix_from_csv(&std::fs::read_to_string(dir.join("omega2.csv"))?)?;
    let shared = shared_pairs(&omega1, &omega2);
    Ok(SyntheticProblem {
        config,
        data,
        true_labels: labels,
        true_precisions: [omega1, omega2],
        shared_edge_count: shared,
        pre_std_condition: [f64::NAN, f64::NAN],
    })
}

/// Count of symmetric off-diagonal pairs nonzero in both matrices.
pub fn shared_pairs(a: &DMatrix<f64>, b: &DMatrix<f64>) -> usize {
    let p = a.nrows();
    let mut count = 0;
    for j in 0..p {
        for i in 0..j {
            if a[(i, j)] != 0.0 && b[(i, j)] != 0.0 {
                count += 1;
            }
        }
    }
    count
}

/// Count of nonzero off-diagonal symmetric pairs.
pub fn support_pairs(m: &DMatrix<f64>) -> usize {
    let p = m.nrows();
    let mut count = 0;
    for j in 0..p {
        for i in 0..j {
            if m[(i, j)] != 0.0 {
                count += 1;
            }
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn supports_have_expected_sizes() {
        for p in [8usize, 24, 25] {
            let pair = make_precision_pair(p, 0.5, true, 7).unwrap();
            assert_eq!(support_pairs(&pair.omegas[0]), p);
            assert_eq!(support_pairs(&pair.omegas[1]), p);
            assert_eq!(
                shared_pairs(&pair.omegas[0], &pair.omegas[1]),
                p - p / 2
            );
            assert_eq!(pair.shared_pairs, p - p / 2);
        }
    }

    #[test]
    fn odd_p_rejected_in_strict_mode() {
        assert!(make_precision_pair(25, 0.5, false, 7).is_err());
        assert!(make_precision_pair(24, 0.5, false, 7).is_ok());
    }

    #[test]
    fn diagonal_shift_is_minimal_for_condition_bound() {
        let p = 12;
        let pair = make_precision_pair(p, 0.5, true, 3).unwrap();
        for cond in pair.pre_std_condition {
            assert!(cond < p as f64, "condition {cond} not below {p}");
        }

        // recompute the shift and show δ - 1e-3 violates the bound
        let mut b = DMatrix::<f64>::zeros(p, p);
        let om = &pair.omegas[0];
        // recover B/δ support scale: off-diagonals are edge/δ, so δ = edge/entry
        let mut delta = None;
        for j in 0..p {
            for i in 0..j {
                if om[(i, j)] != 0.0 {
                    delta = Some(0.5 / om[(i, j)]);
                    b[(i, j)] = 0.5;
                    b[(j, i)] = 0.5;
                }
            }
        }
        let delta = delta.unwrap();
        let eig = b.symmetric_eigen();
        let lo = eig.eigenvalues.min();
        let hi = eig.eigenvalues.max();
        let cond_at = |d: f64| (hi + d) / (lo + d);
        assert!(cond_at(delta) < p as f64);
        let smaller = delta - 1e-3;
        assert!(lo + smaller <= 0.0 || cond_at(smaller) >= p as f64);
    }

    #[test]
    fn unit_diagonals_are_exact_and_matrices_positive_definite() {
        for p in [10usize, 25] {
            let pair = make_precision_pair(p, 0.5, true, 11).unwrap();
            for om in &pair.omegas {
                for i in 0..p {
                    assert_eq!(om[(i, i)], 1.0);
                }
                assert!(om.clone().cholesky().is_some());
            }
        }
    }

    #[test]
    fn supports_are_symmetric() {
        let pair = make_precision_pair(16, 0.5, true, 23).unwrap();
        for om in &pair.omegas {
            for j in 0..16 {
                for i in 0..j {
                    assert_eq!(om[(i, j)] != 0.0, om[(j, i)] != 0.0);
                    assert_eq!(om[(i, j)], om[(j, i)]);
                }
            }
        }
    }

    #[test]
    fn mean_separation_is_alpha_exactly() {
        for p in [9usize, 25, 49] {
            let means = true_means(p, 3.5);
            let dist = (&means[1] - &means[0]).norm();
            assert!((dist - 3.5).abs() <= 1e-12, "p={p}: {dist}");
        }
    }

    #[test]
    fn component_mean_values_match_dimension_scaling() {
        // α = 3.5 gives per-coordinate means 0.70 and 0.35 at p = 25, 100.
        let m25 = true_means(25, 3.5);
        assert!((m25[1][0] - 0.70).abs() <= 1e-12);
        let m100 = true_means(100, 3.5);
        assert!((m100[1][0] - 0.35).abs() <= 1e-12);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SyntheticConfig::new(10, [12, 9], 99);
        let a = sample_problem(&cfg).unwrap();
        let b = sample_problem(&cfg).unwrap();
        assert_eq!(a.data, b.data);
        assert_eq!(a.true_labels, b.true_labels);
        assert_eq!(a.true_precisions, b.true_precisions);
    }

    #[test]
    fn label_counts_match_config() {
        let cfg = SyntheticConfig::new(8, [5, 11], 1);
        let problem = sample_problem(&cfg).unwrap();
        let ones = problem.true_labels.iter().filter(|&&l| l == 1).count();
        assert_eq!(ones, 11);
        assert_eq!(problem.true_labels.len(), 16);
        assert_eq!(problem.data.n(), 16);
    }

    // Oracle: Monte Carlo covariance of many draws approaches Ω⁻¹.
    #[test]
    fn sampler_covariance_matches_inverse_precision() {
        let pair = make_precision_pair(6, 0.5, true, 31).unwrap();
        let n = 100_000;
        let (data, labels) =
            sample_observations(&pair.omegas, 0.0, [n, 1], 5).unwrap();
        let p = 6;
        let mut mean = DVector::<f64>::zeros(p);
        let mut count = 0.0;
        for i in 0..data.n() {
            if labels[i] == 0 {
                count += 1.0;
                for j in 0..p {
                    mean[j] += data.values()[(i, j)];
                }
            }
        }
        mean /= count;
        let mut cov = DMatrix::<f64>::zeros(p, p);
        for i in 0..data.n() {
            if labels[i] == 0 {
                let d = DVector::from_fn(p, |j, _| data.values()[(i, j)] - mean[j]);
                cov += &d * d.transpose();
            }
        }
        cov /= count;
        let target = pair.omegas[0].clone().cholesky().unwrap().inverse();
        for j in 0..p {
            for i in 0..p {
                assert!(
                    (cov[(i, j)] - target[(i, j)]).abs() <= 0.02,
                    "entry ({i},{j}): {} vs {}",
                    cov[(i, j)],
                    target[(i, j)]
                );
            }
        }
    }

    #[test]
    fn resample_matches_sizes_but_not_values() {
        let cfg = SyntheticConfig::new(8, [10, 10], 4);
        let problem = sample_problem(&cfg).unwrap();
        let (test, labels) = problem.resample(12345).unwrap();
        assert_eq!(test.n(), 20);
        assert_ne!(test, problem.data);
        assert_eq!(labels.iter().filter(|&&l| l == 0).count(), 10);
    }

    #[test]
    fn export_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SyntheticConfig::new(8, [6, 7], 17);
        let problem = sample_problem(&cfg).unwrap();
        export_dir(&problem, dir.path()).unwrap();
        let back = load_dir(dir.path()).unwrap();
        assert_eq!(back.data, problem.data);
        assert_eq!(back.true_labels, problem.true_labels);
        assert_eq!(back.true_precisions, problem.true_precisions);
        assert_eq!(back.shared_edge_count, problem.shared_edge_count);
        assert_eq!(back.config, problem.config);
    }
}

//! Evaluation of clustering and structure recovery.

use itertools::Itertools;
use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Reporting threshold below which an estimated precision entry counts as
/// zero (matches the solver's convergence scale).
pub const EDGE_THRESHOLD: f64 = 1e-3;

/// Edge-decision confusion counts across all clusters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// TP / (TP + FN); 0 when there are no true edges.
    pub fn tpr(&self) -> f64 {
        let denom = self.tp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            self.tp as f64 / denom as f64
        }
    }

    /// FP / (FP + TN); 0 when there are no true non-edges.
    pub fn fpr(&self) -> f64 {
        let denom = self.fp + self.tn;
        if denom == 0 {
            0.0
        } else {
            self.fp as f64 / denom as f64
        }
    }
}

/// Fraction of observation pairs on which two labelings agree
/// (same/same or different/different).
pub fn rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "label vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidInput(
            "Rand index needs at least two observations".into(),
        ));
    }
    let mut agree = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            let same_a = a[i] == a[j];
            let same_b = b[i] == b[j];
            if same_a == same_b {
                agree += 1;
            }
        }
    }
    Ok(agree as f64 / (n * (n - 1) / 2) as f64)
}

/// Permutation of estimated cluster indices maximizing label agreement
/// with the reference labels; exhaustive over K! (K <= 8).
///
/// `perm[est_cluster] = matched reference cluster`.
pub fn match_clusters(est: &[usize], truth: &[usize], k: usize) -> Result<Vec<usize>> {
    if est.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "label vectors of length {} and {}",
            est.len(),
            truth.len()
        )));
    }
    if k > 8 {
        return Err(Error::Unsupported(format!(
            "cluster matching is exhaustive over K! and limited to K <= 8, got {k}"
        )));
    }
    if est.iter().chain(truth).any(|&l| l >= k) {
        return Err(Error::InvalidInput("label out of range".into()));
    }
    let mut best_perm = (0..k).collect::<Vec<_>>();
    let mut best_agree = 0usize;
    for perm in (0..k).permutations(k) {
        let agree = est
            .iter()
            .zip(truth)
            .filter(|(&e, &t)| perm[e] == t)
            .count();
        if agree > best_agree {
            best_agree = agree;
            best_perm = perm;
        }
    }
    Ok(best_perm)
}

/// Apply a cluster permutation to a label vector.
pub fn permute_labels(labels: &[usize], perm: &[usize]) -> Vec<usize> {
    labels.iter().map(|&l| perm[l]).collect()
}

/// Edge confusion counts over the off-diagonal upper triangles of all K
/// matched cluster pairs. Predicted edge: |est| > threshold; true edge:
/// exact nonzero.
pub fn edge_confusion(
    est: &[DMatrix<f64>],
    truth: &[DMatrix<f64>],
    threshold: f64,
) -> Result<ConfusionCounts> {
    if est.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} estimated matrices vs {} true matrices",
            est.len(),
            truth.len()
        )));
    }
    let mut counts = ConfusionCounts {
        tp: 0,
        tn: 0,
        fp: 0,
        fn_: 0,
    };
    for (e, t) in est.iter().zip(truth) {
        if e.nrows() != t.nrows() || e.ncols() != t.ncols() {
            return Err(Error::DimensionMismatch(
                "precision matrices differ in dimension".into(),
            ));
        }
        let p = e.nrows();
        for j in 0..p {
            for i in 0..j {
                let predicted = e[(i, j)].abs() > threshold;
                let actual = t[(i, j)] != 0.0;
                match (predicted, actual) {
                    (true, true) => counts.tp += 1,
                    (false, false) => counts.tn += 1,
                    (true, false) => counts.fp += 1,
                    (false, true) => counts.fn_ += 1,
                }
            }
        }
    }
    Ok(counts)
}

/// Matthews correlation coefficient; 0 by convention when any factor of
/// the denominator vanishes.
pub fn mcc(c: &ConfusionCounts) -> f64 {
    let tp = c.tp as f64;
    let tn = c.tn as f64;
    let fp = c.fp as f64;
    let fn_ = c.fn_ as f64;
    let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if denom == 0.0 {
        return 0.0;
    }
    (tp * tn - fp * fn_) / denom.sqrt()
}

/// Σ_k ‖Ω̂_k - Ω_k‖₁ over all entries including the diagonal.
pub fn l1_error(est: &[DMatrix<f64>], truth: &[DMatrix<f64>]) -> Result<f64> {
    if est.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} estimated matrices vs {} true matrices",
            est.len(),
            truth.len()
        )));
    }
    let mut total = 0.0;
    for (e, t) in est.iter().zip(truth) {
        if e.nrows() != t.nrows() || e.ncols() != t.ncols() {
            return Err(Error::DimensionMismatch(
                "precision matrices differ in dimension".into(),
            ));
        }
        total += (e - t).iter().map(|v| v.abs()).sum::<f64>();
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;
    use rand::Rng;

    #[test]
    fn rand_index_identical_is_one() {
        let a = vec![0, 0, 1, 1, 2];
        assert_eq!(rand_index(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn rand_index_enumerated_example() {
        // pairs: (0,1) disagree, (0,2) disagree, (0,3) agree,
        //        (1,2) agree, (1,3) disagree, (2,3) disagree -> 2/6
        let a = vec![0, 0, 1, 1];
        let b = vec![0, 1, 0, 1];
        let ri = rand_index(&a, &b).unwrap();
        assert!((ri - 1.0 / 3.0).abs() <= 1e-15);
    }

    #[test]
    fn rand_index_is_relabel_invariant_and_symmetric() {
        let a = vec![0, 1, 1, 2, 0, 2, 1];
        let relabeled: Vec<usize> = a.iter().map(|&l| [2, 0, 1][l]).collect();
        assert_eq!(rand_index(&a, &relabeled).unwrap(), 1.0);
        let b = vec![1, 1, 0, 2, 2, 0, 1];
        assert_eq!(
            rand_index(&a, &b).unwrap(),
            rand_index(&b, &a).unwrap()
        );
    }

    #[test]
    fn rand_index_rejects_mismatched_lengths() {
        assert!(rand_index(&[0, 1], &[0, 1, 0]).is_err());
    }

    #[test]
    fn match_clusters_identity_and_swap() {
        let truth = vec![0, 0, 1, 1];
        assert_eq!(match_clusters(&truth, &truth, 2).unwrap(), vec![0, 1]);
        let swapped = vec![1, 1, 0, 0];
        assert_eq!(match_clusters(&swapped, &truth, 2).unwrap(), vec![1, 0]);
    }

    #[test]
    fn match_clusters_beats_all_other_permutations() {
        let mut rng = rng_from(77);
        for _ in 0..20 {
            let truth: Vec<usize> = (0..30).map(|_| rng.random_range(0..3)).collect();
            let est: Vec<usize> = (0..30).map(|_| rng.random_range(0..3)).collect();
            let perm = match_clusters(&est, &truth, 3).unwrap();
            let agree = |p: &[usize]| {
                est.iter()
                    .zip(&truth)
                    .filter(|(&e, &t)| p[e] == t)
                    .count()
            };
            let best = agree(&perm);
            for other in (0..3).permutations(3) {
                assert!(agree(&other) <= best);
            }
        }
    }

    #[test]
    fn match_clusters_k_cap() {
        let labels = vec![0usize; 4];
        assert!(matches!(
            match_clusters(&labels, &labels, 9),
            Err(Error::Unsupported(_))
        ));
    }

    fn mat(p: usize, entries: &[(usize, usize, f64)]) -> DMatrix<f64> {
        let mut m = DMatrix::<f64>::identity(p, p);
        for &(i, j, v) in entries {
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        m
    }

    #[test]
    fn edge_confusion_exact_support_match() {
        let truth = vec![mat(4, &[(0, 1, 0.5), (2, 3, 0.5)])];
        let counts = edge_confusion(&truth, &truth, EDGE_THRESHOLD).unwrap();
        assert_eq!(counts.fp, 0);
        assert_eq!(counts.fn_, 0);
        assert_eq!(counts.tp, 2);
        assert_eq!(counts.tn, 4);
        assert_eq!(counts.total(), 6);
    }

    #[test]
    fn edge_confusion_all_diagonal_estimate() {
        let truth = vec![
            mat(4, &[(0, 1, 0.4), (1, 2, 0.4)]),
            mat(4, &[(0, 3, 0.4), (1, 3, 0.4)]),
        ];
        let est = vec![DMatrix::identity(4, 4), DMatrix::identity(4, 4)];
        let counts = edge_confusion(&est, &truth, EDGE_THRESHOLD).unwrap();
        assert_eq!(counts.fn_, 4);
        assert_eq!(counts.fp, 0);
        assert_eq!(counts.tp, 0);
        assert_eq!(counts.total(), 2 * 6);
    }

    // Oracle: entry-by-entry enumeration over random supports.
    #[test]
    fn edge_confusion_matches_enumeration() {
        let mut rng = rng_from(5150);
        for _ in 0..50 {
            let p = 5;
            let est = DMatrix::from_fn(p, p, |i, j| {
                if i == j {
                    1.0
                } else {
                    rng.random_range(-0.01..0.01)
                }
            });
            let est = (&est + est.transpose()) / 2.0;
            let truth = mat(p, &[(0, 1, 0.5), (2, 4, 0.5), (1, 3, 0.5)]);
            let counts = edge_confusion(
                std::slice::from_ref(&est),
                std::slice::from_ref(&truth),
                EDGE_THRESHOLD,
            )
            .unwrap();
            let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
            for j in 0..p {
                for i in 0..j {
                    let pred = est[(i, j)].abs() > EDGE_THRESHOLD;
                    let act = truth[(i, j)] != 0.0;
                    match (pred, act) {
                        (true, true) => tp += 1,
                        (false, false) => tn += 1,
                        (true, false) => fp += 1,
                        (false, true) => fn_ += 1,
                    }
                }
            }
            assert_eq!(
                counts,
                ConfusionCounts { tp, tn, fp, fn_ }
            );
        }
    }

    #[test]
    fn mcc_examples() {
        let perfect = ConfusionCounts {
            tp: 3,
            tn: 5,
            fp: 0,
            fn_: 0,
        };
        assert_eq!(mcc(&perfect), 1.0);

        let c = ConfusionCounts {
            tp: 1,
            tn: 2,
            fp: 1,
            fn_: 0,
        };
        assert!((mcc(&c) - 2.0 / 12.0_f64.sqrt()).abs() <= 1e-15);

        let all_negative = ConfusionCounts {
            tp: 0,
            tn: 3,
            fp: 0,
            fn_: 3,
        };
        assert_eq!(mcc(&all_negative), 0.0);
    }

    #[test]
    fn mcc_swap_invariance() {
        let mut rng = rng_from(9);
        for _ in 0..100 {
            let c = ConfusionCounts {
                tp: rng.random_range(0..20),
                tn: rng.random_range(0..20),
                fp: rng.random_range(0..20),
                fn_: rng.random_range(0..20),
            };
            let swapped = ConfusionCounts {
                tp: c.tn,
                tn: c.tp,
                fp: c.fn_,
                fn_: c.fp,
            };
            assert!((mcc(&c) - mcc(&swapped)).abs() <= 1e-15);
        }
    }

    #[test]
    fn l1_error_examples() {
        let a = vec![mat(3, &[(0, 1, 0.5)])];
        assert_eq!(l1_error(&a, &a).unwrap(), 0.0);

        let mut b = a[0].clone();
        b[(0, 2)] += 0.1;
        b[(2, 0)] += 0.1;
        let err = l1_error(&[b], &a.clone()).unwrap();
        assert!((err - 0.2).abs() <= 1e-15);
    }

    // Oracle: elementwise enumeration on random matrices.
    #[test]
    fn l1_error_matches_enumeration() {
        let mut rng = rng_from(123);
        for _ in 0..50 {
            let p = 4;
            let e: DMatrix<f64> = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
            let t: DMatrix<f64> = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
            let mut oracle = 0.0;
            for j in 0..p {
                for i in 0..p {
                    oracle += (e[(i, j)] - t[(i, j)]).abs();
                }
            }
            let got = l1_error(std::slice::from_ref(&e), std::slice::from_ref(&t)).unwrap();
            assert!((got - oracle).abs() <= 1e-12);
        }
    }

    #[test]
    fn tpr_fpr_formulas() {
        let c = ConfusionCounts {
            tp: 3,
            tn: 10,
            fp: 2,
            fn_: 5,
        };
        assert!((c.tpr() - 3.0 / 8.0).abs() <= 1e-15);
        assert!((c.fpr() - 2.0 / 12.0).abs() <= 1e-15);
    }
}

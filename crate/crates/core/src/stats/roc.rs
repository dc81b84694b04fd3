//! ROC analysis and sensitivity at fixed specificity.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tests::midranks;
use super::StatsError;
use crate::rng::substream;

/// Which direction of a score indicates disease.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    HigherIsPositive,
    LowerIsPositive,
}

impl Orientation {
    fn oriented(self, v: f64) -> f64 {
        match self {
            Orientation::HigherIsPositive => v,
            Orientation::LowerIsPositive => -v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocResult {
    pub auc: f64,
    /// Hanley–McNeil standard error.
    pub se: f64,
    pub ci95: [f64; 2],
    pub n_pos: usize,
    pub n_neg: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityResult {
    pub sensitivity: f64,
    pub cutoff: f64,
    pub specificity: f64,
    /// Set when the negative group is too small for a stable quantile.
    pub unstable_quantile: bool,
}

/// Area under the ROC curve from the Mann–Whitney statistic, ties counted
/// one half.
pub fn auroc(pos: &[f64], neg: &[f64], orientation: Orientation) -> Result<RocResult, StatsError> {
    if pos.is_empty() || neg.is_empty() {
        return Err(StatsError::TooFew { what: "auroc group", need: 1, got: 0 });
    }
    let auc = auc_only(pos, neg, orientation);
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    let q1 = auc / (2.0 - auc);
    let q2 = 2.0 * auc * auc / (1.0 + auc);
    let var = (auc * (1.0 - auc) + (np - 1.0) * (q1 - auc * auc) + (nn - 1.0) * (q2 - auc * auc)) / (np * nn);
    let se = var.max(0.0).sqrt();
    Ok(RocResult {
        auc,
        se,
        ci95: [(auc - 1.96 * se).max(0.0), (auc + 1.96 * se).min(1.0)],
        n_pos: pos.len(),
        n_neg: neg.len(),
    })
}

fn auc_only(pos: &[f64], neg: &[f64], orientation: Orientation) -> f64 {
    let all: Vec<f64> = pos.iter().chain(neg).map(|&v| orientation.oriented(v)).collect();
    let ranks = midranks(&all);
    let np = pos.len() as f64;
    let r: f64 = ranks[..pos.len()].iter().sum();
    (r - np * (np + 1.0) / 2.0) / (np * neg.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AurocDifference {
    pub auc_a: f64,
    pub auc_b: f64,
    pub difference: f64,
    /// Two-sided percentile-bootstrap p-value.
    pub p: f64,
    pub method: String,
}

/// Paired bootstrap comparison of two scores measured on the same eyes:
/// positives and negatives are resampled separately and both AUCs are
/// recomputed on every resample.
#[allow(clippy::too_many_arguments)]
pub fn auroc_difference_bootstrap(
    pos_a: &[f64],
    neg_a: &[f64],
    orientation_a: Orientation,
    pos_b: &[f64],
    neg_b: &[f64],
    orientation_b: Orientation,
    n_boot: usize,
    seed: u64,
) -> Result<AurocDifference, StatsError> {
    if pos_a.len() != pos_b.len() || neg_a.len() != neg_b.len() {
        return Err(StatsError::Shape("paired scores must cover the same eyes".into()));
    }
    let auc_a = auroc(pos_a, neg_a, orientation_a)?.auc;
    let auc_b = auroc(pos_b, neg_b, orientation_b)?.auc;
    let deltas: Vec<f64> = (0..n_boot)
        .into_par_iter()
        .map(|t| {
            let mut rng = substream(seed, t as u64);
            let ip: Vec<usize> = (0..pos_a.len()).map(|_| rng.random_range(0..pos_a.len())).collect();
            let ineg: Vec<usize> = (0..neg_a.len()).map(|_| rng.random_range(0..neg_a.len())).collect();
            let pick = |v: &[f64], idx: &[usize]| idx.iter().map(|&i| v[i]).collect::<Vec<f64>>();
            auc_only(&pick(pos_a, &ip), &pick(neg_a, &ineg), orientation_a)
                - auc_only(&pick(pos_b, &ip), &pick(neg_b, &ineg), orientation_b)
        })
        .collect();
    Ok(AurocDifference {
        auc_a,
        auc_b,
        difference: auc_a - auc_b,
        p: percentile_p(&deltas),
        method: "paired percentile bootstrap".into(),
    })
}

/// Two-sided percentile-bootstrap p-value for a null of zero.
pub(crate) fn percentile_p(deltas: &[f64]) -> f64 {
    if deltas.is_empty() {
        return 1.0;
    }
    let n = deltas.len() as f64;
    let le = deltas.iter().filter(|&&d| d <= 0.0).count() as f64 / n;
    let ge = deltas.iter().filter(|&&d| d >= 0.0).count() as f64 / n;
    (2.0 * le.min(ge)).min(1.0)
}

/// Linearly interpolated sample quantile (type 7).
pub fn quantile_type7(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Sensitivity at a fixed specificity with the cutoff taken as an
/// interpolated quantile of the negative group.
pub fn sensitivity_at_specificity(
    pos: &[f64],
    neg: &[f64],
    specificity: f64,
    orientation: Orientation,
) -> Result<SensitivityResult, StatsError> {
    if pos.is_empty() || neg.is_empty() {
        return Err(StatsError::TooFew { what: "sensitivity group", need: 1, got: 0 });
    }
    if !(0.0..=1.0).contains(&specificity) {
        return Err(StatsError::Shape(format!("specificity {specificity} outside [0, 1]")));
    }
    let (cutoff, sens) = match orientation {
        Orientation::LowerIsPositive => {
            let c = quantile_type7(neg, 1.0 - specificity);
            (c, pos.iter().filter(|&&v| v < c).count())
        }
        Orientation::HigherIsPositive => {
            let c = quantile_type7(neg, specificity);
            (c, pos.iter().filter(|&&v| v > c).count())
        }
    };
    Ok(SensitivityResult {
        sensitivity: sens as f64 / pos.len() as f64,
        cutoff,
        specificity,
        unstable_quantile: neg.len() < 10,
    })
}

#[cfg(test)]
mod unit {
    use super::*;
    use proptest::prelude::*;
    use rand_distr::{Distribution, Normal};

    fn pairwise_oracle(pos: &[f64], neg: &[f64]) -> f64 {
        let mut s = 0.0;
        for p in pos {
            for n in neg {
                s += if p > n { 1.0 } else if p == n { 0.5 } else { 0.0 };
            }
        }
        s / (pos.len() * neg.len()) as f64
    }

    #[test]
    fn auroc_examples() {
        let r = auroc(&[5.0, 6.0, 7.0], &[1.0, 2.0], Orientation::HigherIsPositive).unwrap();
        assert_eq!(r.auc, 1.0);
        assert_eq!(auroc(&[1.0; 4], &[1.0; 6], Orientation::HigherIsPositive).unwrap().auc, 0.5);
        assert_eq!(auroc(&[5.0, 6.0], &[1.0, 2.0], Orientation::LowerIsPositive).unwrap().auc, 0.0);
        let mut rng = substream(5, 0);
        let z = Normal::new(0.0, 1.0).unwrap();
        let pos: Vec<f64> = (0..30).map(|_| (z.sample(&mut rng) * 4.0f64).round() / 4.0 + 0.5).collect();
        let neg: Vec<f64> = (0..30).map(|_| (z.sample(&mut rng) * 4.0f64).round() / 4.0).collect();
        let r = auroc(&pos, &neg, Orientation::HigherIsPositive).unwrap();
        assert!((r.auc - pairwise_oracle(&pos, &neg)).abs() < 1e-12);
        assert!(r.ci95[0] >= 0.0 && r.ci95[1] <= 1.0 && r.se > 0.0);
    }

    #[test]
    fn hanley_mcneil_reference() {
        // AUC exactly 0.8 with 50/50 eyes; hand value
        // sqrt((0.16 + 49·(2/3 − 0.64) + 49·(32/45 − 0.64)) / 2500).
        let pos = vec![1.0; 50];
        let neg: Vec<f64> = (0..50).map(|i| if i < 40 { 0.0 } else { 2.0 }).collect();
        let r = auroc(&pos, &neg, Orientation::HigherIsPositive).unwrap();
        assert_eq!(r.auc, 0.8);
        let want = ((0.16 + 49.0 * (2.0 / 3.0 - 0.64) + 49.0 * (32.0 / 45.0 - 0.64)) / 2500.0f64).sqrt();
        assert!((r.se - want).abs() < 1e-12);
        assert!((r.se - 0.0445).abs() < 1e-4);
    }

    #[test]
    fn sensitivity_examples() {
        let neg: Vec<f64> = (0..100).map(f64::from).collect();
        let r = sensitivity_at_specificity(&[-5.0, -3.0], &neg, 0.99, Orientation::LowerIsPositive).unwrap();
        assert_eq!(r.sensitivity, 1.0);
        assert!((r.cutoff - 0.99).abs() < 1e-12);
        assert!(!r.unstable_quantile);
        assert!(sensitivity_at_specificity(&[1.0], &[1.0; 5], 0.99, Orientation::LowerIsPositive).unwrap().unstable_quantile);

        // Positives from the negative distribution.
        let mut rng = substream(9, 0);
        let z = Normal::new(0.0, 1.0).unwrap();
        let neg: Vec<f64> = (0..10_000).map(|_| z.sample(&mut rng)).collect();
        let pos: Vec<f64> = (0..10_000).map(|_| z.sample(&mut rng)).collect();
        let r = sensitivity_at_specificity(&pos, &neg, 0.99, Orientation::LowerIsPositive).unwrap();
        assert!((r.sensitivity - 0.01).abs() < 0.02, "{}", r.sensitivity);
    }

    #[test]
    fn paired_bootstrap_is_deterministic() {
        let pos = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let neg = [0.5, 1.5, 2.5, 0.0, -1.0, 0.2];
        let a = auroc_difference_bootstrap(&pos, &neg, Orientation::HigherIsPositive, &pos, &neg, Orientation::HigherIsPositive, 200, 3).unwrap();
        assert_eq!(a.difference, 0.0);
        assert_eq!(a.p, 1.0);
        let neg_b = [3.0, 4.0, 2.0, 5.0, 1.0, 6.0];
        let b1 = auroc_difference_bootstrap(&pos, &neg, Orientation::HigherIsPositive, &pos, &neg_b, Orientation::HigherIsPositive, 200, 3).unwrap();
        let b2 = auroc_difference_bootstrap(&pos, &neg, Orientation::HigherIsPositive, &pos, &neg_b, Orientation::HigherIsPositive, 200, 3).unwrap();
        assert_eq!(b1, b2);
        assert!(b1.difference > 0.0);
    }

    proptest! {
        #[test]
        fn auroc_matches_pairwise_oracle(
            pos in proptest::collection::vec(-20i32..20, 1..200),
            neg in proptest::collection::vec(-20i32..20, 1..200),
            scale in 0.1f64..3.0,
        ) {
            let pos: Vec<f64> = pos.into_iter().map(|v| v as f64 * scale).collect();
            let neg: Vec<f64> = neg.into_iter().map(|v| v as f64 * scale).collect();
            let r = auroc(&pos, &neg, Orientation::HigherIsPositive).unwrap();
            prop_assert!((r.auc - pairwise_oracle(&pos, &neg)).abs() < 1e-12);
            let l = auroc(&pos, &neg, Orientation::LowerIsPositive).unwrap();
            prop_assert!((l.auc - (1.0 - r.auc)).abs() < 1e-12);
        }

        #[test]
        fn lowering_positives_never_lowers_sensitivity(
            pos in proptest::collection::vec(-5.0f64..5.0, 1..40),
            neg in proptest::collection::vec(-5.0f64..5.0, 10..60),
            drop in 0.0f64..3.0,
        ) {
            let a = sensitivity_at_specificity(&pos, &neg, 0.99, Orientation::LowerIsPositive).unwrap();
            let lower: Vec<f64> = pos.iter().map(|v| v - drop).collect();
            let b = sensitivity_at_specificity(&lower, &neg, 0.99, Orientation::LowerIsPositive).unwrap();
            prop_assert!(b.sensitivity >= a.sensitivity);
        }
    }
}

//! Bootstrap cross-validation and bootstrap comparison of correlations.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::roc::percentile_p;
use super::tests::pearson_r;
use super::StatsError;
use crate::rng::substream;

/// A diagnostic procedure trained on normal eyes. Eyes are addressed by
/// index: `0..n_normal` are the normals, the rest are the diseased eyes.
pub trait BootstrapEstimator: Sync {
    type Model: Send;

    /// Fits on the given normal-eye indices (repeats allowed).
    fn fit(&self, normals: &[usize]) -> Result<Self::Model, StatsError>;

    /// Parameter vector of one eye under a fitted model.
    fn score(&self, model: &Self::Model, eye: usize) -> Result<Vec<f64>, StatsError>;

    /// Whether a scored eye is called abnormal.
    fn abnormal(&self, model: &Self::Model, scores: &[f64]) -> bool;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bootstrap632Result {
    /// Cross-validated parameter vector per eye.
    pub estimates: Vec<Vec<f64>>,
    /// Parameters under the model fitted on all normals.
    pub apparent: Vec<Vec<f64>>,
    /// Mean parameters over the trials in which each eye was out of bag.
    pub out_of_bag: Vec<Vec<f64>>,
    pub apparent_error: f64,
    pub oob_error: f64,
    pub no_information_error: f64,
    pub relative_overfitting: f64,
    /// Weight `0.632 / (1 − 0.368 R)` given to the out-of-bag side.
    pub weight: f64,
    pub error_632plus: f64,
    pub n_boot: usize,
}

/// 0.632+ bootstrap: every trial refits on a resample of the normals and
/// scores the normals left out plus all diseased eyes. Per-eye estimates
/// blend apparent and out-of-bag values with the 0.632+ weight derived from
/// the misclassification rates.
pub fn bootstrap_632plus<E: BootstrapEstimator>(
    estimator: &E,
    n_normal: usize,
    n_diseased: usize,
    n_boot: usize,
    seed: u64,
) -> Result<Bootstrap632Result, StatsError> {
    if n_normal < 20 {
        return Err(StatsError::TooFew { what: "bootstrap normals", need: 20, got: n_normal });
    }
    let n = n_normal + n_diseased;
    let is_diseased = |e: usize| e >= n_normal;
    let loss = |abnormal: bool, e: usize| (abnormal != is_diseased(e)) as u8 as f64;

    let all: Vec<usize> = (0..n_normal).collect();
    let full = estimator.fit(&all)?;
    let mut apparent = Vec::with_capacity(n);
    let mut app_calls = Vec::with_capacity(n);
    for e in 0..n {
        let s = estimator.score(&full, e)?;
        app_calls.push(estimator.abnormal(&full, &s));
        apparent.push(s);
    }
    let apparent_error = (0..n).map(|e| loss(app_calls[e], e)).sum::<f64>() / n as f64;

    // Each trial yields (eye, scores, abnormal) for its out-of-bag eyes.
    type TrialOut = Vec<(usize, Vec<f64>, bool)>;
    let trials: Vec<Result<TrialOut, StatsError>> = (0..n_boot)
        .into_par_iter()
        .map(|t| {
            let mut rng = substream(seed, t as u64);
            let sample: Vec<usize> = (0..n_normal).map(|_| rng.random_range(0..n_normal)).collect();
            let mut in_bag = vec![false; n_normal];
            sample.iter().for_each(|&i| in_bag[i] = true);
            let model = estimator.fit(&sample)?;
            (0..n)
                .filter(|&e| is_diseased(e) || !in_bag[e])
                .map(|e| {
                    let s = estimator.score(&model, e)?;
                    let call = estimator.abnormal(&model, &s);
                    Ok((e, s, call))
                })
                .collect()
        })
        .collect();

    let dim = apparent.first().map(Vec::len).unwrap_or(0);
    let mut sums = vec![vec![0.0; dim]; n];
    let mut counts = vec![0usize; n];
    let mut err_sums = vec![0.0; n];
    for trial in trials {
        for (e, s, call) in trial? {
            if s.len() != dim {
                return Err(StatsError::Shape("estimator returned a varying parameter count".into()));
            }
            sums[e].iter_mut().zip(&s).for_each(|(a, v)| *a += v);
            counts[e] += 1;
            err_sums[e] += loss(call, e);
        }
    }
    let never = counts.iter().filter(|&&c| c == 0).count();
    if never > 0 {
        return Err(StatsError::InsufficientTrials(never));
    }
    let out_of_bag: Vec<Vec<f64>> =
        sums.iter().zip(&counts).map(|(s, &c)| s.iter().map(|v| v / c as f64).collect()).collect();
    let oob_error = err_sums.iter().zip(&counts).map(|(e, &c)| e / c as f64).sum::<f64>() / n as f64;

    let p1 = n_diseased as f64 / n as f64;
    let q1 = app_calls.iter().filter(|&&c| c).count() as f64 / n as f64;
    let gamma = p1 * (1.0 - q1) + (1.0 - p1) * q1;
    let oob_clipped = oob_error.min(gamma);
    let relative_overfitting = if oob_clipped > apparent_error && gamma > apparent_error {
        ((oob_clipped - apparent_error) / (gamma - apparent_error)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let weight = 0.632 / (1.0 - 0.368 * relative_overfitting);
    let error_632plus = (1.0 - weight) * apparent_error + weight * oob_clipped;
    let estimates = apparent
        .iter()
        .zip(&out_of_bag)
        .map(|(a, o)| a.iter().zip(o).map(|(a, o)| (1.0 - weight) * a + weight * o).collect())
        .collect();
    Ok(Bootstrap632Result {
        estimates,
        apparent,
        out_of_bag,
        apparent_error,
        oob_error,
        no_information_error: gamma,
        relative_overfitting,
        weight,
        error_632plus,
        n_boot,
    })
}

/// Two-sided percentile-bootstrap p-value for `r(x, y1) − r(x, y2)`,
/// resampling subjects with replacement.
pub fn compare_correlations_bootstrap(
    x: &[f64],
    y1: &[f64],
    y2: &[f64],
    n_boot: usize,
    seed: u64,
) -> Result<f64, StatsError> {
    let n = x.len();
    if y1.len() != n || y2.len() != n {
        return Err(StatsError::Shape("correlation samples are not aligned".into()));
    }
    if n < 10 {
        return Err(StatsError::TooFew { what: "correlation bootstrap", need: 10, got: n });
    }
    let deltas: Vec<f64> = (0..n_boot)
        .into_par_iter()
        .filter_map(|t| {
            let mut rng = substream(seed, t as u64);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<f64>>();
            let xs = pick(x);
            Some(pearson_r(&xs, &pick(y1))? - pearson_r(&xs, &pick(y2))?)
        })
        .collect();
    Ok(percentile_p(&deltas))
}

#[cfg(test)]
mod unit {
    use super::*;
    use rand_distr::{Distribution, Normal};

    /// Thresholds each eye's fixed score against the mean of the training
    /// normals' scores.
    struct MeanCutoff {
        scores: Vec<f64>,
        ignore_training: bool,
    }

    impl BootstrapEstimator for MeanCutoff {
        type Model = f64;
        fn fit(&self, normals: &[usize]) -> Result<f64, StatsError> {
            if self.ignore_training {
                return Ok(0.0);
            }
            Ok(normals.iter().map(|&i| self.scores[i]).sum::<f64>() / normals.len() as f64)
        }
        fn score(&self, model: &f64, eye: usize) -> Result<Vec<f64>, StatsError> {
            Ok(vec![self.scores[eye] - model])
        }
        fn abnormal(&self, _model: &f64, s: &[f64]) -> bool {
            s[0] < -1.5
        }
    }

    fn scores() -> Vec<f64> {
        let mut rng = substream(1, 0);
        let z = Normal::new(0.0, 1.0).unwrap();
        (0..60).map(|i| z.sample(&mut rng) - if i >= 30 { 2.0 } else { 0.0 }).collect()
    }

    #[test]
    fn training_independent_estimator_is_unchanged() {
        let est = MeanCutoff { scores: scores(), ignore_training: true };
        let r = bootstrap_632plus(&est, 30, 30, 100, 5).unwrap();
        assert_eq!(r.apparent_error, r.oob_error);
        for (a, b) in r.estimates.iter().zip(&r.apparent) {
            assert!((a[0] - b[0]).abs() < 1e-12);
        }
        assert!((r.error_632plus - r.apparent_error).abs() < 1e-12);
        assert!((r.weight - 0.632).abs() < 1e-15);
    }

    #[test]
    fn deterministic_and_weighted() {
        let est = MeanCutoff { scores: scores(), ignore_training: false };
        let a = bootstrap_632plus(&est, 30, 30, 200, 5).unwrap();
        let b = bootstrap_632plus(&est, 30, 30, 200, 5).unwrap();
        assert_eq!(a, b);
        assert!((0.632..=1.0).contains(&a.weight));
        for e in 0..60 {
            let want = (1.0 - a.weight) * a.apparent[e][0] + a.weight * a.out_of_bag[e][0];
            assert!((a.estimates[e][0] - want).abs() < 1e-12);
        }
        assert!(matches!(bootstrap_632plus(&est, 30, 30, 1, 5), Err(StatsError::InsufficientTrials(_))));
        assert!(bootstrap_632plus(&est, 10, 30, 100, 5).is_err());
    }

    #[test]
    fn correlation_comparison() {
        let mut rng = substream(2, 0);
        let z = Normal::new(0.0, 1.0).unwrap();
        let x: Vec<f64> = (0..50).map(|_| z.sample(&mut rng)).collect();
        let noise: Vec<f64> = (0..50).map(|_| z.sample(&mut rng)).collect();
        assert_eq!(compare_correlations_bootstrap(&x, &noise, &noise, 500, 1).unwrap(), 1.0);
        let p = compare_correlations_bootstrap(&x, &x, &noise, 2000, 1).unwrap();
        assert!(p < 0.05);
        assert_eq!(p, compare_correlations_bootstrap(&x, &x, &noise, 2000, 1).unwrap());
    }
}

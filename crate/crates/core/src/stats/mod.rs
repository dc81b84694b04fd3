//! Statistical evaluation: rank tests, ROC analysis, agreement tests,
//! bootstrap procedures, mixture clustering and regression.

mod bootstrap;
mod gmm;
mod regression;
mod roc;

pub use bootstrap::{
    bootstrap_632plus, compare_correlations_bootstrap, Bootstrap632Result, BootstrapEstimator,
};
pub use gmm::{adjusted_rand_index, gmm_fit, ClusterModel, GmmOptions};
pub use regression::{piecewise_estimated_knot, piecewise_two_segment, pooled_sd, LineFit, PiecewiseFit, DEFAULT_KNOT_DB};
pub use roc::{
    auroc, auroc_difference_bootstrap, quantile_type7, sensitivity_at_specificity, AurocDifference, Orientation,
    RocResult, SensitivityResult,
};
pub use tests::{mcnemar, midranks, pearson, shapiro_wilk, wilcoxon_rank_sum, Correlation, WilcoxonResult, EXACT_WILCOXON_MAX_N};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("{what} needs at least {need} observations, got {got}")]
    TooFew { what: &'static str, need: usize, got: usize },
    #[error("zero variance: correlation undefined")]
    ZeroVariance,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("{0} eyes were never out of bag; increase the number of trials")]
    InsufficientTrials(usize),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("estimator failed: {0}")]
    Estimator(String),
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

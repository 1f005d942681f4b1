//! Metrics, ROC/AUC, binomial intervals, grouped cross-validation, the CRP
//! rule baseline and CRP band analysis.

mod band;
mod crp;
mod cv;
mod folds;
mod metrics;
pub mod report;

pub use band::{band_analysis, baselines, BandReport};
pub use report::{band_text, cv_csv, cv_table, metrics_table};
pub use crp::{fit_crp_rule, fit_crp_rule_values, CrpRule};
pub use cv::{
    cross_validate, cross_validate_with, fold_seed, CrpRuleLearner, CvOutcome, CvReport, FoldLearner, MetricSummary,
};
pub use folds::{cv_partitions, eval_eligible, grouped_stratified_kfold, FoldAssignment, Partition};
pub use metrics::{agresti_coull, classification_metrics, evaluate, roc_auc, MetricsReport, RocCurve, RocPoint};

use crate::learners::LearnerError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{probas} scores but {labels} labels")]
    LengthMismatch { probas: usize, labels: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("both classes are required")]
    SingleClassData,
    #[error("non-finite score")]
    NonFinite,
    #[error("invalid counts: {successes} successes of {n}")]
    InvalidCounts { successes: usize, n: usize },
    #[error("confidence must be in (0,1), got {0}")]
    InvalidConfidence(f64),
    #[error("k must be ≥ 2, got {0}")]
    InvalidK(usize),
    #[error("{groups} patient groups cannot fill {k} folds")]
    TooFewGroups { groups: usize, k: usize },
    #[error("noise case `{0}` is not in the dataset")]
    NoiseNotSubset(String),
    #[error("case `{0}` has no fold")]
    UnassignedCase(String),
    #[error("CRP must be a finite value ≥ 0, got {0}")]
    NegativeCrp(f64),
    #[error("invalid band [{lo}, {hi}]")]
    InvalidBand { lo: f64, hi: f64 },
    #[error(transparent)]
    Learner(#[from] LearnerError),
}

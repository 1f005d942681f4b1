//! Shapley-value explanations in probability units with an interventional
//! (background-sample) value function.

mod importance;
mod shapley;

pub use importance::{
    band_importance_csv, beeswarm_csv, explain_rows, global_importance, importance_by_crp_band, tables_by_crp_band, ImportanceTable,
};
pub use shapley::{sample_background, shapley, shapley_exact, shapley_sampled, ShapleyMode, ShapleyResult, EXACT_FEATURE_LIMIT};

use thiserror::Error;

use crate::learners::{LearnerError, Model};

#[derive(Debug, Error, PartialEq)]
pub enum ExplainError {
    #[error("{features} features exceed the exact-mode limit of {limit}")]
    TooManyFeatures { features: usize, limit: usize },
    #[error("background set is empty")]
    EmptyBackground,
    #[error("expected {expected} features, got {got}")]
    FeatureLengthMismatch { expected: usize, got: usize },
    #[error("n_permutations must be ≥ 1")]
    NoPermutations,
    #[error("band edges must be sorted and finite")]
    UnsortedEdges,
    #[error("{0}")]
    Model(String),
}

impl From<LearnerError> for ExplainError {
    fn from(e: LearnerError) -> Self {
        ExplainError::Model(e.to_string())
    }
}

/// Anything mapping a feature vector to a probability.
pub trait Predictor: Sync {
    fn n_features(&self) -> usize;
    /// Called only with vectors of length [`Predictor::n_features`].
    fn predict(&self, x: &[f64]) -> f64;
}

impl Predictor for Model {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict(&self, x: &[f64]) -> f64 {
        self.predict_proba(x).expect("feature length checked by caller")
    }
}

/// A closure as a predictor.
pub struct FnPredictor<F> {
    pub n_features: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> Predictor for FnPredictor<F> {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

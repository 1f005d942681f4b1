//! Model persistence, the HTTP service and the command-line pipeline.

mod bundle;
pub mod cli;
pub mod service;

pub use bundle::{
    load_model, model_id, save_model, BundleError, ExplainSettings, FeatureSpec, ModelBundle, TrainingInfo,
    DEFAULT_BACKGROUND_ROWS, DEFAULT_EXPLAIN_PERMUTATIONS, FORMAT_VERSION,
};
pub use service::{router, ServiceState};

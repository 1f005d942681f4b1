//! Cohort construction: ingestion and filtering, patient-grouped splitting,
//! and synthetic generation.

mod generator;
pub(crate) mod grouping;
mod ingest;
mod split;

pub use generator::{
    derive_panel, fit_marginal, generate_cohort, generate_range, ClassConfig, Family, GeneratorConfig, Marginal,
    MarginalSpec, PRIMARY, Z_Q3,
};
pub use ingest::{
    filter_dataset, filter_pipeline, ingest_csv, ingest_reader, load_csv, read_records, save_csv, write_csv,
    FilterReport, FilterStage, REASON_AMBIGUOUS, REASON_DUPLICATE, REASON_INCOMPLETE, REASON_INVALID,
};
pub use split::{grouped_stratified_split, SplitSpec};

#[derive(Debug, thiserror::Error)]
pub enum CohortError {
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("malformed row {row}: {message}")]
    MalformedRow { row: usize, message: String },
    #[error("infeasible split: {0}")]
    InfeasibleSplit(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("log-normal median must be > 0, got {0}")]
    NonPositiveMedian(f64),
    #[error("resampling exhausted for {0}")]
    ResampleExhausted(String),
}

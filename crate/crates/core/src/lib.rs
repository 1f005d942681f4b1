//! Bacterial vs viral infection classification from routine blood panels.

pub mod app;
pub mod cohort;
pub mod domain;
pub mod eval;
pub mod explain;
pub mod learners;
pub mod matrix;
pub mod semisup;
pub mod stats;
pub mod trees;
pub mod tune;

#[cfg(test)]
mod testutil;

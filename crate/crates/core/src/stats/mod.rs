//! Hypothesis tests and effect sizes for comparing learners and populations.

mod anderson;
pub mod compare;
mod descriptive;
mod effect;
mod mwu;
mod special;
mod ttest;
mod wilcoxon;

pub use anderson::{ad_statistic, anderson_darling_k};
pub use descriptive::{iqr, mean, median, quantile, sample_sd};
pub use effect::{cohen_d, EffectLabel, EffectSize};
pub use mwu::{mann_whitney_u, mann_whitney_u_with, MwuMode};
pub use special::{normal_cdf, regularized_incomplete_beta, student_t_cdf};
pub use ttest::paired_t;
pub use wilcoxon::{wilcoxon_signed_rank, wilcoxon_signed_rank_with, WilcoxonMode};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Alternative {
    TwoSided,
    /// First sample (or difference) tends to be larger.
    Greater,
    Less,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MethodNotes {
    pub exact: bool,
    pub ties: bool,
    pub zeros_dropped: usize,
    pub all_zero: bool,
    pub zero_variance: bool,
    pub permutation: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub alternative: Alternative,
    pub notes: MethodNotes,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("sample too small: {0}")]
    SampleTooSmall(String),
    #[error("empty sample")]
    EmptySample,
    #[error("pooled variance is zero")]
    ZeroPooledVariance,
    #[error("non-finite value in sample")]
    NonFinite,
}

pub(crate) fn check_finite(xs: &[f64]) -> Result<(), StatsError> {
    if xs.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite)
    }
}

/// 1-based ranks with ties sharing their mean rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j + 2) as f64 / 2.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Σ(t³ − t) over tie groups.
pub(crate) fn tie_sum(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut s = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        s += t * t * t - t;
        i = j + 1;
    }
    s
}

/// Adjusted p-values `min(1, p·m)`.
pub fn bonferroni(p_values: &[f64], m: usize) -> Vec<f64> {
    let m = m.max(p_values.len()) as f64;
    p_values.iter().map(|p| (p * m).min(1.0)).collect()
}

/// Two-sided p from one-sided tails.
pub(crate) fn two_sided(p_greater: f64, p_less: f64) -> f64 {
    (2.0 * p_greater.min(p_less)).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midrank_ties() {
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        assert_eq!(tie_sum(&[1.0, 1.0, 2.0, 2.0, 2.0]), 6.0 + 24.0);
    }

    #[test]
    fn bonferroni_examples() {
        let adj = bonferroni(&[0.01, 0.5], 7);
        assert!((adj[0] - 0.07).abs() < 1e-15);
        assert_eq!(adj[1], 1.0);
        assert!(bonferroni(&[], 7).is_empty());
    }
}

use std::fmt::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{shapley, ExplainError, Predictor, ShapleyMode, ShapleyResult};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceTable {
    /// CRP range `[lo, hi)` (the last band also includes `hi`); `None` for the whole dataset.
    pub band: Option<(f64, f64)>,
    pub n_cases: usize,
    /// `(feature, mean |φ|)`, descending; ties keep feature order.
    pub entries: Vec<(String, f64)>,
}

impl ImportanceTable {
    pub fn is_empty(&self) -> bool {
        self.n_cases == 0
    }

    pub fn rank_of(&self, feature: &str) -> Option<usize> {
        self.entries.iter().position(|(f, _)| f == feature)
    }

    /// Mean |φ| per feature over precomputed explanations.
    pub fn from_results(names: &[String], results: &[ShapleyResult], band: Option<(f64, f64)>) -> Self {
        if results.is_empty() {
            return ImportanceTable {
                band,
                n_cases: 0,
                entries: Vec::new(),
            };
        }
        let n = results.len() as f64;
        let mut entries: Vec<(String, f64)> = names
            .iter()
            .enumerate()
            .map(|(j, name)| (name.clone(), results.iter().map(|r| r.phi[j].abs()).sum::<f64>() / n))
            .collect();
        entries.sort_by(|a, b| b.1.total_cmp(&a.1));
        ImportanceTable {
            band,
            n_cases: results.len(),
            entries,
        }
    }
}

fn row_mode(mode: ShapleyMode, row: usize) -> ShapleyMode {
    match mode {
        ShapleyMode::Exact => mode,
        ShapleyMode::Sampled { n_permutations, seed } => ShapleyMode::Sampled {
            n_permutations,
            seed: seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(row as u64),
        },
    }
}

/// One explanation per row of `x`. Sampled mode derives a distinct seed per row.
pub fn explain_rows(
    model: &dyn Predictor,
    x: &Matrix,
    background: &Matrix,
    mode: ShapleyMode,
) -> Result<Vec<ShapleyResult>, ExplainError> {
    (0..x.n_rows())
        .into_par_iter()
        .map(|i| shapley(model, x.row(i), background, row_mode(mode, i)))
        .collect()
}

fn check_names(names: &[String], x: &Matrix) -> Result<(), ExplainError> {
    if names.len() != x.n_cols() {
        return Err(ExplainError::FeatureLengthMismatch {
            expected: x.n_cols(),
            got: names.len(),
        });
    }
    Ok(())
}

/// Mean |φ| per feature over all rows of `x`.
pub fn global_importance(
    model: &dyn Predictor,
    x: &Matrix,
    names: &[String],
    background: &Matrix,
    mode: ShapleyMode,
) -> Result<ImportanceTable, ExplainError> {
    check_names(names, x)?;
    let results = explain_rows(model, x, background, mode)?;
    Ok(ImportanceTable::from_results(names, &results, None))
}

/// Importance within each CRP band `[edges[i], edges[i+1])`; the last band is closed.
pub fn importance_by_crp_band(
    model: &dyn Predictor,
    x: &Matrix,
    names: &[String],
    crp: &[f64],
    background: &Matrix,
    edges: &[f64],
    mode: ShapleyMode,
) -> Result<Vec<ImportanceTable>, ExplainError> {
    check_names(names, x)?;
    if edges.len() < 2 || edges.iter().any(|e| e.is_nan()) || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ExplainError::UnsortedEdges);
    }
    if crp.len() != x.n_rows() {
        return Err(ExplainError::FeatureLengthMismatch {
            expected: x.n_rows(),
            got: crp.len(),
        });
    }
    let results = explain_rows(model, x, background, mode)?;
    Ok(tables_by_crp_band(names, &results, crp, edges))
}

/// Splits precomputed explanations into CRP bands. Edges must already be validated.
pub fn tables_by_crp_band(names: &[String], results: &[ShapleyResult], crp: &[f64], edges: &[f64]) -> Vec<ImportanceTable> {
    let last = edges.len() - 2;
    edges
        .windows(2)
        .enumerate()
        .map(|(b, w)| {
            let (lo, hi) = (w[0], w[1]);
            let members: Vec<ShapleyResult> = crp
                .iter()
                .zip(results)
                .filter(|(&c, _)| c >= lo && (c < hi || (b == last && c == hi)))
                .map(|(_, r)| r.clone())
                .collect();
            ImportanceTable::from_results(names, &members, Some((lo, hi)))
        })
        .collect()
}

/// Long-format rows `(case_id, feature, feature_value, phi)`.
pub fn beeswarm_csv(case_ids: &[String], x: &Matrix, names: &[String], results: &[ShapleyResult]) -> String {
    let mut s = String::from("case_id,feature,feature_value,phi\n");
    for (i, r) in results.iter().enumerate() {
        for (j, name) in names.iter().enumerate() {
            let _ = writeln!(s, "{},{},{},{:.9}", case_ids[i], name, x.get(i, j), r.phi[j]);
        }
    }
    s
}

pub fn band_importance_csv(tables: &[ImportanceTable]) -> String {
    let mut s = String::from("band_lo,band_hi,n_cases,feature,mean_abs_phi\n");
    for t in tables {
        let (lo, hi) = t.band.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
        if t.is_empty() {
            let _ = writeln!(s, "{lo},{hi},0,,");
        }
        for (f, v) in &t.entries {
            let _ = writeln!(s, "{lo},{hi},{},{f},{v:.9}", t.n_cases);
        }
    }
    s
}

use serde::{Deserialize, Serialize};

use super::LearnerError;
use crate::matrix::Matrix;

/// Per-column standardization fitted on training data only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardScaler {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    /// Columns that were constant in training; their sd is set to 1.
    pub constant_columns: Vec<usize>,
}

impl StandardScaler {
    pub fn fit(x: &Matrix) -> Result<Self, LearnerError> {
        let n = x.n_rows();
        if n == 0 {
            return Err(LearnerError::EmptyData);
        }
        let mut mean = vec![0.0; x.n_cols()];
        for row in x.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; x.n_cols()];
        for row in x.rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let mut constant_columns = Vec::new();
        let sd = var
            .iter()
            .enumerate()
            .map(|(j, s)| {
                let sd = (s / n as f64).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    constant_columns.push(j);
                    1.0
                }
            })
            .collect();
        if !constant_columns.is_empty() {
            log::warn!("constant feature columns {constant_columns:?}; scaled with sd = 1");
        }
        Ok(StandardScaler {
            mean,
            sd,
            constant_columns,
        })
    }

    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    pub fn transform_row(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.sd))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn transform(&self, x: &Matrix) -> Matrix {
        x.map(|j, v| (v - self.mean[j]) / self.sd[j])
    }
}

/// Fits on `train` and applies the same parameters to both matrices.
pub fn scaler_fit_transform(train: &Matrix, apply_to: &Matrix) -> Result<(Matrix, Matrix, StandardScaler), LearnerError> {
    let s = StandardScaler::fit(train)?;
    Ok((s.transform(train), s.transform(apply_to), s))
}

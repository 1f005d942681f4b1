use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::LearnerError;
use crate::matrix::Matrix;

/// Brute-force k-nearest-neighbours on (pre-scaled) training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub train: Matrix,
    pub labels: Vec<bool>,
}

impl KnnModel {
    pub fn fit(train: &Matrix, labels: &[bool], k: usize) -> Result<Self, LearnerError> {
        if train.n_rows() == 0 {
            return Err(LearnerError::EmptyData);
        }
        if labels.len() != train.n_rows() {
            return Err(LearnerError::InvalidParams("label count differs from row count".into()));
        }
        if k == 0 || k > train.n_rows() {
            return Err(LearnerError::KTooLarge { k, n: train.n_rows() });
        }
        Ok(KnnModel {
            k,
            train: train.clone(),
            labels: labels.to_vec(),
        })
    }

    /// Share of Bacteria among the k nearest rows; equal distances keep training order.
    pub fn predict_proba(&self, query: &[f64]) -> f64 {
        let mut d: Vec<(f64, usize)> = self
            .train
            .rows()
            .enumerate()
            .map(|(i, row)| {
                let s: f64 = row.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
                (s, i)
            })
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < d.len() {
            d.select_nth_unstable_by(self.k - 1, cmp);
        }
        let hits = d[..self.k].iter().filter(|(_, i)| self.labels[*i]).count();
        hits as f64 / self.k as f64
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Vec<f64> {
        (0..x.n_rows()).into_par_iter().map(|i| self.predict_proba(x.row(i))).collect()
    }
}

/// One-shot form: fit on `train` and classify `query`.
pub fn knn_classify(train: &Matrix, labels: &[bool], k: usize, query: &[f64]) -> Result<f64, LearnerError> {
    Ok(KnnModel::fit(train, labels, k)?.predict_proba(query))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> (Matrix, Vec<bool>) {
        (
            Matrix::from_rows(&[[0.0], [1.0], [2.0], [10.0], [11.0]]),
            vec![true, true, false, false, true],
        )
    }

    #[test]
    fn examples() {
        let (x, y) = data();
        assert_eq!(knn_classify(&x, &y, 1, &[0.0]).unwrap(), 1.0);
        assert_eq!(knn_classify(&x, &y, 5, &[4.0]).unwrap(), 3.0 / 5.0);
        assert_eq!(knn_classify(&x, &y, 3, &[0.9]).unwrap(), 2.0 / 3.0);
        assert!(matches!(knn_classify(&x, &y, 6, &[0.0]), Err(LearnerError::KTooLarge { k: 6, n: 5 })));
    }

    #[test]
    fn ties_keep_case_order() {
        let x = Matrix::from_rows(&[[1.0], [-1.0]]);
        assert_eq!(knn_classify(&x, &[true, false], 1, &[0.0]).unwrap(), 1.0);
        assert_eq!(knn_classify(&x, &[false, true], 1, &[0.0]).unwrap(), 0.0);
    }
}

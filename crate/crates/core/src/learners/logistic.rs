use serde::{Deserialize, Serialize};

use super::LearnerError;
use crate::matrix::Matrix;
use crate::trees::logistic;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrParams {
    pub l2: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for LrParams {
    fn default() -> Self {
        LrParams {
            l2: 1e-2,
            max_iters: 500,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl LogisticModel {
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        logistic(self.intercept + dot(&self.coefficients, x))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mean log-loss plus `l2/2·‖w‖²`; the intercept is not penalized.
fn objective(x: &Matrix, y: &[bool], w: &[f64], b: f64, l2: f64) -> f64 {
    let n = x.n_rows() as f64;
    let mut loss = 0.0;
    for (row, &yi) in x.rows().zip(y) {
        let m = b + dot(w, row);
        loss += m.max(0.0) + (-m.abs()).exp().ln_1p() - if yi { m } else { 0.0 };
    }
    loss / n + 0.5 * l2 * dot(w, w)
}

fn gradient(x: &Matrix, y: &[bool], w: &[f64], b: f64, l2: f64) -> (Vec<f64>, f64) {
    let n = x.n_rows() as f64;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for (row, &yi) in x.rows().zip(y) {
        let r = logistic(b + dot(w, row)) - if yi { 1.0 } else { 0.0 };
        gb += r;
        for (g, v) in gw.iter_mut().zip(row) {
            *g += r * v;
        }
    }
    for (g, wj) in gw.iter_mut().zip(w) {
        *g = *g / n + l2 * wj;
    }
    (gw, gb / n)
}

/// Gradient descent with Armijo backtracking. Returns the model and the
/// objective after every accepted step (first entry is the starting point).
pub fn lr_fit_traced(x: &Matrix, y: &[bool], params: &LrParams) -> Result<(LogisticModel, Vec<f64>), LearnerError> {
    if x.n_rows() == 0 {
        return Err(LearnerError::EmptyData);
    }
    if y.len() != x.n_rows() {
        return Err(LearnerError::InvalidParams("label count differs from row count".into()));
    }
    if !(params.l2 >= 0.0) || !(params.tol > 0.0) {
        return Err(LearnerError::InvalidParams("l2 must be ≥ 0 and tol > 0".into()));
    }
    let mut w = vec![0.0; x.n_cols()];
    let mut b = 0.0;
    let mut f = objective(x, y, &w, b, params.l2);
    let mut trace = vec![f];
    let mut step = 1.0;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iters {
        let (gw, gb) = gradient(x, y, &w, b, params.l2);
        let inf_norm = gw.iter().fold(gb.abs(), |m, g| m.max(g.abs()));
        if inf_norm < params.tol {
            converged = true;
            break;
        }
        let sq = dot(&gw, &gw) + gb * gb;
        step *= 2.0;
        let mut accepted = false;
        for _ in 0..60 {
            let w_new: Vec<f64> = w.iter().zip(&gw).map(|(wj, g)| wj - step * g).collect();
            let b_new = b - step * gb;
            let f_new = objective(x, y, &w_new, b_new, params.l2);
            if f_new <= f - 0.5 * step * sq {
                w = w_new;
                b = b_new;
                f = f_new;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        if !accepted {
            break;
        }
        trace.push(f);
    }
    Ok((
        LogisticModel {
            coefficients: w,
            intercept: b,
            converged,
            iterations,
        },
        trace,
    ))
}

pub fn lr_fit(x: &Matrix, y: &[bool], params: &LrParams) -> Result<LogisticModel, LearnerError> {
    lr_fit_traced(x, y, params).map(|(m, _)| m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_features_balanced() {
        let x = Matrix::zeros(4, 2);
        let m = lr_fit(&x, &[true, false, true, false], &LrParams::default()).unwrap();
        assert_eq!(m.coefficients, vec![0.0, 0.0]);
        assert_eq!(m.intercept, 0.0);
        assert!(m.converged);
        assert_eq!(m.predict_proba(&[0.0, 0.0]), 0.5);
    }

    #[test]
    fn separable_is_finite_and_increasing() {
        let x = Matrix::from_rows(&[[-1.0], [-0.5], [0.5], [1.0]]);
        let (m, trace) = lr_fit_traced(&x, &[false, false, true, true], &LrParams::default()).unwrap();
        assert!(m.coefficients[0].is_finite() && m.coefficients[0] > 0.0);
        let probs: Vec<f64> = (0..=20).map(|i| m.predict_proba(&[-2.0 + 0.2 * i as f64])).collect();
        assert!(probs.windows(2).all(|p| p[0] < p[1]));
        assert!(trace.windows(2).all(|t| t[1] <= t[0]));
    }

    #[test]
    fn duplicated_column_symmetry() {
        let rows: Vec<[f64; 3]> = (0..30).map(|i| {
            let v = (i as f64 * 0.37).sin();
            [v, v, (i % 4) as f64 - 1.5]
        }).collect();
        let y: Vec<bool> = rows.iter().map(|r| r[0] + 0.2 * r[2] > 0.1).collect();
        let m = lr_fit(&Matrix::from_rows(&rows), &y, &LrParams::default()).unwrap();
        assert!((m.coefficients[0] - m.coefficients[1]).abs() < 1e-6);
    }
}

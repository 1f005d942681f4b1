use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ExplainError, Predictor};
use crate::matrix::Matrix;

pub const EXACT_FEATURE_LIMIT: usize = 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyResult {
    pub phi: Vec<f64>,
    /// Mean model output over the background set.
    pub base_value: f64,
    pub prediction: f64,
}

impl ShapleyResult {
    /// `prediction − base_value − Σφ`.
    pub fn efficiency_residual(&self) -> f64 {
        self.prediction - self.base_value - self.phi.iter().sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ShapleyMode {
    Exact,
    Sampled { n_permutations: usize, seed: u64 },
}

fn check(model: &dyn Predictor, x: &[f64], background: &Matrix) -> Result<(), ExplainError> {
    let nf = model.n_features();
    if x.len() != nf {
        return Err(ExplainError::FeatureLengthMismatch {
            expected: nf,
            got: x.len(),
        });
    }
    if background.n_rows() == 0 {
        return Err(ExplainError::EmptyBackground);
    }
    if background.n_cols() != nf {
        return Err(ExplainError::FeatureLengthMismatch {
            expected: nf,
            got: background.n_cols(),
        });
    }
    Ok(())
}

fn mean_output(model: &dyn Predictor, background: &Matrix) -> f64 {
    background.rows().map(|r| model.predict(r)).sum::<f64>() / background.n_rows() as f64
}

pub fn shapley(model: &dyn Predictor, x: &[f64], background: &Matrix, mode: ShapleyMode) -> Result<ShapleyResult, ExplainError> {
    match mode {
        ShapleyMode::Exact => shapley_exact(model, x, background),
        ShapleyMode::Sampled { n_permutations, seed } => shapley_sampled(model, x, background, n_permutations, seed),
    }
}

/// Brute force over all 2^F coalitions.
pub fn shapley_exact(model: &dyn Predictor, x: &[f64], background: &Matrix) -> Result<ShapleyResult, ExplainError> {
    check(model, x, background)?;
    let nf = x.len();
    if nf > EXACT_FEATURE_LIMIT {
        return Err(ExplainError::TooManyFeatures {
            features: nf,
            limit: EXACT_FEATURE_LIMIT,
        });
    }
    let full = (1usize << nf) - 1;
    let prediction = model.predict(x);
    let value: Vec<f64> = (0..=full)
        .into_par_iter()
        .map(|mask| {
            let mut z = vec![0.0; nf];
            let mut sum = 0.0;
            for row in background.rows() {
                for j in 0..nf {
                    z[j] = if mask >> j & 1 == 1 { x[j] } else { row[j] };
                }
                sum += model.predict(&z);
            }
            sum / background.n_rows() as f64
        })
        .collect();
    // weight[s] = s!(F−s−1)!/F!
    let mut weight = vec![0.0; nf];
    for (s, w) in weight.iter_mut().enumerate() {
        *w = 1.0 / (nf as f64 * binomial(nf - 1, s));
    }
    let phi = (0..nf)
        .map(|j| {
            let bit = 1usize << j;
            (0..=full)
                .filter(|m| m & bit == 0)
                .map(|m| weight[m.count_ones() as usize] * (value[m | bit] - value[m]))
                .sum()
        })
        .collect();
    Ok(ShapleyResult {
        phi,
        base_value: value[0],
        prediction,
    })
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Permutation sampling. Permutations come in antithetic pairs (an order and its
/// reverse) sharing a background row; rows are visited cyclically from a random offset.
pub fn shapley_sampled(
    model: &dyn Predictor,
    x: &[f64],
    background: &Matrix,
    n_permutations: usize,
    seed: u64,
) -> Result<ShapleyResult, ExplainError> {
    check(model, x, background)?;
    if n_permutations == 0 {
        return Err(ExplainError::NoPermutations);
    }
    let nf = x.len();
    let nb = background.n_rows();
    let offset = ChaCha8Rng::seed_from_u64(seed).random_range(0..nb);
    let n_pairs = n_permutations.div_ceil(2);
    let contributions: Vec<Vec<f64>> = (0..n_pairs)
        .into_par_iter()
        .map(|pair| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(pair as u64 + 1);
            let mut order: Vec<usize> = (0..nf).collect();
            order.shuffle(&mut rng);
            let row = background.row((offset + pair) % nb);
            let mut phi = vec![0.0; nf];
            let walks = if 2 * pair + 1 < n_permutations { 2 } else { 1 };
            for w in 0..walks {
                if w == 1 {
                    order.reverse();
                }
                let mut z = row.to_vec();
                let mut prev = model.predict(&z);
                for &j in &order {
                    z[j] = x[j];
                    let next = model.predict(&z);
                    phi[j] += next - prev;
                    prev = next;
                }
            }
            phi
        })
        .collect();
    let mut phi = vec![0.0; nf];
    for c in &contributions {
        for (p, v) in phi.iter_mut().zip(c) {
            *p += v;
        }
    }
    for p in &mut phi {
        *p /= n_permutations as f64;
    }
    Ok(ShapleyResult {
        phi,
        base_value: mean_output(model, background),
        prediction: model.predict(x),
    })
}

/// `n` distinct rows drawn without replacement (all rows if `n` ≥ row count), in draw order.
pub fn sample_background(x: &Matrix, n: usize, seed: u64) -> Matrix {
    if n >= x.n_rows() {
        return x.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    x.select_rows(&sample(&mut rng, x.n_rows(), n).into_vec())
}

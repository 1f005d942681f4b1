use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grow::{grow, Criterion, Presorted, Stat};
use super::{check_len, Tree, TreeError};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub l2_reg: f64,
    pub min_split_gain: f64,
    pub min_child_hessian: f64,
    pub subsample_rows: f64,
    pub subsample_features: f64,
    pub seed: u64,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            n_rounds: 200,
            max_depth: 6,
            learning_rate: 0.1,
            l2_reg: 1.0,
            min_split_gain: 0.0,
            min_child_hessian: 1.0,
            subsample_rows: 1.0,
            subsample_features: 1.0,
            seed: 0,
        }
    }
}

impl BoostParams {
    pub fn validate(&self) -> Result<(), TreeError> {
        let bad = |m: &str| Err(TreeError::InvalidParams(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must be in (0,1]");
        }
        if !(self.l2_reg >= 0.0) || !(self.min_split_gain >= 0.0) || !(self.min_child_hessian >= 0.0) {
            return bad("l2_reg, min_split_gain and min_child_hessian must be ≥ 0");
        }
        for f in [self.subsample_rows, self.subsample_features] {
            if !(f > 0.0 && f <= 1.0) {
                return bad("subsample fractions must be in (0,1]");
            }
        }
        Ok(())
    }
}

/// Numerically stable logistic function.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Log-loss of one row from its margin.
fn log_loss_from_margin(margin: f64, y: bool) -> f64 {
    let softplus = margin.max(0.0) + (-margin.abs()).exp().ln_1p();
    softplus - if y { margin } else { 0.0 }
}

struct SecondOrder {
    lambda: f64,
    gamma: f64,
    min_hessian: f64,
}

impl SecondOrder {
    fn score(&self, s: &Stat) -> f64 {
        s[0] * s[0] / (s[1] + self.lambda)
    }
}

impl Criterion for SecondOrder {
    fn splittable(&self, t: &Stat) -> bool {
        t[2] >= 2.0 && t[1] >= 2.0 * self.min_hessian
    }

    fn gain(&self, l: &Stat, r: &Stat, p: &Stat) -> Option<f64> {
        if l[1] < self.min_hessian || r[1] < self.min_hessian {
            return None;
        }
        Some(0.5 * (self.score(l) + self.score(r) - self.score(p)) - self.gamma)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedEnsemble {
    pub base_score: f64,
    /// Leaf values are raw weights `w = -G/(H+λ)`; the learning rate is applied at prediction.
    pub trees: Vec<Tree<f64>>,
    pub params: BoostParams,
    pub n_features: usize,
}

impl BoostedEnsemble {
    pub fn from_parts(base_score: f64, trees: Vec<Tree<f64>>, params: BoostParams, n_features: usize) -> Self {
        BoostedEnsemble {
            base_score,
            trees,
            params,
            n_features,
        }
    }

    /// Margin using only the first `rounds` trees.
    pub fn margin_after(&self, x: &[f64], rounds: usize) -> Result<f64, TreeError> {
        check_len(self.n_features, x)?;
        let eta = self.params.learning_rate;
        let mut m = self.base_score;
        for t in self.trees.iter().take(rounds) {
            m += eta * *t.leaf(x);
        }
        Ok(m)
    }

    pub fn margin(&self, x: &[f64]) -> Result<f64, TreeError> {
        self.margin_after(x, self.trees.len())
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<f64, TreeError> {
        self.margin(x).map(logistic)
    }
}

/// Second-order boosting on the logistic loss.
pub fn fit_gbt(x: &Matrix, y: &[bool], params: &BoostParams) -> Result<BoostedEnsemble, TreeError> {
    fit_gbt_traced(x, y, params).map(|(e, _)| e)
}

/// As [`fit_gbt`], also returning the mean training log-loss after each round.
pub fn fit_gbt_traced(x: &Matrix, y: &[bool], params: &BoostParams) -> Result<(BoostedEnsemble, Vec<f64>), TreeError> {
    params.validate()?;
    let n = x.n_rows();
    if n == 0 {
        return Err(TreeError::EmptyData);
    }
    if y.len() != n {
        return Err(TreeError::LabelLengthMismatch { rows: n, labels: y.len() });
    }
    let positives = y.iter().filter(|&&b| b).count();
    if positives == 0 || positives == n {
        return Err(TreeError::SingleClassData);
    }
    let data = Presorted::new(x)?;
    let nf = x.n_cols();
    let p = positives as f64 / n as f64;
    let base_score = (p / (1.0 - p)).ln();
    let crit = SecondOrder {
        lambda: params.l2_reg,
        gamma: params.min_split_gain,
        min_hessian: params.min_child_hessian,
    };
    let eta = params.learning_rate;
    let n_rows_sampled = ((params.subsample_rows * n as f64).round() as usize).clamp(1, n);
    let n_feat_sampled = ((params.subsample_features * nf as f64).ceil() as usize).clamp(1, nf.max(1));

    let mut margins = vec![base_score; n];
    let mut trees = Vec::with_capacity(params.n_rounds);
    let mut trace = Vec::with_capacity(params.n_rounds);
    for round in 0..params.n_rounds {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(round as u64);
        let active = if n_rows_sampled == n {
            vec![true; n]
        } else {
            let mut a = vec![false; n];
            for i in sample(&mut rng, n, n_rows_sampled) {
                a[i] = true;
            }
            a
        };
        let mut mask = vec![true; nf];
        if n_feat_sampled < nf {
            mask.fill(false);
            for j in sample(&mut rng, nf, n_feat_sampled) {
                mask[j] = true;
            }
        }
        let stats: Vec<Stat> = margins
            .par_iter()
            .zip(y.par_iter())
            .map(|(&f, &yi)| {
                let s = logistic(f);
                [s - if yi { 1.0 } else { 0.0 }, s * (1.0 - s), 1.0]
            })
            .collect();
        let tree = grow(&data, &stats, &active, &crit, params.max_depth, || mask.clone())
            .map_leaves(|s| -s[0] / (s[1] + params.l2_reg));
        margins.par_iter_mut().enumerate().for_each(|(i, m)| {
            *m += eta * *tree.leaf(x.row(i));
        });
        let loss: f64 = margins.iter().zip(y).map(|(&m, &yi)| log_loss_from_margin(m, yi)).sum();
        trace.push(loss / n as f64);
        trees.push(tree);
    }
    Ok((
        BoostedEnsemble {
            base_score,
            trees,
            params: *params,
            n_features: nf,
        },
        trace,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trees::Node;

    fn exact(depth: usize, rounds: usize, eta: f64) -> BoostParams {
        BoostParams {
            n_rounds: rounds,
            max_depth: depth,
            learning_rate: eta,
            min_child_hessian: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn logistic_is_stable() {
        assert_eq!(logistic(0.0), 0.5);
        assert!((logistic(1.0) - 0.731_058_578_630_004_9).abs() < 1e-15);
        assert_eq!(logistic(-1000.0), 0.0);
        assert_eq!(logistic(1000.0), 1.0);
        assert!((log_loss_from_margin(0.0, true) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn balanced_depth_zero_predicts_half() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0], [3.0]]);
        let e = fit_gbt(&x, &[true, false, false, true], &exact(0, 1, 0.1)).unwrap();
        assert_eq!(e.base_score, 0.0);
        assert_eq!(e.trees[0].nodes, vec![Node::Leaf(0.0)]);
        for i in 0..4 {
            assert_eq!(e.predict_proba(x.row(i)).unwrap(), 0.5);
        }
    }

    #[test]
    fn one_dimensional_separable() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]);
        let y = [false, true];
        let e = fit_gbt(&x, &y, &exact(6, 10, 0.3)).unwrap();
        let grid: Vec<f64> = (0..=40).map(|i| -1.0 + i as f64 * 0.075).collect();
        let probs: Vec<f64> = grid.iter().map(|&v| e.predict_proba(&[v]).unwrap()).collect();
        assert!(probs.windows(2).all(|w| w[0] <= w[1]));
        assert!(e.predict_proba(&[0.0]).unwrap() < 0.5 && e.predict_proba(&[1.0]).unwrap() >= 0.5);
    }

    #[test]
    fn xor_reaches_full_accuracy() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]]);
        let y = [false, false, true, true];
        let e = fit_gbt(&x, &y, &exact(2, 20, 0.3)).unwrap();
        for i in 0..4 {
            assert_eq!(e.predict_proba(x.row(i)).unwrap() >= 0.5, y[i]);
        }
    }

    #[test]
    fn constant_stumps_closed_form() {
        let e = BoostedEnsemble::from_parts(
            0.0,
            vec![Tree::constant(1.0), Tree::constant(1.0)],
            BoostParams {
                learning_rate: 0.5,
                ..Default::default()
            },
            1,
        );
        assert!((e.predict_proba(&[3.0]).unwrap() - 0.731_058_578_630_004_9).abs() < 1e-15);
        let empty = BoostedEnsemble::from_parts(0.7, vec![], BoostParams::default(), 1);
        assert_eq!(empty.predict_proba(&[0.0]).unwrap(), logistic(0.7));
    }

    #[test]
    fn single_class_rejected() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]);
        assert_eq!(fit_gbt(&x, &[true, true], &BoostParams::default()), Err(TreeError::SingleClassData));
        let bad = BoostParams {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(fit_gbt(&x, &[true, false], &bad).is_err());
    }

    #[test]
    fn subsampling_is_seeded() {
        let rows: Vec<[f64; 3]> = (0..80).map(|i| [(i % 9) as f64, (i % 4) as f64, (i * 13 % 17) as f64]).collect();
        let x = Matrix::from_rows(&rows);
        let y: Vec<bool> = rows.iter().map(|r| r[0] + r[2] > 12.0).collect();
        let p = BoostParams {
            n_rounds: 15,
            subsample_rows: 0.7,
            subsample_features: 0.5,
            seed: 4,
            ..Default::default()
        };
        assert_eq!(fit_gbt(&x, &y, &p).unwrap(), fit_gbt(&x, &y, &p).unwrap());
        let q = BoostParams { seed: 5, ..p };
        assert_ne!(fit_gbt(&x, &y, &p).unwrap(), fit_gbt(&x, &y, &q).unwrap());
    }
}

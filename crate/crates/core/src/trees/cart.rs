use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grow::{grow, Criterion, Presorted, Stat};
use super::{check_len, ClassLeaf, Tree, TreeError};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SplitCriterion {
    #[default]
    Gini,
    Entropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub criterion: SplitCriterion,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 8,
            min_samples_leaf: 5,
            criterion: SplitCriterion::Gini,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub mtry: usize,
    pub min_samples_leaf: usize,
    pub bootstrap: bool,
    pub criterion: SplitCriterion,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 200,
            max_depth: 10,
            mtry: 4,
            min_samples_leaf: 1,
            bootstrap: true,
            criterion: SplitCriterion::Gini,
        }
    }
}

struct Impurity {
    kind: SplitCriterion,
    min_leaf: f64,
}

impl Impurity {
    /// Node impurity scaled by the node weight.
    fn weighted(&self, s: &Stat) -> f64 {
        let n = s[0] + s[1];
        if n <= 0.0 {
            return 0.0;
        }
        match self.kind {
            SplitCriterion::Gini => n - (s[0] * s[0] + s[1] * s[1]) / n,
            SplitCriterion::Entropy => {
                let h = |c: f64| if c > 0.0 { -c * (c / n).ln() } else { 0.0 };
                h(s[0]) + h(s[1])
            }
        }
    }
}

impl Criterion for Impurity {
    fn splittable(&self, t: &Stat) -> bool {
        t[0] > 0.0 && t[1] > 0.0 && t[2] >= 2.0 * self.min_leaf
    }

    fn gain(&self, l: &Stat, r: &Stat, p: &Stat) -> Option<f64> {
        if l[2] < self.min_leaf || r[2] < self.min_leaf {
            return None;
        }
        Some(self.weighted(p) - self.weighted(l) - self.weighted(r))
    }
}

fn check_training(x: &Matrix, y: &[bool]) -> Result<(), TreeError> {
    if x.n_rows() == 0 {
        return Err(TreeError::EmptyData);
    }
    if y.len() != x.n_rows() {
        return Err(TreeError::LabelLengthMismatch {
            rows: x.n_rows(),
            labels: y.len(),
        });
    }
    Ok(())
}

fn class_tree(
    data: &Presorted,
    y: &[bool],
    weights: &[f64],
    crit: &Impurity,
    max_depth: usize,
    mask: impl FnMut() -> Vec<bool>,
) -> Tree<ClassLeaf> {
    let stats: Vec<Stat> = y
        .iter()
        .zip(weights)
        .map(|(&b, &w)| if b { [w, 0.0, w] } else { [0.0, w, w] })
        .collect();
    let active: Vec<bool> = weights.iter().map(|&w| w > 0.0).collect();
    grow(data, &stats, &active, crit, max_depth, mask).map_leaves(|s| ClassLeaf {
        bacteria: s[0],
        virus: s[1],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub tree: Tree<ClassLeaf>,
    pub n_features: usize,
}

impl DecisionTree {
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64, TreeError> {
        check_len(self.n_features, x)?;
        Ok(self.tree.leaf(x).probability())
    }
}

/// Greedy CART with Laplace-smoothed leaves.
pub fn fit_tree(x: &Matrix, y: &[bool], params: &TreeParams) -> Result<DecisionTree, TreeError> {
    check_training(x, y)?;
    if params.min_samples_leaf == 0 {
        return Err(TreeError::InvalidParams("min_samples_leaf must be ≥ 1".into()));
    }
    let data = Presorted::new(x)?;
    let crit = Impurity {
        kind: params.criterion,
        min_leaf: params.min_samples_leaf as f64,
    };
    let nf = x.n_cols();
    let tree = class_tree(&data, y, &vec![1.0; y.len()], &crit, params.max_depth, || vec![true; nf]);
    Ok(DecisionTree { tree, n_features: nf })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<Tree<ClassLeaf>>,
    pub n_features: usize,
}

impl RandomForest {
    /// Mean of the per-tree smoothed probabilities.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64, TreeError> {
        check_len(self.n_features, x)?;
        let sum: f64 = self.trees.iter().map(|t| t.leaf(x).probability()).sum();
        Ok(sum / self.trees.len() as f64)
    }
}

pub fn fit_forest(x: &Matrix, y: &[bool], params: &ForestParams, seed: u64) -> Result<RandomForest, TreeError> {
    check_training(x, y)?;
    let nf = x.n_cols();
    if params.n_trees == 0 {
        return Err(TreeError::InvalidParams("n_trees must be ≥ 1".into()));
    }
    if params.mtry == 0 || params.mtry > nf {
        return Err(TreeError::InvalidParams(format!("mtry must be in [1, {nf}]")));
    }
    if params.min_samples_leaf == 0 {
        return Err(TreeError::InvalidParams("min_samples_leaf must be ≥ 1".into()));
    }
    let data = Presorted::new(x)?;
    let crit = Impurity {
        kind: params.criterion,
        min_leaf: params.min_samples_leaf as f64,
    };
    let n = x.n_rows();
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let mut weights = vec![0.0; n];
            if params.bootstrap {
                for _ in 0..n {
                    weights[rng.random_range(0..n)] += 1.0;
                }
            } else {
                weights.fill(1.0);
            }
            let mtry = params.mtry;
            class_tree(&data, y, &weights, &crit, params.max_depth, || {
                let mut mask = vec![false; nf];
                if mtry == nf {
                    mask.fill(true);
                } else {
                    for j in sample(&mut rng, nf, mtry) {
                        mask[j] = true;
                    }
                }
                mask
            })
        })
        .collect();
    Ok(RandomForest { trees, n_features: nf })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xor() -> (Matrix, Vec<bool>) {
        (
            Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]]),
            vec![false, false, true, true],
        )
    }

    fn params(depth: usize) -> TreeParams {
        TreeParams {
            max_depth: depth,
            min_samples_leaf: 1,
            criterion: SplitCriterion::Gini,
        }
    }

    #[test]
    fn single_class_is_one_leaf() {
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0]]);
        let t = fit_tree(&x, &[true; 3], &params(4)).unwrap();
        assert_eq!(t.tree.n_leaves, 1);
        assert_eq!(t.predict_proba(&[0.0]).unwrap(), 4.0 / 5.0);
    }

    #[test]
    fn one_dimensional_stump() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]);
        let t = fit_tree(&x, &[false, true], &params(1)).unwrap();
        assert_eq!(t.tree.n_leaves, 2);
        assert_eq!(t.predict_proba(&[1.0]).unwrap(), 2.0 / 3.0);
        assert_eq!(t.predict_proba(&[0.0]).unwrap(), 1.0 / 3.0);
        assert_eq!(t.predict_proba(&[0.5]).unwrap(), 2.0 / 3.0);
        assert_eq!(
            t.predict_proba(&[0.5, 1.0]),
            Err(TreeError::FeatureLengthMismatch { expected: 1, got: 2 })
        );
    }

    #[test]
    fn xor_tree_and_forest_fit_exactly() {
        let (x, y) = xor();
        let t = fit_tree(&x, &y, &params(2)).unwrap();
        // Ten copies of each point, so a bootstrap sample rarely drops a corner.
        let rows: Vec<Vec<f64>> = (0..40).map(|i| x.row(i % 4).to_vec()).collect();
        let labels: Vec<bool> = (0..40).map(|i| y[i % 4]).collect();
        let f = fit_forest(
            &Matrix::from_rows(&rows),
            &labels,
            &ForestParams {
                n_trees: 50,
                max_depth: 2,
                mtry: 2,
                min_samples_leaf: 1,
                ..Default::default()
            },
            3,
        )
        .unwrap();
        for (i, &label) in y.iter().enumerate() {
            assert_eq!(t.predict_proba(x.row(i)).unwrap() >= 0.5, label);
            assert_eq!(f.predict_proba(x.row(i)).unwrap() >= 0.5, label);
        }
    }

    #[test]
    fn degenerate_forest_equals_tree() {
        let x = Matrix::from_rows(&(0..40).map(|i| [(i * 7 % 13) as f64, (i % 5) as f64]).collect::<Vec<_>>());
        let y: Vec<bool> = (0..40).map(|i| (i * 7 % 13) > 6 || i % 5 == 0).collect();
        let tree = fit_tree(&x, &y, &params(4)).unwrap();
        let forest = fit_forest(
            &x,
            &y,
            &ForestParams {
                n_trees: 1,
                max_depth: 4,
                mtry: 2,
                min_samples_leaf: 1,
                bootstrap: false,
                criterion: SplitCriterion::Gini,
            },
            11,
        )
        .unwrap();
        assert_eq!(forest.trees[0], tree.tree);
    }

    #[test]
    fn forest_is_seed_deterministic() {
        let x = Matrix::from_rows(&(0..60).map(|i| [(i % 11) as f64, (i % 7) as f64, i as f64]).collect::<Vec<_>>());
        let y: Vec<bool> = (0..60).map(|i| (i % 11) + (i % 7) > 8).collect();
        let p = ForestParams {
            n_trees: 10,
            mtry: 1,
            ..Default::default()
        };
        assert_eq!(fit_forest(&x, &y, &p, 5).unwrap(), fit_forest(&x, &y, &p, 5).unwrap());
        assert_ne!(fit_forest(&x, &y, &p, 5).unwrap(), fit_forest(&x, &y, &p, 6).unwrap());
    }

    #[test]
    fn min_samples_leaf_respected() {
        let x = Matrix::from_rows(&(0..30).map(|i| [i as f64]).collect::<Vec<_>>());
        let y: Vec<bool> = (0..30).map(|i| i % 3 == 0).collect();
        let t = fit_tree(&x, &y, &TreeParams::default()).unwrap();
        assert!(t.tree.leaves().all(|l| l.bacteria + l.virus >= 5.0));
    }

    #[test]
    fn input_errors() {
        let x = Matrix::from_rows(&[[1.0], [f64::NAN]]);
        assert!(matches!(fit_tree(&x, &[true, false], &params(1)), Err(TreeError::NonFiniteInput { row: 1, col: 0 })));
        assert_eq!(fit_tree(&Matrix::zeros(0, 2), &[], &params(1)), Err(TreeError::EmptyData));
        let x = Matrix::from_rows(&[[1.0], [2.0]]);
        assert!(fit_forest(&x, &[true, false], &ForestParams { mtry: 2, ..Default::default() }, 0).is_err());
    }
}

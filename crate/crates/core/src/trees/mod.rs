//! Decision tree, random forest and second-order gradient boosting.
//!
//! All three share one level-wise exact-greedy grower over presorted feature
//! columns; they differ only in the per-row statistics and split criterion.

mod boost;
mod cart;
mod grow;

pub use boost::{fit_gbt, fit_gbt_traced, logistic, BoostParams, BoostedEnsemble};
pub use cart::{fit_forest, fit_tree, DecisionTree, ForestParams, RandomForest, SplitCriterion, TreeParams};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TreeError {
    #[error("no training rows")]
    EmptyData,
    #[error("training labels contain a single class")]
    SingleClassData,
    #[error("expected {expected} features, got {got}")]
    FeatureLengthMismatch { expected: usize, got: usize },
    #[error("{rows} rows but {labels} labels")]
    LabelLengthMismatch { rows: usize, labels: usize },
    #[error("non-finite feature value at row {row}, column {col}")]
    NonFiniteInput { row: usize, col: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("malformed tree: {0}")]
    MalformedTree(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node<L> {
    /// `x[feature] < threshold` goes left, everything else right.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(L),
}

/// Flat node array; the root is node 0 and children always follow their parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree<L> {
    pub nodes: Vec<Node<L>>,
    pub depth: usize,
    pub n_leaves: usize,
}

impl<L> Tree<L> {
    pub fn constant(leaf: L) -> Self {
        Tree {
            nodes: vec![Node::Leaf(leaf)],
            depth: 0,
            n_leaves: 1,
        }
    }

    /// Assumes `x` has already been length-checked.
    pub fn leaf(&self, x: &[f64]) -> &L {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] < *threshold { *left } else { *right },
                Node::Leaf(l) => return l,
            }
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = &L> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf(l) => Some(l),
            Node::Split { .. } => None,
        })
    }

    pub fn map_leaves<M>(self, mut f: impl FnMut(L) -> M) -> Tree<M> {
        Tree {
            nodes: self
                .nodes
                .into_iter()
                .map(|n| match n {
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    },
                    Node::Leaf(l) => Node::Leaf(f(l)),
                })
                .collect(),
            depth: self.depth,
            n_leaves: self.n_leaves,
        }
    }

    /// Structural checks for trees read from disk.
    pub fn validate(&self, n_features: usize) -> Result<(), TreeError> {
        if self.nodes.is_empty() {
            return Err(TreeError::MalformedTree("no nodes".into()));
        }
        let mut leaves = 0;
        let mut depth = vec![0usize; self.nodes.len()];
        let mut seen = vec![false; self.nodes.len()];
        seen[0] = true;
        for (i, node) in self.nodes.iter().enumerate() {
            if !seen[i] {
                return Err(TreeError::MalformedTree(format!("node {i} unreachable")));
            }
            match node {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if *feature >= n_features || !threshold.is_finite() {
                        return Err(TreeError::MalformedTree(format!("node {i}: bad split")));
                    }
                    for &c in [left, right] {
                        if c <= i || c >= self.nodes.len() || seen[c] {
                            return Err(TreeError::MalformedTree(format!("node {i}: bad child {c}")));
                        }
                        seen[c] = true;
                        depth[c] = depth[i] + 1;
                    }
                }
                Node::Leaf(_) => leaves += 1,
            }
        }
        let max_depth = depth.iter().copied().max().unwrap_or(0);
        if leaves != self.n_leaves || max_depth != self.depth {
            return Err(TreeError::MalformedTree("depth or leaf count disagrees with nodes".into()));
        }
        Ok(())
    }
}

/// Class tallies at a DT/RF leaf (weighted by bootstrap multiplicity).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassLeaf {
    pub bacteria: f64,
    pub virus: f64,
}

impl ClassLeaf {
    /// Laplace-smoothed probability of Bacteria.
    pub fn probability(&self) -> f64 {
        (self.bacteria + 1.0) / (self.bacteria + self.virus + 2.0)
    }
}

pub(crate) fn check_len(expected: usize, x: &[f64]) -> Result<(), TreeError> {
    if x.len() != expected {
        return Err(TreeError::FeatureLengthMismatch { expected, got: x.len() });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_rejects_bad_structure() {
        let mut t = Tree {
            nodes: vec![
                Node::Split {
                    feature: 0,
                    threshold: 0.5,
                    left: 1,
                    right: 2,
                },
                Node::Leaf(0.0),
                Node::Leaf(1.0),
            ],
            depth: 1,
            n_leaves: 2,
        };
        assert!(t.validate(1).is_ok());
        assert!(t.validate(0).is_err());
        t.nodes[0] = Node::Split {
            feature: 0,
            threshold: 0.5,
            left: 1,
            right: 1,
        };
        assert!(t.validate(1).is_err());
        assert!(Tree::<f64> { nodes: vec![], depth: 0, n_leaves: 0 }.validate(1).is_err());
    }

    #[test]
    fn routing_boundary_goes_right() {
        let t = Tree {
            nodes: vec![
                Node::Split {
                    feature: 0,
                    threshold: 0.5,
                    left: 1,
                    right: 2,
                },
                Node::Leaf("left"),
                Node::Leaf("right"),
            ],
            depth: 1,
            n_leaves: 2,
        };
        assert_eq!(*t.leaf(&[0.4999]), "left");
        assert_eq!(*t.leaf(&[0.5]), "right");
    }
}

//! Level-wise exact greedy growth over presorted columns.
//!
//! Each level makes one ascending pass per feature, accumulating left-side
//! statistics for every open node at once. Candidate thresholds are midpoints
//! of consecutive distinct values inside a node. Features are scanned in
//! parallel, then reduced in feature order so ties resolve to the lowest
//! feature index (and, within a feature, the lowest threshold).

use rayon::prelude::*;

use super::{Node, Tree, TreeError};
use crate::matrix::Matrix;

/// Per-row additive statistic: `[bacteria, virus, n]` for class trees,
/// `[g, h, n]` for boosting.
pub(crate) type Stat = [f64; 3];

const NONE: u32 = u32::MAX;

pub(crate) fn add(a: &mut Stat, b: &Stat) {
    a[0] += b[0];
    a[1] += b[1];
    a[2] += b[2];
}

fn sub(a: &Stat, b: &Stat) -> Stat {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) trait Criterion: Sync {
    /// Whether a node with these totals may be split at all.
    fn splittable(&self, total: &Stat) -> bool;
    /// Gain of a split, or `None` when a child violates a size constraint.
    fn gain(&self, left: &Stat, right: &Stat, parent: &Stat) -> Option<f64>;
}

pub(crate) struct Presorted {
    n_rows: usize,
    columns: Vec<Vec<f64>>,
    order: Vec<Vec<u32>>,
}

impl Presorted {
    pub fn new(x: &Matrix) -> Result<Self, TreeError> {
        let (n, f) = (x.n_rows(), x.n_cols());
        for i in 0..n {
            if let Some(j) = x.row(i).iter().position(|v| !v.is_finite()) {
                return Err(TreeError::NonFiniteInput { row: i, col: j });
            }
        }
        let columns: Vec<Vec<f64>> = (0..f).map(|j| x.column(j)).collect();
        let order = columns
            .par_iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..n as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Ok(Presorted {
            n_rows: n,
            columns,
            order,
        })
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    threshold: f64,
}

/// Threshold strictly above `lo` and at most `hi`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m > lo {
        m
    } else {
        hi
    }
}

/// Grows one tree. Rows with `active[r] == false` are ignored.
/// `feature_mask` is asked for a mask each time a node is considered for splitting,
/// in level order.
pub(crate) fn grow<C: Criterion>(
    data: &Presorted,
    stats: &[Stat],
    active: &[bool],
    criterion: &C,
    max_depth: usize,
    mut feature_mask: impl FnMut() -> Vec<bool>,
) -> Tree<Stat> {
    let n = data.n_rows;
    let nf = data.n_features();
    let mut node_of: Vec<u32> = active.iter().map(|&a| if a { 0 } else { NONE }).collect();
    let mut root = [0.0; 3];
    for r in 0..n {
        if active[r] {
            add(&mut root, &stats[r]);
        }
    }
    let mut nodes = vec![Node::Leaf(root)];
    // tree index and totals of each open node at the current level
    let mut open: Vec<(usize, Stat)> = vec![(0, root)];
    let mut depth = 0;

    for level in 0..max_depth {
        if open.is_empty() {
            break;
        }
        let masks: Vec<Option<Vec<bool>>> = open
            .iter()
            .map(|(_, total)| criterion.splittable(total).then(|| feature_mask()))
            .collect();
        if masks.iter().all(Option::is_none) {
            break;
        }
        let per_feature: Vec<Vec<Option<Candidate>>> = (0..nf)
            .into_par_iter()
            .map(|f| scan_feature(data, f, stats, &node_of, &open, &masks, criterion))
            .collect();

        let mut chosen: Vec<Option<(usize, f64)>> = vec![None; open.len()];
        for (k, slot) in chosen.iter_mut().enumerate() {
            let mut best: Option<(usize, Candidate)> = None;
            for (f, cands) in per_feature.iter().enumerate() {
                if let Some(c) = cands[k] {
                    if best.is_none_or(|(_, b)| c.gain > b.gain) {
                        best = Some((f, c));
                    }
                }
            }
            *slot = best.map(|(f, c)| (f, c.threshold));
        }

        // Recompute child sums in row order and re-check the gain on them.
        let mut sums = vec![[[0.0; 3]; 2]; open.len()];
        for r in 0..n {
            let k = node_of[r];
            if k == NONE {
                continue;
            }
            if let Some((f, t)) = chosen[k as usize] {
                let side = usize::from(data.columns[f][r] >= t);
                add(&mut sums[k as usize][side], &stats[r]);
            }
        }
        let mut next_open = Vec::new();
        let mut remap = vec![[NONE; 2]; open.len()];
        for (k, &(idx, total)) in open.iter().enumerate() {
            let Some((feature, threshold)) = chosen[k] else { continue };
            let [l, r] = sums[k];
            match criterion.gain(&l, &r, &total) {
                Some(g) if g >= 0.0 => {}
                _ => continue,
            }
            let left = nodes.len();
            nodes.push(Node::Leaf(l));
            nodes.push(Node::Leaf(r));
            nodes[idx] = Node::Split {
                feature,
                threshold,
                left,
                right: left + 1,
            };
            remap[k] = [next_open.len() as u32, next_open.len() as u32 + 1];
            next_open.push((left, l));
            next_open.push((left + 1, r));
        }
        if next_open.is_empty() {
            break;
        }
        depth = level + 1;
        for r in 0..n {
            let k = node_of[r];
            if k == NONE {
                continue;
            }
            node_of[r] = match chosen[k as usize] {
                Some((f, t)) => remap[k as usize][usize::from(data.columns[f][r] >= t)],
                None => NONE,
            };
        }
        open = next_open;
    }
    let n_leaves = nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count();
    Tree { nodes, depth, n_leaves }
}

fn scan_feature<C: Criterion>(
    data: &Presorted,
    f: usize,
    stats: &[Stat],
    node_of: &[u32],
    open: &[(usize, Stat)],
    masks: &[Option<Vec<bool>>],
    criterion: &C,
) -> Vec<Option<Candidate>> {
    let col = &data.columns[f];
    let m = open.len();
    let mut acc = vec![[0.0; 3]; m];
    let mut last = vec![f64::NAN; m];
    let mut best: Vec<Option<Candidate>> = vec![None; m];
    for &r in &data.order[f] {
        let r = r as usize;
        let k = node_of[r];
        if k == NONE {
            continue;
        }
        let k = k as usize;
        if !masks[k].as_ref().is_some_and(|mask| mask[f]) {
            continue;
        }
        let v = col[r];
        if v > last[k] {
            let total = &open[k].1;
            let right = sub(total, &acc[k]);
            if let Some(gain) = criterion.gain(&acc[k], &right, total) {
                if best[k].is_none_or(|b| gain > b.gain) {
                    best[k] = Some(Candidate {
                        gain,
                        threshold: midpoint(last[k], v),
                    });
                }
            }
        }
        add(&mut acc[k], &stats[r]);
        last[k] = v;
    }
    best
}

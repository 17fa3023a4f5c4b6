//! Single CART decision tree: greedy binary splits minimizing weighted
//! Gini impurity.
//!
//! Determinism contract: given the same rows, the same candidate feature
//! order, and the same RNG state, the grown tree is identical. Ties in
//! weighted Gini keep the first candidate encountered — earlier feature in
//! candidate order, then lower threshold.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{FeatureSubset, TrainConfig};

/// Arena node. Split nodes carry their sample count and impurity so
/// feature importance is computable from a serialized model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        samples: u64,
        gini: f64,
    },
    Leaf {
        /// Class counts [negatives, positives] of the training rows here.
        counts: [u64; 2],
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
}

impl DecisionTree {
    /// P(y = 1) at the leaf this row lands in. Rows route left when
    /// `value <= threshold`.
    pub fn proba(&self, row: &[f64]) -> f64 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { counts } => {
                    let total = counts[0] + counts[1];
                    return if total == 0 {
                        0.5
                    } else {
                        counts[1] as f64 / total as f64
                    };
                }
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Sample count under a node.
    pub fn node_samples(&self, at: usize) -> u64 {
        match &self.nodes[at] {
            TreeNode::Leaf { counts } => counts[0] + counts[1],
            TreeNode::Split { samples, .. } => *samples,
        }
    }

    /// Gini impurity at a node.
    pub fn node_gini(&self, at: usize) -> f64 {
        match &self.nodes[at] {
            TreeNode::Leaf { counts } => gini_from_counts(counts[0], counts[1]),
            TreeNode::Split { gini, .. } => *gini,
        }
    }
}

pub(crate) fn gini_from_counts(c0: u64, c1: u64) -> f64 {
    let n = (c0 + c1) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p0 = c0 as f64 / n;
    let p1 = c1 as f64 / n;
    1.0 - p0 * p0 - p1 * p1
}

/// The best split of a set of rows along one feature, by exhaustive scan
/// of the midpoints between consecutive distinct values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub weighted_gini: f64,
}

/// Scan one feature for its best threshold. `None` when the feature is
/// constant over the rows or every cut violates `min_samples_leaf`.
pub fn best_threshold_for_feature(
    x: &[Vec<f64>],
    y: &[u8],
    rows: &[usize],
    feature: usize,
    min_samples_leaf: usize,
) -> Option<(f64, f64)> {
    let mut pairs: Vec<(f64, u8)> = rows.iter().map(|&r| (x[r][feature], y[r])).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pairs.len();
    let total1: u64 = pairs.iter().map(|&(_, label)| label as u64).sum();
    let total0 = n as u64 - total1;
    let mut left1 = 0u64;
    let mut best: Option<(f64, f64)> = None;
    for i in 0..n - 1 {
        left1 += pairs[i].1 as u64;
        if pairs[i].0 >= pairs[i + 1].0 {
            continue;
        }
        let nl = (i + 1) as u64;
        let nr = n as u64 - nl;
        if (nl as usize) < min_samples_leaf || (nr as usize) < min_samples_leaf {
            continue;
        }
        let left0 = nl - left1;
        let right1 = total1 - left1;
        let right0 = total0 - left0;
        let weighted = (nl as f64 * gini_from_counts(left0, left1)
            + nr as f64 * gini_from_counts(right0, right1))
            / n as f64;
        // Midpoint threshold; fall back to the left value when rounding
        // would leak the right neighbor across the cut.
        let mid = (pairs[i].0 + pairs[i + 1].0) / 2.0;
        let threshold = if pairs[i].0 < mid && mid < pairs[i + 1].0 {
            mid
        } else {
            pairs[i].0
        };
        if best.map_or(true, |(_, g)| weighted < g) {
            best = Some((threshold, weighted));
        }
    }
    best
}

/// Grow one tree over `rows` (already bootstrap-sampled by the caller).
pub fn grow_tree(
    x: &[Vec<f64>],
    y: &[u8],
    rows: Vec<usize>,
    config: &TrainConfig,
    rng: &mut impl Rng,
) -> DecisionTree {
    let d = x[0].len();
    let mut tree = DecisionTree::default();
    grow_node(x, y, rows, config, d, rng, &mut tree, 0);
    tree
}

#[allow(clippy::too_many_arguments)]
fn grow_node(
    x: &[Vec<f64>],
    y: &[u8],
    rows: Vec<usize>,
    config: &TrainConfig,
    d: usize,
    rng: &mut impl Rng,
    tree: &mut DecisionTree,
    depth: usize,
) -> usize {
    let c1: u64 = rows.iter().map(|&r| y[r] as u64).sum();
    let c0 = rows.len() as u64 - c1;
    let make_leaf = |tree: &mut DecisionTree| {
        tree.nodes.push(TreeNode::Leaf { counts: [c0, c1] });
        tree.nodes.len() - 1
    };
    let pure = c0 == 0 || c1 == 0;
    let depth_capped = config.max_depth.map_or(false, |cap| depth >= cap);
    if pure || depth_capped || rows.len() < 2 * config.min_samples_leaf || rows.len() < 2 {
        return make_leaf(tree);
    }
    let candidates: Vec<usize> = match config.features_per_split {
        FeatureSubset::All => (0..d).collect(),
        FeatureSubset::Sqrt => {
            let m = ((d as f64).sqrt().ceil() as usize).clamp(1, d);
            rand::seq::index::sample(rng, d, m).into_vec()
        }
        FeatureSubset::Fixed(m) => {
            let m = m.clamp(1, d);
            rand::seq::index::sample(rng, d, m).into_vec()
        }
    };
    let mut best: Option<SplitChoice> = None;
    for feature in candidates {
        if let Some((threshold, weighted)) =
            best_threshold_for_feature(x, y, &rows, feature, config.min_samples_leaf)
        {
            if best.map_or(true, |b| weighted < b.weighted_gini) {
                best = Some(SplitChoice {
                    feature,
                    threshold,
                    weighted_gini: weighted,
                });
            }
        }
    }
    let Some(choice) = best else {
        return make_leaf(tree);
    };
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
        .iter()
        .partition(|&&r| x[r][choice.feature] <= choice.threshold);
    let samples = rows.len() as u64;
    let gini = gini_from_counts(c0, c1);
    let at = tree.nodes.len();
    tree.nodes.push(TreeNode::Split {
        feature: choice.feature,
        threshold: choice.threshold,
        left: 0,
        right: 0,
        samples,
        gini,
    });
    let left = grow_node(x, y, left_rows, config, d, rng, tree, depth + 1);
    let right = grow_node(x, y, right_rows, config, d, rng, tree, depth + 1);
    match &mut tree.nodes[at] {
        TreeNode::Split {
            left: l, right: r, ..
        } => {
            *l = left;
            *r = right;
        }
        TreeNode::Leaf { .. } => unreachable!("just pushed a split node"),
    }
    at
}

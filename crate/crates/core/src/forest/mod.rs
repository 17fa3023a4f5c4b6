//! From-scratch random forest over feature vectors.
//!
//! Fifty Gini-greedy CART trees by default, bootstrap sampling, a random
//! `ceil(sqrt(d))` feature subset per split, and majority-vote probability
//! aggregation. Label semantics: `y = 1` means the trace was judged
//! correct, so `1 - predict_proba` is the failure probability used by the
//! partial-dependence analysis. Everything is deterministic given the
//! config seed; serialized models round-trip bit-exactly.

mod analysis;
mod cart;

pub use analysis::{
    default_depth_grid, feature_importance, partial_dependence, random_feature_ablation,
    split_protocol, subset_eval, tune_max_depth, AblationPoint, SplitMode, SplitPlan, SubsetReport,
};
pub use cart::{best_threshold_for_feature, DecisionTree, SplitChoice, TreeNode};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::hashing::mix_seed;

/// How many features each split may inspect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSubset {
    /// `ceil(sqrt(d))` features, freshly sampled per node.
    Sqrt,
    /// Every feature at every node (test hook and small-d runs).
    All,
    Fixed(usize),
}

/// Forest training configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n_estimators: usize,
    /// `None` grows unbounded trees.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub features_per_split: FeatureSubset,
    /// Bootstrap with replacement, sample size n. Off means every tree
    /// sees the full training set (test hook).
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_estimators: 50,
            max_depth: None,
            min_samples_leaf: 1,
            features_per_split: FeatureSubset::Sqrt,
            bootstrap: true,
            seed: 0,
        }
    }
}

/// A trained forest. `schema_hash` pins the feature schema the model was
/// trained against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub config: TrainConfig,
    pub schema_hash: String,
    pub n_features: usize,
    pub tree_seeds: Vec<u64>,
    pub trees: Vec<DecisionTree>,
}

#[derive(Debug, thiserror::Error)]
pub enum ForestError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("schema mismatch: model has {expected} features, input has {got}")]
    SchemaMismatch { expected: usize, got: usize },
    #[error("labels must be 0 or 1, found {found}")]
    BadLabel { found: u8 },
    #[error("row {row} has {got} features, expected {expected}")]
    RaggedMatrix { row: usize, expected: usize, got: usize },
    #[error("{what} must not be empty")]
    EmptyArgument { what: &'static str },
}

fn check_dataset(x: &[Vec<f64>], y: &[u8]) -> Result<usize, ForestError> {
    if x.is_empty() || y.is_empty() || x.len() != y.len() {
        return Err(ForestError::EmptyDataset);
    }
    let d = x[0].len();
    if d == 0 {
        return Err(ForestError::EmptyDataset);
    }
    for (row, values) in x.iter().enumerate() {
        if values.len() != d {
            return Err(ForestError::RaggedMatrix {
                row,
                expected: d,
                got: values.len(),
            });
        }
    }
    for &label in y {
        if label > 1 {
            return Err(ForestError::BadLabel { found: label });
        }
    }
    Ok(d)
}

/// Train a forest. Per tree `t`: derive a seed from `(config.seed, t)`,
/// bootstrap-sample n rows, grow a CART tree. Trees are independent given
/// their seeds, so this is trivially parallelizable without changing the
/// result; it runs sequentially because desk-scale datasets never need
/// more.
pub fn train(x: &[Vec<f64>], y: &[u8], config: &TrainConfig, schema_hash: &str) -> Result<ForestModel, ForestError> {
    let _d = check_dataset(x, y)?;
    let n = x.len();
    let mut trees = Vec::with_capacity(config.n_estimators);
    let mut tree_seeds = Vec::with_capacity(config.n_estimators);
    for t in 0..config.n_estimators {
        let tree_seed = mix_seed(config.seed, t as u64);
        tree_seeds.push(tree_seed);
        let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);
        let rows: Vec<usize> = if config.bootstrap {
            (0..n).map(|_| rng.gen_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        trees.push(cart::grow_tree(x, y, rows, config, &mut rng));
    }
    Ok(ForestModel {
        config: *config,
        schema_hash: schema_hash.to_string(),
        n_features: x[0].len(),
        tree_seeds,
        trees,
    })
}

/// Mean over trees of the leaf class-1 frequency.
pub fn predict_proba(model: &ForestModel, row: &[f64]) -> Result<f64, ForestError> {
    if row.len() != model.n_features {
        return Err(ForestError::SchemaMismatch {
            expected: model.n_features,
            got: row.len(),
        });
    }
    let sum: f64 = model.trees.iter().map(|t| t.proba(row)).sum();
    Ok(sum / model.trees.len() as f64)
}

/// Hard prediction at threshold 0.5; ties predict class 1.
pub fn predict(model: &ForestModel, row: &[f64]) -> Result<u8, ForestError> {
    Ok(if predict_proba(model, row)? >= 0.5 { 1 } else { 0 })
}

/// Confusion counts with class 1 (correct) as positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

/// Evaluation metrics. `support` reports the per-class row counts so
/// imbalance is visible next to every score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub weighted_f1: f64,
    pub f1_incorrect: f64,
    pub f1_correct: f64,
    pub confusion: Confusion,
    pub support: [usize; 2],
}

impl Metrics {
    /// Metrics from raw confusion counts.
    pub fn from_confusion(confusion: Confusion) -> Self {
        let Confusion { tp, fp, fn_, tn } = confusion;
        let n = tp + fp + fn_ + tn;
        let accuracy = if n == 0 { 0.0 } else { (tp + tn) as f64 / n as f64 };
        let f1_correct = f1(tp, fp, fn_);
        let f1_incorrect = f1(tn, fn_, fp);
        let support = [tn + fp, tp + fn_];
        let weighted_f1 = if n == 0 {
            0.0
        } else {
            (support[0] as f64 * f1_incorrect + support[1] as f64 * f1_correct) / n as f64
        };
        Self {
            accuracy,
            weighted_f1,
            f1_incorrect,
            f1_correct,
            confusion,
            support,
        }
    }
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Evaluate hard predictions over a labeled set.
pub fn evaluate(model: &ForestModel, x: &[Vec<f64>], y: &[u8]) -> Result<Metrics, ForestError> {
    let mut confusion = Confusion::default();
    for (row, &label) in x.iter().zip(y) {
        let predicted = predict(model, row)?;
        match (label, predicted) {
            (1, 1) => confusion.tp += 1,
            (0, 1) => confusion.fp += 1,
            (1, 0) => confusion.fn_ += 1,
            (0, 0) => confusion.tn += 1,
            _ => return Err(ForestError::BadLabel { found: label }),
        }
    }
    Ok(Metrics::from_confusion(confusion))
}

/// Seeded stratified split of row indices: per class, shuffle and take
/// `fraction` for the second part. Returned lists are sorted ascending.
pub fn stratified_split(y: &[u8], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut first = Vec::new();
    let mut second = Vec::new();
    for class in [0u8, 1u8] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        use rand::seq::SliceRandom;
        idx.shuffle(&mut rng);
        let take = (idx.len() as f64 * fraction).round() as usize;
        second.extend_from_slice(&idx[..take.min(idx.len())]);
        first.extend_from_slice(&idx[take.min(idx.len())..]);
    }
    first.sort_unstable();
    second.sort_unstable();
    (first, second)
}

/// Gather rows by index.
pub fn select_rows(x: &[Vec<f64>], rows: &[usize]) -> Vec<Vec<f64>> {
    rows.iter().map(|&r| x[r].clone()).collect()
}

/// Gather labels by index.
pub fn select_labels(y: &[u8], rows: &[usize]) -> Vec<u8> {
    rows.iter().map(|&r| y[r]).collect()
}

/// Project a matrix onto a column subset.
pub fn select_columns(x: &[Vec<f64>], columns: &[usize]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|row| columns.iter().map(|&c| row[c]).collect())
        .collect()
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_class_training_yields_a_constant_model() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, -(i as f64)]).collect();
        let y = vec![1u8; 10];
        let model = train(&x, &y, &TrainConfig::default(), "h").unwrap();
        for row in &x {
            assert_eq!(predict_proba(&model, row).unwrap(), 1.0);
        }
        let metrics = evaluate(&model, &x, &y).unwrap();
        assert_eq!(metrics.accuracy, 1.0);

        let y0 = vec![0u8; 10];
        let model0 = train(&x, &y0, &TrainConfig::default(), "h").unwrap();
        assert_eq!(predict_proba(&model0, &x[0]).unwrap(), 0.0);
    }

    #[test]
    fn one_unbounded_tree_fits_separable_data_exactly() {
        let config = TrainConfig {
            n_estimators: 1,
            bootstrap: false,
            features_per_split: FeatureSubset::All,
            ..Default::default()
        };
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![(i % 4) as f64, (i / 4) as f64]).collect();
        let y: Vec<u8> = (0..8).map(|i| ((i % 4 >= 2) ^ (i / 4 == 1)) as u8).collect();
        let model = train(&x, &y, &config, "h").unwrap();
        let metrics = evaluate(&model, &x, &y).unwrap();
        assert_eq!(metrics.accuracy, 1.0);
    }

    #[test]
    fn two_trees_voting_opposite_average_to_half() {
        use cart::TreeNode;
        let model = ForestModel {
            config: TrainConfig::default(),
            schema_hash: "h".into(),
            n_features: 1,
            tree_seeds: vec![0, 1],
            trees: vec![
                DecisionTree { nodes: vec![TreeNode::Leaf { counts: [0, 5] }] },
                DecisionTree { nodes: vec![TreeNode::Leaf { counts: [5, 0] }] },
            ],
        };
        assert_eq!(predict_proba(&model, &[0.0]).unwrap(), 0.5);
        // Tie predicts class 1.
        assert_eq!(predict(&model, &[0.0]).unwrap(), 1);
    }

    #[test]
    fn metrics_match_hand_computed_confusion() {
        let metrics = Metrics::from_confusion(Confusion { tp: 3, fp: 1, fn_: 1, tn: 5 });
        assert!((metrics.accuracy - 0.8).abs() < 1e-12);
        assert!((metrics.f1_correct - 0.75).abs() < 1e-12);
        assert_eq!(metrics.support, [6, 4]);
    }

    #[test]
    fn all_wrong_on_balanced_data_gives_zero_accuracy() {
        let metrics = Metrics::from_confusion(Confusion { tp: 0, fp: 5, fn_: 5, tn: 0 });
        assert_eq!(metrics.accuracy, 0.0);
    }

    #[test]
    fn training_is_deterministic_bit_for_bit() {
        let (x, y) = testdata::informative_first_feature(80, 6, 9);
        let config = TrainConfig { n_estimators: 7, seed: 1234, ..Default::default() };
        let a = train(&x, &y, &config, "h").unwrap();
        let b = train(&x, &y, &config, "h").unwrap();
        assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
        // And the serialized form round-trips bit-exactly.
        let bytes = serde_json::to_vec(&a).unwrap();
        let back: ForestModel = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(serde_json::to_vec(&back).unwrap(), bytes);
    }

    #[test]
    fn held_out_accuracy_on_separable_data_is_high() {
        let (x, y) = testdata::separable(500, 77);
        let (train_idx, test_idx) = stratified_split(&y, 0.3, 5);
        let model = train(
            &select_rows(&x, &train_idx),
            &select_labels(&y, &train_idx),
            &TrainConfig { seed: 3, ..Default::default() },
            "h",
        )
        .unwrap();
        let metrics = evaluate(&model, &select_rows(&x, &test_idx), &select_labels(&y, &test_idx)).unwrap();
        assert!(metrics.accuracy >= 0.95, "accuracy {}", metrics.accuracy);
    }

    #[test]
    fn empty_dataset_is_rejected() {
        assert!(matches!(
            train(&[], &[], &TrainConfig::default(), "h").unwrap_err(),
            ForestError::EmptyDataset
        ));
    }

    #[test]
    fn probabilities_stay_in_unit_interval() {
        let (x, y) = testdata::informative_first_feature(60, 5, 4);
        let model = train(&x, &y, &TrainConfig { seed: 8, ..Default::default() }, "h").unwrap();
        for row in &x {
            let p = predict_proba(&model, row).unwrap();
            assert!((0.0..=1.0).contains(&p));
        }
    }
}

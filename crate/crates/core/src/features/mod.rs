//! Feature extraction: 54 values per trace over a fixed, named schema.
//!
//! Three groups are concatenated in schema order: tree structure, raw
//! trace statistics, and the label distribution. Every value is finite by
//! construction — rates use `max(1, ·)` guards and an empty trace yields
//! the all-zero vector.

mod schema;

pub use schema::{FeatureDef, FeatureSchema, Group, SchemaSidecar, FEATURE_DEFS};

use serde::{Deserialize, Serialize};

use crate::harness::ProblemMeta;
use crate::segment::{Segment, Sentence};
use crate::tree::{LabelValue, ThoughtTree, LABEL_VALUES};

/// One extracted vector, aligned to [`FeatureSchema`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub trace_id: String,
    pub values: Vec<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("schema mismatch: expected {expected} values, got {got}")]
    SchemaMismatch { expected: usize, got: usize },
}

/// Word lists for the exploration and confidence counters. The defaults
/// separate revision signals (backtrack) from progress signals (forward);
/// both are overridable per run and recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceFeatureConfig {
    pub backtrack_markers: Vec<String>,
    pub forward_markers: Vec<String>,
}

impl Default for TraceFeatureConfig {
    fn default() -> Self {
        Self {
            backtrack_markers: ["wait", "alternatively", "hmm", "however", "but", "actually", "recheck", "wrong", "mistake"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            forward_markers: ["so", "therefore", "thus", "next", "then", "now", "finally", "okay"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

fn population_cv(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return 0.0;
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean
}

/// Ten tree-structure features. The root is a sentinel: it is excluded
/// from node counts, its children count only toward the root branching
/// factor, and node depth starts at 1 for root-attached nodes.
pub fn tree_features(tree: &ThoughtTree) -> [f64; 10] {
    let total = tree.node_count();
    if total == 0 {
        return [0.0; 10];
    }
    let depths: Vec<usize> = (0..total).map(|i| tree.depth_of(i)).collect();
    let max_depth = depths.iter().copied().max().unwrap_or(0);
    let child_counts: Vec<usize> = (0..total)
        .map(|i| tree.children_of(&crate::tree::ThoughtTree::node_id(i)).len())
        .collect();
    let internal = child_counts.iter().filter(|&&c| c > 0).count();
    let leaves = total - internal;
    let avg_branching = if internal > 0 {
        child_counts.iter().filter(|&&c| c > 0).sum::<usize>() as f64 / internal as f64
    } else {
        0.0
    };
    let root_branching = tree.children_of(crate::tree::ROOT_ID).len();
    let leaf_depths: Vec<f64> = (0..total)
        .filter(|&i| child_counts[i] == 0)
        .map(|i| depths[i] as f64)
        .collect();
    [
        max_depth as f64,
        total as f64,
        internal as f64,
        leaves as f64,
        avg_branching,
        root_branching as f64,
        max_depth as f64 / (total.max(1)) as f64,
        internal as f64 / (max_depth.max(1)) as f64,
        total as f64 / (max_depth + 1) as f64,
        population_cv(&leaf_depths),
    ]
}

/// The 36 raw-trace features (length and meta sub-groups included), in
/// schema order starting at column 10.
pub fn trace_features(
    trace: &str,
    segments: &[Segment],
    sentences: &[Sentence],
    meta: &ProblemMeta,
    config: &TraceFeatureConfig,
) -> [f64; 36] {
    let mut out = [0.0f64; 36];
    let chars = trace.chars().count();
    if chars == 0 {
        return out;
    }
    let tokens = words(trace);
    let total_words = tokens.len();
    let unique_words = {
        let mut sorted = tokens.clone();
        sorted.sort();
        sorted.dedup();
        sorted.len()
    };
    let seg_lens: Vec<f64> = segments.iter().map(|s| s.text.chars().count() as f64).collect();
    let sent_lens: Vec<f64> = sentences.iter().map(|s| s.text.chars().count() as f64).collect();
    let sent_count = sentences.len();
    let count_tokens = |set: &[String]| -> f64 {
        tokens.iter().filter(|t| set.iter().any(|m| m == *t)).count() as f64
    };
    let backtrack = count_tokens(&config.backtrack_markers);
    let forward = count_tokens(&config.forward_markers);
    let success_set: Vec<String> = ["correct", "works", "matches", "confirmed", "yes"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let hedge_set: Vec<String> = ["maybe", "perhaps", "might", "possibly"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let certainty_set: Vec<String> = ["clearly", "definitely", "must", "certainly"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let questions = sentences
        .iter()
        .filter(|s| s.text.trim_end().ends_with('?'))
        .count() as f64;
    let code_chars: usize = sentences
        .iter()
        .filter(|s| s.is_code)
        .map(|s| s.text.chars().count())
        .sum();
    let code_blocks = sentences.iter().filter(|s| s.is_code).count() as f64;
    let code_lines: usize = sentences
        .iter()
        .filter(|s| s.is_code)
        .map(|s| s.text.lines().count())
        .sum();
    let digits = trace.chars().filter(|c| c.is_ascii_digit()).count();
    let non_code: Vec<&Sentence> = sentences.iter().filter(|s| !s.is_code).collect();
    let analysis_hits = non_code
        .iter()
        .filter(|s| {
            s.text
                .split(|c: char| !(c.is_alphanumeric() || c == '_'))
                .any(|tok| tok.len() >= 2 && meta.source_identifiers.contains(tok))
        })
        .count();
    let analysis_rate = if non_code.is_empty() {
        0.0
    } else {
        analysis_hits as f64 / non_code.len() as f64
    };
    let mut max_run = 0usize;
    let mut run = 0usize;
    let mut prev: Option<&str> = None;
    for s in sentences {
        let t = s.text.trim();
        if prev == Some(t) {
            run += 1;
        } else {
            run = 1;
            prev = Some(t);
        }
        max_run = max_run.max(run);
    }
    let ellipses = trace.matches("...").count() + trace.matches('\u{2026}').count();

    out[0] = if total_words == 0 { 0.0 } else { unique_words as f64 / total_words as f64 };
    out[1] = (1.0 + chars as f64).ln();
    out[2] = (1.0 + total_words as f64).ln();
    out[3] = segments.len() as f64;
    out[4] = sent_count as f64;
    out[5] = mean(&seg_lens);
    out[6] = seg_lens.iter().copied().fold(0.0, f64::max);
    out[7] = if seg_lens.is_empty() { 0.0 } else { seg_lens.iter().copied().fold(f64::INFINITY, f64::min) };
    out[8] = population_cv(&seg_lens);
    out[9] = population_cv(&sent_lens);
    out[10] = if sent_count == 0 {
        0.0
    } else {
        sentences.iter().map(|s| words(&s.text).len() as f64).sum::<f64>() / sent_count as f64
    };
    out[11] = backtrack;
    out[12] = forward;
    out[13] = (forward + 1.0) / (backtrack + 1.0);
    out[14] = forward / sent_count.max(1) as f64;
    out[15] = backtrack / sent_count.max(1) as f64;
    out[16] = tokens.iter().filter(|t| t.as_str() == "wait").count() as f64;
    out[17] = tokens.iter().filter(|t| t.as_str() == "alternatively").count() as f64;
    out[18] = count_tokens(&success_set);
    out[19] = questions;
    out[20] = questions / sent_count.max(1) as f64;
    out[21] = count_tokens(&hedge_set);
    out[22] = count_tokens(&certainty_set);
    out[23] = code_chars as f64 / chars as f64;
    out[24] = code_blocks;
    out[25] = code_lines as f64;
    out[26] = digits as f64 / chars as f64;
    out[27] = analysis_rate;
    out[28] = max_run as f64;
    out[29] = ellipses as f64;
    out[30] = if meta.final_answer_present { 1.0 } else { 0.0 };
    out[31] = if meta.is_fortran { 1.0 } else { 0.0 };
    out[32] = meta.source_lang_id as f64;
    out[33] = meta.target_lang_id as f64;
    out[34] = meta.family_id as f64;
    out[35] = meta.composition_level as f64;
    out
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Eight label-distribution features: per-label rates in canonical label
/// order, then the natural-log entropy of the distribution.
pub fn label_features(labels: &[LabelValue]) -> [f64; 8] {
    let mut out = [0.0f64; 8];
    if labels.is_empty() {
        return out;
    }
    let total = labels.len() as f64;
    for (i, value) in LABEL_VALUES.iter().enumerate() {
        let count = labels.iter().filter(|l| *l == value).count() as f64;
        out[i] = count / total;
    }
    out[7] = -out[..7]
        .iter()
        .filter(|&&r| r > 0.0)
        .map(|&r| r * r.ln())
        .sum::<f64>();
    out
}

/// Concatenate all groups in schema order. Arity is checked against the
/// schema so a drifted sub-extractor fails loudly.
pub fn extract(
    trace_id: &str,
    trace: &str,
    segments: &[Segment],
    sentences: &[Sentence],
    tree: &ThoughtTree,
    labels: &[LabelValue],
    meta: &ProblemMeta,
    config: &TraceFeatureConfig,
) -> Result<FeatureVector, FeatureError> {
    let schema = FeatureSchema::canonical();
    let mut values = Vec::with_capacity(schema.len());
    values.extend_from_slice(&tree_features(tree));
    values.extend_from_slice(&trace_features(trace, segments, sentences, meta, config));
    values.extend_from_slice(&label_features(labels));
    if values.len() != schema.len() {
        return Err(FeatureError::SchemaMismatch {
            expected: schema.len(),
            got: values.len(),
        });
    }
    Ok(FeatureVector {
        trace_id: trace_id.to_string(),
        values,
    })
}

//! The canonical 54-feature schema.
//!
//! Order and grouping are frozen: 10 tree-structure features, then 36
//! trace-level features (9 of which form the length group and 5 the meta
//! group), then 8 label-distribution features. The non-tree slice is
//! therefore exactly 44 columns. The schema ships as a sidecar JSON file
//! whose hash is pinned into trained models, so extractor and classifier
//! can never drift apart silently.

use serde::{Deserialize, Serialize};

/// Feature group tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Tree,
    Length,
    Trace,
    Meta,
    Label,
}

/// One schema entry: name, group, and a direction hint. Direction `+1`
/// marks features whose elevation signals failure risk, `-1` the reverse,
/// `0` no prior; the intervention watch list defaults to the nonzero ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: &'static str,
    pub group: Group,
    pub direction: i8,
}

const fn def(name: &'static str, group: Group, direction: i8) -> FeatureDef {
    FeatureDef {
        name,
        group,
        direction,
    }
}

/// All 54 features in schema order.
pub const FEATURE_DEFS: [FeatureDef; 54] = [
    // Tree structure (10).
    def("max_depth", Group::Tree, 0),
    def("total_nodes", Group::Tree, 1),
    def("internal_nodes", Group::Tree, 1),
    def("leaf_nodes", Group::Tree, 0),
    def("avg_branching_factor", Group::Tree, 0),
    def("root_branching_factor", Group::Tree, 0),
    def("depth_per_nodes", Group::Tree, 0),
    def("internal_per_depth", Group::Tree, 0),
    def("mean_nodes_per_depth", Group::Tree, 0),
    def("leaf_depth_cv", Group::Tree, 0),
    // Raw trace (36 entries in total counting length and meta).
    def("lex_diversity", Group::Trace, -1),
    def("log_length", Group::Length, 1),
    def("log_word_count", Group::Length, 1),
    def("total_segments", Group::Trace, 1),
    def("total_sentences", Group::Length, 0),
    def("avg_segment_len", Group::Length, 0),
    def("max_segment_len", Group::Length, 0),
    def("min_segment_len", Group::Length, 0),
    def("seg_len_cv", Group::Length, 0),
    def("sent_len_cv", Group::Length, 0),
    def("avg_sentence_len", Group::Length, 0),
    def("backtrack_count", Group::Trace, 0),
    def("forward_count", Group::Trace, 0),
    def("fw_bt_ratio", Group::Trace, 0),
    def("forward_rate", Group::Trace, 0),
    def("backtrack_rate", Group::Trace, 0),
    def("wait_count", Group::Trace, 0),
    def("alternatively_count", Group::Trace, 0),
    def("success_words", Group::Trace, 0),
    def("question_count", Group::Trace, 0),
    def("question_rate", Group::Trace, 0),
    def("hedge_word_count", Group::Trace, 0),
    def("certainty_word_count", Group::Trace, 0),
    def("code_density", Group::Trace, 0),
    def("code_block_count", Group::Trace, 0),
    def("code_line_count", Group::Trace, 0),
    def("digit_density", Group::Trace, 0),
    def("analysis_rate", Group::Trace, 0),
    def("repetition_max_run", Group::Trace, 0),
    def("ellipsis_count", Group::Trace, 0),
    def("final_answer_present", Group::Trace, 0),
    def("is_fortran", Group::Meta, 0),
    def("source_lang_id", Group::Meta, 0),
    def("target_lang_id", Group::Meta, 0),
    def("task_family_id", Group::Meta, 0),
    def("composition_level", Group::Meta, 0),
    // Label distribution (8).
    def("code_analysis", Group::Label, 0),
    def("mental_execution", Group::Label, 0),
    def("test_generation", Group::Label, 0),
    def("bug_fixing", Group::Label, 0),
    def("language_mapping", Group::Label, 0),
    def("high_level_plan", Group::Label, 0),
    def("empty", Group::Label, 0),
    def("label_entropy", Group::Label, 0),
];

/// The fixed feature schema. A thin wrapper over [`FEATURE_DEFS`] with
/// lookup helpers and the sidecar serialization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSchema;

impl Default for FeatureSchema {
    fn default() -> Self {
        Self::canonical()
    }
}

impl FeatureSchema {
    pub fn canonical() -> Self {
        FeatureSchema
    }

    pub fn len(&self) -> usize {
        FEATURE_DEFS.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn defs(&self) -> &'static [FeatureDef] {
        &FEATURE_DEFS
    }

    pub fn names(&self) -> Vec<&'static str> {
        FEATURE_DEFS.iter().map(|d| d.name).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        FEATURE_DEFS.iter().position(|d| d.name == name)
    }

    pub fn group_indices(&self, group: Group) -> Vec<usize> {
        FEATURE_DEFS
            .iter()
            .enumerate()
            .filter(|(_, d)| d.group == group)
            .map(|(i, _)| i)
            .collect()
    }

    /// Everything except the tree group: 44 columns.
    pub fn non_tree_indices(&self) -> Vec<usize> {
        FEATURE_DEFS
            .iter()
            .enumerate()
            .filter(|(_, d)| d.group != Group::Tree)
            .map(|(i, _)| i)
            .collect()
    }

    /// Content hash of the schema, pinned into trained models.
    pub fn hash(&self) -> String {
        let canon: String = FEATURE_DEFS
            .iter()
            .map(|d| format!("{}:{:?}:{};", d.name, d.group, d.direction))
            .collect();
        crate::hashing::content_hash(&[canon.as_bytes()], 16)
    }

    /// Sidecar document for `schema.json`.
    pub fn sidecar(&self) -> SchemaSidecar {
        SchemaSidecar {
            version: 1,
            hash: self.hash(),
            features: FEATURE_DEFS
                .iter()
                .map(|d| SidecarFeature {
                    name: d.name.to_string(),
                    group: d.group,
                    direction: d.direction,
                })
                .collect(),
            language_ids: [
                ("none", 0u32),
                ("python", 1),
                ("java", 2),
                ("c", 3),
                ("cpp", 4),
                ("csharp", 5),
                ("fortran", 6),
                ("go", 7),
                ("rust", 8),
                ("javascript", 9),
            ]
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect(),
            family_ids: [("none", 0u32), ("execution", 1), ("fill_in_middle", 2), ("translation", 3)]
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SidecarFeature {
    pub name: String,
    pub group: Group,
    pub direction: i8,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaSidecar {
    pub version: u32,
    pub hash: String,
    pub features: Vec<SidecarFeature>,
    pub language_ids: std::collections::BTreeMap<String, u32>,
    pub family_ids: std::collections::BTreeMap<String, u32>,
}

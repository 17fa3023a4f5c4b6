//! Thought-trees: semantic labels per segment plus incremental attachment
//! of segments into a rooted tree.
//!
//! An annotation model proposes, for each new segment, a parent node and a
//! relation from {Continuation, Contrast, Rephrase}. Anything invalid is
//! repaired deterministically (most recent node, Continuation) rather than
//! surfaced, so the builder is total even against adversarial output — the
//! repair is recorded on the node. Labels never influence attachment; they
//! only feed the classifier later.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use crate::gateway::{CompletionSource, GatewayError, Mode, ModelEndpoint};
use crate::segment::Segment;

/// Functional role of one reasoning step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelValue {
    CodeAnalysis,
    MentalExecution,
    TestGeneration,
    BugFixing,
    LanguageMapping,
    HighLevelPlan,
    Empty,
}

/// All label values in canonical order.
pub const LABEL_VALUES: [LabelValue; 7] = [
    LabelValue::CodeAnalysis,
    LabelValue::MentalExecution,
    LabelValue::TestGeneration,
    LabelValue::BugFixing,
    LabelValue::LanguageMapping,
    LabelValue::HighLevelPlan,
    LabelValue::Empty,
];

impl LabelValue {
    pub fn as_str(&self) -> &'static str {
        match self {
            LabelValue::CodeAnalysis => "code_analysis",
            LabelValue::MentalExecution => "mental_execution",
            LabelValue::TestGeneration => "test_generation",
            LabelValue::BugFixing => "bug_fixing",
            LabelValue::LanguageMapping => "language_mapping",
            LabelValue::HighLevelPlan => "high_level_plan",
            LabelValue::Empty => "empty",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        LABEL_VALUES.iter().copied().find(|v| v.as_str() == text.trim())
    }
}

/// Where a label came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Model,
    Fallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticLabel {
    pub value: LabelValue,
    pub provenance: Provenance,
}

/// Edge relation between a node and its parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Continuation,
    Contrast,
    Rephrase,
}

impl Relation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Relation::Continuation => "Continuation",
            Relation::Contrast => "Contrast",
            Relation::Rephrase => "Rephrase",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text.trim().to_ascii_lowercase().as_str() {
            "continuation" => Some(Relation::Continuation),
            "contrast" => Some(Relation::Contrast),
            "rephrase" => Some(Relation::Rephrase),
            _ => None,
        }
    }
}

/// Sentinel id of the implicit root.
pub const ROOT_ID: &str = "root";

/// One attached segment. Every non-root node carries a relation to its
/// parent, including nodes attached directly under the root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThoughtNode {
    /// `thought_k` where k is the segment index.
    pub id: String,
    pub segment_index: usize,
    pub label: SemanticLabel,
    /// `root` or `thought_j` with j < k.
    pub parent_id: String,
    pub relation: Relation,
    /// True when the annotator's proposal was invalid and repaired.
    pub repaired: bool,
}

/// Rooted tree over all segments of one trace.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ThoughtTree {
    pub nodes: Vec<ThoughtNode>,
    /// Segment texts aligned to nodes; carried for context rendering.
    pub texts: Vec<String>,
}

impl ThoughtTree {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_id(index: usize) -> String {
        format!("thought_{index}")
    }

    fn contains_id(&self, id: &str) -> bool {
        id == ROOT_ID || self.nodes.iter().any(|n| n.id == id)
    }

    /// Depth of node `index`; children of root have depth 1.
    pub fn depth_of(&self, index: usize) -> usize {
        let mut depth = 1usize;
        let mut parent = self.nodes[index].parent_id.as_str();
        while parent != ROOT_ID {
            let j: usize = parent
                .strip_prefix("thought_")
                .and_then(|s| s.parse().ok())
                .expect("validated parent id");
            depth += 1;
            parent = self.nodes[j].parent_id.as_str();
        }
        depth
    }

    /// Children indices of `id`, in insertion order.
    pub fn children_of(&self, id: &str) -> Vec<usize> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.parent_id == id)
            .map(|(i, _)| i)
            .collect()
    }

    /// Structural invariants: ids are positional, parents exist and
    /// precede their children, every node is reachable from the root.
    pub fn validate(&self) -> Result<(), String> {
        for (k, node) in self.nodes.iter().enumerate() {
            if node.id != Self::node_id(k) || node.segment_index != k {
                return Err(format!("node {k} has id {} / index {}", node.id, node.segment_index));
            }
            if node.parent_id != ROOT_ID {
                let Some(j) = node
                    .parent_id
                    .strip_prefix("thought_")
                    .and_then(|s| s.parse::<usize>().ok())
                else {
                    return Err(format!("node {k} has malformed parent {}", node.parent_id));
                };
                if j >= k {
                    return Err(format!("node {k} has non-preceding parent {j}"));
                }
            }
        }
        if self.texts.len() != self.nodes.len() {
            return Err("texts not aligned to nodes".into());
        }
        Ok(())
    }
}

/// Prompt for classifying one segment.
const LABEL_PROMPT: &str = "You are an expert in reasoning trace analysis.\n\nClassify the following reasoning segment into one of these strategies:\n\n- \"code_analysis\": actively analyzing what the original code does\n- \"mental_execution\": simulating input/output behavior\n- \"test_generation\": proposing test cases or edge conditions\n- \"bug_fixing\": describing or fixing syntax/logic errors\n- \"language_mapping\": translating code constructs across languages\n- \"high_level_plan\": outlining the approach or plan without executing it\n- \"empty\": no meaningful reasoning\n\nOnly return a JSON like:\n```json\n{\"type\": \"...\"}\n```\nSegment:\n";

/// Prompt for attaching one segment to the tree so far.
const ATTACH_PROMPT_HEAD: &str = "You are building a reasoning tree from segments of thought. Each segment expresses a part of a reasoning process.\n\nHere are previous thoughts in the structure:\n";

const ATTACH_PROMPT_TAIL: &str = "\n\nDecide where to attach this new segment in the tree. You must use one of the three relation types defined below.\n\nRelation Categories\n- Continuation: The new segment directly builds upon the parent's idea. It can do this by:\n    1. Adding more details, explanations, or examples.\n    2. Providing evidence or justification.\n    3. Refining or clarifying the parent's point.\n- Contrast: The new segment proposes a different, alternative, or opposing idea compared to the parent node.\n- Rephrase: The new segment expresses the exact same core idea as the parent but in different words.\n\nReturn your answer in this JSON format:\n```json\n{\n  \"parent_id\": \"thought_X\",  // id of parent thought, or \"root\" for top-level\n  \"relation\": \"Continuation\" | \"Contrast\" | \"Rephrase\"\n}";

/// Render the labeling prompt for a segment.
pub fn label_prompt(segment_text: &str) -> String {
    format!("{LABEL_PROMPT}{segment_text}")
}

/// Render the attachment prompt for a segment given the tree so far.
pub fn attach_prompt(tree: &ThoughtTree, segment_text: &str) -> String {
    format!(
        "{ATTACH_PROMPT_HEAD}{}\n\nNow consider this new segment:\n```\n{}\n```{ATTACH_PROMPT_TAIL}",
        render_tree_context(tree, false),
        segment_text
    )
}

/// Depth-indented outline of the tree, one line per node; the literal
/// `(empty)` for a tree with no nodes. Labels are included only when
/// requested — the attachment prompt shows thoughts alone.
pub fn render_tree_context(tree: &ThoughtTree, include_labels: bool) -> String {
    if tree.nodes.is_empty() {
        return "(empty)".to_string();
    }
    let mut lines = Vec::with_capacity(tree.nodes.len());
    let mut stack: Vec<(usize, usize)> = tree
        .children_of(ROOT_ID)
        .into_iter()
        .rev()
        .map(|i| (i, 0usize))
        .collect();
    while let Some((index, depth)) = stack.pop() {
        let node = &tree.nodes[index];
        let flat = tree.texts[index].replace(['\n', '\r'], " ");
        let truncated: String = flat.chars().take(200).collect();
        let mark = if flat.chars().count() > 200 { "..." } else { "" };
        let label = if include_labels {
            format!("({}) ", node.label.value.as_str())
        } else {
            String::new()
        };
        lines.push(format!(
            "{}- {} [{}] {}{}{}",
            "  ".repeat(depth),
            node.id,
            node.relation.as_str(),
            label,
            truncated,
            mark
        ));
        for child in tree.children_of(&node.id).into_iter().rev() {
            stack.push((child, depth + 1));
        }
    }
    lines.join("\n")
}

/// Who answers labeling and attachment prompts.
pub enum Annotator<'a> {
    Model {
        source: &'a dyn CompletionSource,
        endpoint: &'a ModelEndpoint,
        mode: Mode,
    },
    /// Deterministic keyword rules only; never calls a model.
    Fallback,
}

impl<'a> Annotator<'a> {
    fn ask(&self, prompt: &str) -> Option<String> {
        match self {
            Annotator::Fallback => None,
            Annotator::Model {
                source,
                endpoint,
                mode,
            } => match source.complete(endpoint, prompt, *mode) {
                Ok(completion) => Some(completion.final_answer),
                Err(GatewayError::FixtureMiss { key }) => {
                    log::warn!("annotation fixture miss for key {key}; using fallback");
                    None
                }
                Err(e) => {
                    log::warn!("annotation call failed ({e}); using fallback");
                    None
                }
            },
        }
    }
}

/// Pull the last fenced block out of a response (annotation models often
/// echo the prompt's schema first), strip trailing commas, parse as JSON.
/// Falls back to parsing the whole trimmed text.
fn extract_json(response: &str) -> Option<serde_json::Value> {
    let mut last_block: Option<String> = None;
    let mut rest = response;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        let Some(close) = after.find("```") else { break };
        let mut body = &after[..close];
        if let Some(stripped) = body.strip_prefix("json") {
            body = stripped;
        }
        last_block = Some(body.trim().to_string());
        rest = &after[close + 3..];
    }
    let candidate = last_block.unwrap_or_else(|| response.trim().to_string());
    let cleaned = strip_trailing_commas(&candidate);
    serde_json::from_str(&cleaned).ok()
}

fn strip_trailing_commas(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let chars: Vec<char> = text.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        if c == ',' {
            let next = chars[i + 1..].iter().find(|ch| !ch.is_whitespace());
            if matches!(next, Some('}') | Some(']')) {
                continue;
            }
        }
        out.push(c);
    }
    out
}

/// Keyword fallback for labels, applied in rank order. Total and
/// deterministic; `source_idents` lets the code-analysis rule check
/// whether the segment talks about the problem's identifiers.
pub fn fallback_label(segment_text: &str, source_idents: &BTreeSet<String>) -> LabelValue {
    let lower = segment_text.to_lowercase();
    let has_concrete_value =
        segment_text.chars().any(|c| c.is_ascii_digit()) || segment_text.contains('\'') || segment_text.contains('"');
    if lower.contains("translate") || lower.contains("maps to") {
        return LabelValue::LanguageMapping;
    }
    if lower.contains("fix") || lower.contains("bug") || lower.contains("error is") {
        return LabelValue::BugFixing;
    }
    if lower.contains("test case") || lower.contains("edge case") {
        return LabelValue::TestGeneration;
    }
    if (lower.contains("= ") || lower.contains("returns") || lower.contains("step")) && has_concrete_value {
        return LabelValue::MentalExecution;
    }
    let mentions_source_ident = segment_text
        .split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .any(|token| token.len() >= 2 && source_idents.contains(token));
    if mentions_source_ident {
        return LabelValue::CodeAnalysis;
    }
    let first_then = lower
        .find("first")
        .map(|at| lower[at..].contains("then"))
        .unwrap_or(false);
    if lower.contains("plan") || lower.contains("approach") || first_then {
        return LabelValue::HighLevelPlan;
    }
    LabelValue::Empty
}

/// Label one segment. Whitespace-only segments shortcut to `empty`;
/// out-of-vocabulary or unparseable model output falls back to the
/// keyword rules with `provenance = Fallback`.
pub fn label_segment(
    segment: &Segment,
    annotator: &Annotator<'_>,
    source_idents: &BTreeSet<String>,
) -> SemanticLabel {
    if segment.text.trim().is_empty() {
        return SemanticLabel {
            value: LabelValue::Empty,
            provenance: Provenance::Fallback,
        };
    }
    if let Some(response) = annotator.ask(&label_prompt(&segment.text)) {
        if let Some(json) = extract_json(&response) {
            if let Some(value) = json.get("type").and_then(|v| v.as_str()).and_then(LabelValue::parse)
            {
                return SemanticLabel {
                    value,
                    provenance: Provenance::Model,
                };
            }
        }
    }
    SemanticLabel {
        value: fallback_label(&segment.text, source_idents),
        provenance: Provenance::Fallback,
    }
}

/// Result of one attachment decision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attachment {
    pub parent_id: String,
    pub relation: Relation,
    pub repaired: bool,
}

/// Decide where the next segment attaches. Valid annotator proposals are
/// used as-is; anything else repairs to (most recent node, Continuation).
pub fn attach(tree: &ThoughtTree, segment: &Segment, annotator: &Annotator<'_>) -> Attachment {
    assert_eq!(
        segment.index,
        tree.nodes.len(),
        "segments must attach in order"
    );
    let repaired_parent = tree
        .nodes
        .last()
        .map(|n| n.id.clone())
        .unwrap_or_else(|| ROOT_ID.to_string());
    let repair = Attachment {
        parent_id: repaired_parent,
        relation: Relation::Continuation,
        repaired: true,
    };
    let Some(response) = annotator.ask(&attach_prompt(tree, &segment.text)) else {
        return repair;
    };
    let Some(json) = extract_json(&response) else {
        return repair;
    };
    let parent = json.get("parent_id").and_then(|v| v.as_str());
    let relation = json
        .get("relation")
        .and_then(|v| v.as_str())
        .and_then(Relation::parse);
    match (parent, relation) {
        (Some(parent), Some(relation)) if tree.contains_id(parent) => Attachment {
            parent_id: parent.to_string(),
            relation,
            repaired: false,
        },
        _ => repair,
    }
}

/// Fold [`attach`] over all segments, labeling each node.
pub fn build_tree(
    segments: &[Segment],
    annotator: &Annotator<'_>,
    source_idents: &BTreeSet<String>,
) -> ThoughtTree {
    let mut tree = ThoughtTree::default();
    for segment in segments {
        let attachment = attach(&tree, segment, annotator);
        let label = label_segment(segment, annotator, source_idents);
        tree.nodes.push(ThoughtNode {
            id: ThoughtTree::node_id(segment.index),
            segment_index: segment.index,
            label,
            parent_id: attachment.parent_id,
            relation: attachment.relation,
            repaired: attachment.repaired,
        });
        tree.texts.push(segment.text.clone());
        debug_assert!(tree.validate().is_ok());
    }
    tree
}

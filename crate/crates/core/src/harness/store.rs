//! Artifact records and JSONL file handling.
//!
//! Every file is written whole, compact one-object-per-line, via a temp
//! file renamed into place. Field order is fixed by the struct
//! definitions, which is what makes replay runs byte-comparable.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::forge::{BaseProblem, ComposedProblem, Family, OracleSpec, TypeSig};
use crate::hashing::content_hash;
use crate::intervene::Trigger;
use crate::tree::{LabelValue, Provenance, Relation, ThoughtTree};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("I/O at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad record in {path} line {line}: {detail}")]
    BadRecord {
        path: String,
        line: usize,
        detail: String,
    },
}

/// One line of `problems.jsonl`: the composed problem joined with its
/// constituents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemRecord {
    pub id: String,
    pub family: Family,
    pub level: usize,
    pub chain: Vec<String>,
    pub subject_language: String,
    pub source_texts: Vec<String>,
    pub signature: TypeSig,
    pub oracle: OracleSpec,
    pub prompt: String,
}

impl ProblemRecord {
    pub fn assemble(problem: &ComposedProblem, chain: &[&BaseProblem]) -> Self {
        let signature = TypeSig {
            inputs: chain[0].signature.inputs.clone(),
            output: chain[chain.len() - 1].signature.output.clone(),
        };
        Self {
            id: problem.id.clone(),
            family: chain[0].family,
            level: problem.level,
            chain: problem.chain.clone(),
            subject_language: chain[0].subject_language.clone(),
            source_texts: chain.iter().map(|p| p.source_text.clone()).collect(),
            signature,
            oracle: problem.oracle.clone(),
            prompt: problem.prompt_text.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timestamps {
    pub generated_unix: u64,
}

/// One model trace at rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub trace_id: String,
    pub problem_id: String,
    pub model_id: String,
    pub level: usize,
    pub raw_text: String,
    pub reasoning_trace: String,
    pub final_answer: String,
    pub truncated: bool,
    pub timestamps: Timestamps,
}

impl TraceRecord {
    /// Content-addressed id over (problem, model, raw text).
    pub fn derive_id(problem_id: &str, model_id: &str, raw_text: &str) -> String {
        content_hash(
            &[problem_id.as_bytes(), model_id.as_bytes(), raw_text.as_bytes()],
            16,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub trace_id: String,
    pub index: usize,
    pub text: String,
    pub span: [usize; 2],
    pub starts_with_marker: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeNodeRecord {
    pub id: String,
    pub segment_index: usize,
    pub label: LabelValue,
    pub label_provenance: Provenance,
    pub parent_id: String,
    pub relation: Relation,
    pub repaired: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeRecord {
    pub trace_id: String,
    pub nodes: Vec<TreeNodeRecord>,
}

impl TreeRecord {
    pub fn from_tree(trace_id: &str, tree: &ThoughtTree) -> Self {
        Self {
            trace_id: trace_id.to_string(),
            nodes: tree
                .nodes
                .iter()
                .map(|n| TreeNodeRecord {
                    id: n.id.clone(),
                    segment_index: n.segment_index,
                    label: n.label.value,
                    label_provenance: n.label.provenance,
                    parent_id: n.parent_id.clone(),
                    relation: n.relation,
                    repaired: n.repaired,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub trace_id: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagRecord {
    pub trace_id: String,
    pub flagged: bool,
    pub triggers: Vec<Trigger>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub trace_id: String,
    pub problem_id: String,
    pub level: usize,
    pub status: super::judge::VerdictStatus,
    pub error_kind: Option<super::judge::ErrorKind>,
    pub detail: String,
}

/// Write records as JSONL, atomically.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), StoreError> {
    let io_err = |source: std::io::Error| StoreError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err)?;
    }
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut file = fs::File::create(&tmp).map_err(io_err)?;
        for record in records {
            let line = serde_json::to_string(record).expect("records serialize");
            file.write_all(line.as_bytes()).map_err(io_err)?;
            file.write_all(b"\n").map_err(io_err)?;
        }
    }
    fs::rename(&tmp, path).map_err(io_err)
}

/// Read a JSONL file fully.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let body = fs::read_to_string(path).map_err(|source| StoreError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| StoreError::BadRecord {
            path: path.display().to_string(),
            line: i + 1,
            detail: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Write arbitrary text (CSV, JSON documents) atomically.
pub fn write_text(path: &Path, body: &str) -> Result<(), StoreError> {
    let io_err = |source: std::io::Error| StoreError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, body).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forge::compose;
    use crate::harness::corpus;

    #[test]
    fn problem_records_keep_the_declared_key_order() {
        let bases = vec![corpus::fig_skip_spaces(), corpus::fig_char_shift_freq()];
        let refs: Vec<&crate::forge::BaseProblem> = bases.iter().collect();
        let record = ProblemRecord::assemble(&compose(&refs).unwrap(), &refs);
        let json = serde_json::to_string(&record).unwrap();
        let id_at = json.find("\"id\"").unwrap();
        let family_at = json.find("\"family\"").unwrap();
        let prompt_at = json.find("\"prompt\"").unwrap();
        assert!(id_at < family_at && family_at < prompt_at);
        assert_eq!(record.signature.to_string(), "(str) -> list[int]");
    }

    #[test]
    fn jsonl_round_trips_and_is_line_oriented() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.jsonl");
        let records = vec![
            FeatureRecord { trace_id: "a".into(), values: vec![1.0, 0.5] },
            FeatureRecord { trace_id: "b".into(), values: vec![] },
        ];
        write_jsonl(&path, &records).unwrap();
        let body = std::fs::read_to_string(&path).unwrap();
        assert_eq!(body.lines().count(), 2);
        let back: Vec<FeatureRecord> = read_jsonl(&path).unwrap();
        assert_eq!(back, records);
    }

    #[test]
    fn trace_ids_are_content_addressed() {
        let a = TraceRecord::derive_id("p", "m", "text");
        let b = TraceRecord::derive_id("p", "m", "text");
        let c = TraceRecord::derive_id("p", "m", "other");
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}

//! Execution-based correctness judges, one per task family.
//!
//! Every judged answer yields exactly one [`Verdict`]; judges never hang
//! past the oracle timeout plus a small grace. Errors (timeout, crash,
//! unparseable answer, missing toolchain) are verdicts, not panics, and
//! count as incorrect downstream.

use serde::{Deserialize, Serialize};
use std::time::Duration;

use super::corpus::BLANK_MARKER;
use super::literal::{literals_equal, parse_literal};
use super::pyexec::{self, PyError};
use crate::forge::{BaseProblem, ComposedProblem, Family};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictStatus {
    Pass,
    Fail,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Timeout,
    Runtime,
    Parse,
    ToolchainMissing,
}

/// Outcome of judging one answer. `error_kind` is present exactly when
/// `status == Error`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub status: VerdictStatus,
    pub error_kind: Option<ErrorKind>,
    pub detail: String,
}

impl Verdict {
    pub fn pass() -> Self {
        Self {
            status: VerdictStatus::Pass,
            error_kind: None,
            detail: String::new(),
        }
    }

    pub fn fail(detail: impl Into<String>) -> Self {
        Self {
            status: VerdictStatus::Fail,
            error_kind: None,
            detail: detail.into(),
        }
    }

    pub fn error(kind: ErrorKind, detail: impl Into<String>) -> Self {
        Self {
            status: VerdictStatus::Error,
            error_kind: Some(kind),
            detail: detail.into(),
        }
    }

    pub fn passed(&self) -> bool {
        self.status == VerdictStatus::Pass
    }

    fn from_py_error(e: PyError) -> Self {
        match e {
            PyError::ToolchainMissing { detail } => Verdict::error(ErrorKind::ToolchainMissing, detail),
            PyError::Timeout { seconds } => {
                Verdict::error(ErrorKind::Timeout, format!("timed out after {seconds:.1} s"))
            }
            PyError::Runtime { status, stderr } => {
                Verdict::error(ErrorKind::Runtime, format!("exit {status}: {stderr}"))
            }
            PyError::Protocol { detail } => Verdict::error(ErrorKind::Runtime, detail),
        }
    }
}

fn oracle_timeout(problem: &ComposedProblem) -> Duration {
    Duration::from_secs_f64(problem.oracle.timeout_secs.max(0.1))
}

/// Compute the reference outputs for every oracle test input of a chain.
/// Callers cache the result into `oracle.expected` so repeated judging
/// stays in-process.
pub fn resolve_expected(
    problem: &ComposedProblem,
    chain: &[&BaseProblem],
) -> Result<Vec<String>, PyError> {
    let timeout = oracle_timeout(problem);
    let family = chain[0].family;
    match family {
        Family::Execution => {
            let sources: Vec<&str> = chain.iter().map(|p| p.source_text.as_str()).collect();
            pyexec::run_value_chain(&sources, &problem.oracle.test_inputs, timeout)
        }
        Family::FillInMiddle => {
            let spliced: Vec<String> = chain
                .iter()
                .map(|p| splice_blank(p, &p.metadata_value("reference_completion")))
                .collect();
            let refs: Vec<&str> = spliced.iter().map(|s| s.as_str()).collect();
            pyexec::run_stdio_chain(&refs, &problem.oracle.test_inputs, timeout)
        }
        Family::Translation => {
            let sources: Vec<&str> = chain.iter().map(|p| p.source_text.as_str()).collect();
            pyexec::run_stdio_chain(&sources, &problem.oracle.test_inputs, timeout)
        }
    }
}

fn expected_outputs(
    problem: &ComposedProblem,
    chain: &[&BaseProblem],
) -> Result<Vec<String>, Verdict> {
    if let Some(expected) = &problem.oracle.expected {
        return Ok(expected.clone());
    }
    resolve_expected(problem, chain).map_err(Verdict::from_py_error)
}

/// Judge an execution-family answer: parse both sides as data literals and
/// compare canonically.
pub fn judge_execution(
    problem: &ComposedProblem,
    chain: &[&BaseProblem],
    predicted_literal: &str,
) -> Verdict {
    debug_assert_eq!(chain[0].family, Family::Execution);
    let expected = match expected_outputs(problem, chain) {
        Ok(e) => e,
        Err(verdict) => return verdict,
    };
    let Some(expected_first) = expected.first() else {
        return Verdict::error(ErrorKind::Runtime, "oracle produced no reference output");
    };
    if parse_literal(predicted_literal.trim()).is_err() {
        return Verdict::error(
            ErrorKind::Parse,
            format!("prediction is not a data literal: {predicted_literal:.60}"),
        );
    }
    match literals_equal(predicted_literal.trim(), expected_first) {
        Ok(true) => Verdict::pass(),
        Ok(false) => Verdict::fail(format!("expected {expected_first}")),
        Err(e) => Verdict::error(ErrorKind::Runtime, format!("reference literal invalid: {e}")),
    }
}

/// Substitute a completion into a program's blank.
pub fn splice_blank(problem: &BaseProblem, completion: &str) -> String {
    problem
        .source_text
        .replace(BLANK_MARKER, completion.trim())
}

/// Decode a fill-in-the-middle answer into per-slot completions.
///
/// Level 1 answers are the raw completion text. Higher levels are a JSON
/// object with `program1`..`programN` keys (optionally fenced).
pub fn decode_fim_answer(answer: &str, level: usize) -> Result<Vec<String>, String> {
    if level == 1 {
        return Ok(vec![answer.trim().to_string()]);
    }
    let candidate = last_fenced_or_raw(answer);
    let value: serde_json::Value =
        serde_json::from_str(candidate.trim()).map_err(|e| format!("answer is not JSON: {e}"))?;
    let mut out = Vec::with_capacity(level);
    for i in 1..=level {
        let key = format!("program{i}");
        let completion = value
            .get(&key)
            .and_then(|v| v.as_str())
            .ok_or_else(|| format!("answer missing '{key}' key"))?;
        out.push(completion.to_string());
    }
    Ok(out)
}

fn last_fenced_or_raw(text: &str) -> &str {
    let mut last = None;
    let mut offset = 0;
    while let Some(open) = text[offset..].find("```") {
        let start = offset + open + 3;
        let Some(close) = text[start..].find("```") else { break };
        last = Some(&text[start..start + close]);
        offset = start + close + 3;
    }
    match last {
        Some(block) => block.trim_start_matches("json").trim(),
        None => text.trim(),
    }
}

/// Judge a fill-in-the-middle answer: splice each completion into its
/// program, run the programs as a stdin → stdout pipe, and compare
/// whitespace token sequences against the reference outputs.
pub fn judge_fim(
    problem: &ComposedProblem,
    chain: &[&BaseProblem],
    completions: &[String],
) -> Verdict {
    debug_assert_eq!(chain[0].family, Family::FillInMiddle);
    if completions.len() != chain.len() {
        return Verdict::error(
            ErrorKind::Parse,
            format!("{} completions for {} blanks", completions.len(), chain.len()),
        );
    }
    let expected = match expected_outputs(problem, chain) {
        Ok(e) => e,
        Err(verdict) => return verdict,
    };
    let timeout = oracle_timeout(problem);
    let spliced: Vec<String> = chain
        .iter()
        .zip(completions)
        .map(|(p, c)| splice_blank(p, c))
        .collect();
    // Stage-by-stage so a crash names the failing program.
    let mut current: Vec<String> = problem.oracle.test_inputs.clone();
    for (stage, program) in spliced.iter().enumerate() {
        match pyexec::run_stdio_stage(program, &current, timeout) {
            Ok(outputs) => current = outputs,
            Err(PyError::Timeout { seconds }) => {
                return Verdict::error(
                    ErrorKind::Timeout,
                    format!("stage {} timed out after {seconds:.1} s", stage + 1),
                )
            }
            Err(PyError::Runtime { status, stderr }) => {
                return Verdict::error(
                    ErrorKind::Runtime,
                    format!("stage {} crashed (exit {status}): {stderr}", stage + 1),
                )
            }
            Err(e) => return Verdict::from_py_error(e),
        }
    }
    compare_token_streams(&current, &expected)
}

/// Judge a translation answer: run the translated program on the oracle
/// inputs and compare stdout token streams against the reference chain.
pub fn judge_translation(
    problem: &ComposedProblem,
    chain: &[&BaseProblem],
    translated_source: &str,
) -> Verdict {
    debug_assert_eq!(chain[0].family, Family::Translation);
    let target = chain[0].metadata_value("target_language");
    if !pyexec::toolchain_available(&target) {
        return Verdict::error(
            ErrorKind::ToolchainMissing,
            format!("no toolchain for target language '{target}'"),
        );
    }
    if !pyexec::toolchain_available(&chain[0].subject_language) {
        return Verdict::error(
            ErrorKind::ToolchainMissing,
            format!("no toolchain for subject language '{}'", chain[0].subject_language),
        );
    }
    if translated_source.trim().is_empty() {
        return Verdict::error(ErrorKind::Runtime, "empty translation");
    }
    let expected = match expected_outputs(problem, chain) {
        Ok(e) => e,
        Err(verdict) => return verdict,
    };
    let timeout = oracle_timeout(problem);
    match pyexec::run_stdio_stage(translated_source, &problem.oracle.test_inputs, timeout) {
        Ok(outputs) => compare_token_streams(&outputs, &expected),
        Err(e) => Verdict::from_py_error(e),
    }
}

fn compare_token_streams(got: &[String], expected: &[String]) -> Verdict {
    for (i, (g, e)) in got.iter().zip(expected).enumerate() {
        let g_tokens: Vec<&str> = g.split_whitespace().collect();
        let e_tokens: Vec<&str> = e.split_whitespace().collect();
        if g_tokens != e_tokens {
            return Verdict::fail(format!(
                "test {} tokens differ: got [{}], expected [{}]",
                i,
                g_tokens.join(" "),
                e_tokens.join(" ")
            ));
        }
    }
    Verdict::pass()
}

/// Fraction of passing verdicts; errors count as non-pass; `None` on an
/// empty list.
pub fn pass_at_1(verdicts: &[Verdict]) -> Option<f64> {
    if verdicts.is_empty() {
        return None;
    }
    let passed = verdicts.iter().filter(|v| v.passed()).count();
    Some(passed as f64 / verdicts.len() as f64)
}

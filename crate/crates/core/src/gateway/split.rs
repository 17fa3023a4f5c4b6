//! Splitting raw model output into (reasoning trace, final answer).

use serde::{Deserialize, Serialize};

use super::GatewayError;

/// Delimiter policy for separating reasoning from the answer.
///
/// The usual shape is a marker pair such as `<think>…</think>` wrapped
/// around the trace. Some providers return the trace in a structured
/// response field instead; naming it in `reasoning_field` makes the
/// gateway fold that field back into marker form, so one split path
/// serves both. When an open marker never closes, the default is to treat
/// the rest of the text as trace (`unbalanced_rest_as_trace`), because
/// that is exactly what a token-limited reasoning model produces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPolicy {
    pub open: String,
    pub close: String,
    pub unbalanced_rest_as_trace: bool,
    pub reasoning_field: Option<String>,
}

impl Default for SplitPolicy {
    fn default() -> Self {
        Self::markers("<think>", "</think>")
    }
}

impl SplitPolicy {
    pub fn markers(open: &str, close: &str) -> Self {
        Self {
            open: open.to_string(),
            close: close.to_string(),
            unbalanced_rest_as_trace: true,
            reasoning_field: None,
        }
    }

    pub fn strict(mut self) -> Self {
        self.unbalanced_rest_as_trace = false;
        self
    }

    pub fn with_reasoning_field(mut self, field: &str) -> Self {
        self.reasoning_field = Some(field.to_string());
        self
    }

    /// Canonical inverse of [`split_reasoning`] for single-span texts.
    pub fn recombine(&self, trace: &str, answer: &str) -> String {
        if trace.is_empty() {
            answer.to_string()
        } else {
            format!("{}{}{}{}", self.open, trace, self.close, answer)
        }
    }
}

/// Split `raw_text` into (trace, answer).
///
/// The trace is the in-order concatenation of all delimited spans; the
/// answer is everything else with the delimiters removed. Text without any
/// open marker yields an empty trace and the full text as answer.
pub fn split_reasoning(raw_text: &str, policy: &SplitPolicy) -> Result<(String, String), GatewayError> {
    let mut trace = String::new();
    let mut answer = String::new();
    let mut rest = raw_text;
    let mut offset = 0usize;
    loop {
        match rest.find(&policy.open) {
            None => {
                answer.push_str(rest);
                break;
            }
            Some(open_at) => {
                answer.push_str(&rest[..open_at]);
                let body_start = open_at + policy.open.len();
                let body = &rest[body_start..];
                match body.find(&policy.close) {
                    Some(close_at) => {
                        trace.push_str(&body[..close_at]);
                        let consumed = body_start + close_at + policy.close.len();
                        offset += consumed;
                        rest = &rest[consumed..];
                    }
                    None => {
                        if policy.unbalanced_rest_as_trace {
                            trace.push_str(body);
                            break;
                        }
                        return Err(GatewayError::UnbalancedDelimiters {
                            open_at: offset + open_at,
                        });
                    }
                }
            }
        }
    }
    Ok((trace, answer))
}

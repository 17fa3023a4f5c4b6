//! A deterministic scripted model, used as the transport behind record
//! mode so the whole pipeline can run offline.
//!
//! Given the composed problems, it precomputes every correct answer with
//! the reference oracles, then answers task prompts correctly for a
//! hash-chosen ~70% of problems and with systematically wrong or broken
//! answers otherwise. Incorrect traces are written with the structural
//! tells the classifier is supposed to pick up: more segments, heavy
//! backtracking, repetition runs, and longer bodies. Annotation prompts
//! are answered with valid JSON most of the time and garbage occasionally,
//! so repair and fallback paths stay exercised end to end.

use std::collections::BTreeMap;

use super::judge::resolve_expected;
use super::pyexec::PyError;
use crate::forge::{BaseProblem, ComposedProblem, Family};
use crate::gateway::{ChatRequest, ChatResponse, Transport, TransportFault};
use crate::hashing::mix_seed;
use crate::intervene::GUIDANCE_BLOCK;

/// Answer script for one task prompt.
#[derive(Debug, Clone)]
struct PromptScript {
    correct: String,
    wrongs: Vec<String>,
}

/// Scripted transport; see the module docs.
pub struct SyntheticModel {
    scripts: BTreeMap<String, PromptScript>,
    salt: u64,
}

fn prompt_hash(text: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in text.trim_end().bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

impl SyntheticModel {
    /// Script answers for exactly the problems a pipeline config will run.
    pub fn for_pipeline(
        config: &super::pipeline::PipelineConfig,
        salt: u64,
    ) -> Result<Self, Box<dyn std::error::Error>> {
        let problems = super::pipeline::composed_problem_set(config)?;
        Ok(Self::for_problems(&problems, salt)?)
    }

    /// Build the answer script for a problem set. Runs the reference
    /// oracles once per problem, so a Python interpreter must be present.
    pub fn for_problems(
        problems: &[(ComposedProblem, Vec<BaseProblem>)],
        salt: u64,
    ) -> Result<Self, PyError> {
        let mut scripts = BTreeMap::new();
        for (problem, chain) in problems {
            let refs: Vec<&BaseProblem> = chain.iter().collect();
            let script = match chain[0].family {
                Family::Execution => {
                    let expected = resolve_expected(problem, &refs)?;
                    PromptScript {
                        correct: expected[0].clone(),
                        wrongs: vec![
                            "0".into(),
                            "[]".into(),
                            "'incorrect'".into(),
                            "not a literal ==".into(),
                        ],
                    }
                }
                Family::FillInMiddle => {
                    let completions: Vec<String> = chain
                        .iter()
                        .map(|p| p.metadata_value("reference_completion"))
                        .collect();
                    let correct = if chain.len() == 1 {
                        completions[0].clone()
                    } else {
                        let mut obj = serde_json::Map::new();
                        for (i, c) in completions.iter().enumerate() {
                            obj.insert(format!("program{}", i + 1), serde_json::Value::String(c.clone()));
                        }
                        serde_json::Value::Object(obj).to_string()
                    };
                    let wrongs = if chain.len() == 1 {
                        vec!["print(99999)".into(), "raise ValueError('nope')".into()]
                    } else {
                        vec![
                            {
                                let mut obj = serde_json::Map::new();
                                for i in 1..=chain.len() {
                                    obj.insert(
                                        format!("program{i}"),
                                        serde_json::Value::String("print(99999)".into()),
                                    );
                                }
                                serde_json::Value::Object(obj).to_string()
                            },
                            // Missing final program key: a parse-error verdict.
                            "{\"program1\": \"print(1)\"}".into(),
                        ]
                    };
                    PromptScript { correct, wrongs }
                }
                Family::Translation => {
                    let correct = if chain.len() == 1 {
                        chain[0].source_text.clone()
                    } else {
                        let sources: Vec<&str> = chain.iter().map(|p| p.source_text.as_str()).collect();
                        merge_translation_sources(&sources)
                            .unwrap_or_else(|| chain[0].source_text.clone())
                    };
                    PromptScript {
                        correct,
                        wrongs: vec!["import sys\nsys.stdin.read()\n".into(), "".into()],
                    }
                }
            };
            scripts.insert(problem.prompt_text.trim_end().to_string(), script);
        }
        Ok(Self { scripts, salt })
    }

    fn respond(&self, prompt: &str) -> (String, &'static str) {
        if prompt.starts_with("You are an expert in reasoning trace analysis.") {
            return (self.label_response(prompt), "stop");
        }
        if prompt.starts_with("You are building a reasoning tree") {
            return (self.attach_response(prompt), "stop");
        }
        if let Some(base) = prompt.strip_prefix(&format!("{GUIDANCE_BLOCK}\n\n")) {
            return (self.task_response(base, true), "stop");
        }
        let h = prompt_hash(prompt);
        if self.scripts.contains_key(prompt.trim_end()) && mix_seed(h, self.salt ^ 0x7ee) % 17 == 0 {
            // Rare truncated trace: the think block never closes.
            let trace = synth_trace(h, false);
            let cut = trace.len() * 2 / 3;
            let cut = trace
                .char_indices()
                .map(|(i, _)| i)
                .take_while(|&i| i <= cut)
                .last()
                .unwrap_or(0);
            return (format!("<think>{}", &trace[..cut]), "length");
        }
        (self.task_response(prompt, false), "stop")
    }

    fn task_response(&self, prompt: &str, is_retry: bool) -> String {
        let Some(script) = self.scripts.get(prompt.trim_end()) else {
            return "I cannot help with that.".to_string();
        };
        let h = prompt_hash(prompt);
        let correct = if is_retry {
            // Retries succeed more often than chance but not always.
            mix_seed(h, self.salt ^ 0x9d1) % 5 < 3
        } else {
            mix_seed(h, self.salt) % 10 < 7
        };
        let answer = if correct {
            script.correct.clone()
        } else {
            let pick = (mix_seed(h, self.salt ^ 0x33) as usize) % script.wrongs.len();
            script.wrongs[pick].clone()
        };
        let trace = if is_retry {
            synth_retry_trace(h)
        } else {
            synth_trace(h, correct)
        };
        format!("<think>{trace}</think>{answer}")
    }

    fn label_response(&self, prompt: &str) -> String {
        let segment = prompt.split("Segment:\n").nth(1).unwrap_or("");
        let h = prompt_hash(segment);
        if h % 11 == 0 {
            return "That segment looks like reasoning to me.".to_string();
        }
        let lower = segment.to_lowercase();
        let label = if lower.contains("translate") {
            "language_mapping"
        } else if lower.contains("bug") || lower.contains("fix") {
            "bug_fixing"
        } else if lower.contains("test") {
            "test_generation"
        } else if lower.contains("compute") || lower.contains("step") || lower.contains("returns") {
            "mental_execution"
        } else if lower.contains("plan") || lower.contains("approach") {
            "high_level_plan"
        } else if lower.contains("def ") || lower.contains("function") || lower.contains("loop") {
            "code_analysis"
        } else {
            "empty"
        };
        format!("```json\n{{\"type\": \"{label}\"}}\n```")
    }

    fn attach_response(&self, prompt: &str) -> String {
        let n = prompt.matches("- thought_").count();
        let segment = prompt
            .split("Now consider this new segment:\n```\n")
            .nth(1)
            .and_then(|s| s.split("\n```").next())
            .unwrap_or("");
        if n == 0 {
            return "```json\n{\"parent_id\": \"root\", \"relation\": \"Continuation\"}\n```".into();
        }
        let h = mix_seed(prompt_hash(segment), n as u64);
        let (parent, relation) = match h % 12 {
            0..=5 => (format!("thought_{}", n - 1), "Continuation"),
            6 | 7 => (format!("thought_{}", n.saturating_sub(2)), "Contrast"),
            8 => ("root".to_string(), "Continuation"),
            9 => (format!("thought_{}", n - 1), "Rephrase"),
            10 => return "attach it wherever seems right".into(),
            _ => ("thought_999".to_string(), "Continuation"),
        };
        format!("```json\n{{\"parent_id\": \"{parent}\", \"relation\": \"{relation}\"}}\n```")
    }
}

impl Transport for SyntheticModel {
    fn post_chat(
        &self,
        _base_url: &str,
        request: &ChatRequest,
        _bearer: Option<&str>,
    ) -> Result<ChatResponse, TransportFault> {
        let prompt = request
            .messages
            .first()
            .map(|m| m.content.as_str())
            .unwrap_or("");
        let (content, finish) = self.respond(prompt);
        Ok(ChatResponse {
            prompt_tokens: prompt.len() as u64 / 4,
            output_tokens: content.len() as u64 / 4,
            reasoning: None,
            finish_reason: finish.to_string(),
            content,
        })
    }
}

/// Merge a chain of transform-style programs into one program that reads
/// once, applies every transform in order, and prints once.
pub fn merge_translation_sources(sources: &[&str]) -> Option<String> {
    let mut blocks = Vec::with_capacity(sources.len());
    for (i, src) in sources.iter().enumerate() {
        let start = src.find("def transform")?;
        let end = src.find("\ndef main")?;
        blocks.push(src[start..end].replace("def transform(", &format!("def transform_{}(", i + 1)));
    }
    let mut applies = String::new();
    for i in 1..=sources.len() {
        applies.push_str(&format!("    values = transform_{i}(values)\n"));
    }
    Some(format!(
        "import sys\n\n{}\n\ndef main():\n    values = [int(tok) for tok in sys.stdin.read().split()]\n{}    print(' '.join(str(v) for v in values))\n\nmain()\n",
        blocks.join("\n"),
        applies
    ))
}

const CORRECT_CHUNKS: [&str; 6] = [
    "We are given the composed task and the concrete input, and the plan is to walk the stages in order once.",
    "So the first stage maps the raw input to an intermediate value; tracking it step by step gives a single concrete result to carry forward.",
    "Now apply the next stage to that value: the loop visits each element once and the running state stays small, so the outcome is direct.",
    "Therefore the intermediate value is confirmed, and it matches what the type signature promises for this position in the chain.",
    "Note that the edge conditions (empty input, repeated items) do not trigger here, so no special casing is needed.",
    "So the final value is assembled and it is consistent; the answer can be written out exactly as computed.",
];

const WRONG_CHUNKS: [&str; 7] = [
    "We are given a composed task, but the stages interact in a way that is hard to keep in working memory, so let me restart the walk.",
    "Wait, the indices are off: element 0 maps to position 1 only when the earlier stage already consumed the header, so let me do it again carefully from the start.",
    "Wait let me redo this step by step: index 0 gives 9, index 1 gives 7, index 2 maybe gives 4, although the earlier count said 5, which possibly contradicts the state.",
    "Alternatively, perhaps the loop is inclusive of the bound and the accumulated value is larger; but then the earlier stage result must be recomputed too.",
    "Hmm. Alternatively, perhaps the code is correct and the error is not there.",
    "Wait, but the loop is up to the length of the digits, so the carry must propagate once more; let me count each element in reverse order again.",
    "The intermediate list might be [9, 7, 4, 1] or possibly [9, 7, 5, 1] depending on the off-by-one; it is hard to confirm either without rerunning everything.",
];

const CODE_CHUNK: &str = "Here is the relevant piece:\n```\nfor v in values:\n    total += v\n```\nSo the accumulator grows monotonically.";

/// Deterministic trace body. Incorrect traces are longer, restart often,
/// and fall into repetition; correct ones stay compact and forward-moving.
fn synth_trace(h: u64, correct: bool) -> String {
    let mut parts: Vec<String> = Vec::new();
    if correct {
        let n = 3 + (h % 3) as usize;
        for i in 0..n {
            parts.push(CORRECT_CHUNKS[(h as usize + i * 3) % CORRECT_CHUNKS.len()].to_string());
        }
        if h % 5 < 2 {
            parts.push(CODE_CHUNK.to_string());
        }
        parts.push("So the result checks out and matches the expected shape, yes.".to_string());
    } else {
        let n = 7 + (h % 5) as usize;
        for i in 0..n {
            parts.push(WRONG_CHUNKS[(h as usize + i) % WRONG_CHUNKS.len()].to_string());
        }
        let loops = 2 + (h % 3) as usize;
        for _ in 0..loops {
            parts.push("Hmm. Alternatively, perhaps the code is correct and the error is not there.".to_string());
        }
        if h % 3 == 0 {
            parts.push(CODE_CHUNK.to_string());
        }
        parts.push("Okay, time is running short, so settling on the best guess available...".to_string());
    }
    parts.join("\n")
}

fn synth_retry_trace(h: u64) -> String {
    let mut parts = vec![
        "Keeping this concise: simulate the stages once with the given input.".to_string(),
    ];
    parts.push(CORRECT_CHUNKS[(h % 6) as usize].to_string());
    parts.push("So the compact pass yields the final value directly.".to_string());
    parts.join("\n")
}

/// Resolve oracle expectations for a set of composed problems (used both
/// by the scripted model and by pipeline pre-resolution).
pub fn resolve_all_expected(
    problems: &mut [(ComposedProblem, Vec<BaseProblem>)],
) -> Result<(), PyError> {
    for (problem, chain) in problems.iter_mut() {
        if problem.oracle.expected.is_none() {
            let refs: Vec<&BaseProblem> = chain.iter().collect();
            let expected = resolve_expected(problem, &refs)?;
            problem.oracle.expected = Some(expected);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forge::compose;
    use crate::harness::corpus;
    use crate::harness::judge::{judge_translation, VerdictStatus};

    #[test]
    fn merged_translation_behaves_like_the_chain() {
        let bases = corpus::translation_problems();
        let chain: Vec<&BaseProblem> = bases.iter().take(2).collect();
        let problem = compose(&chain).unwrap();
        let sources: Vec<&str> = chain.iter().map(|p| p.source_text.as_str()).collect();
        let merged = merge_translation_sources(&sources).unwrap();
        let verdict = judge_translation(&problem, &chain, &merged);
        assert_eq!(verdict.status, VerdictStatus::Pass, "{verdict:?}");
    }

    #[test]
    fn scripted_answers_are_deterministic() {
        let bases = vec![corpus::fig_skip_spaces(), corpus::fig_char_shift_freq()];
        let refs: Vec<&BaseProblem> = bases.iter().collect();
        let problem = compose(&refs).unwrap();
        let entries = vec![(problem.clone(), bases.clone())];
        let model_a = SyntheticModel::for_problems(&entries, 1).unwrap();
        let model_b = SyntheticModel::for_problems(&entries, 1).unwrap();
        let (a, _) = model_a.respond(&problem.prompt_text);
        let (b, _) = model_b.respond(&problem.prompt_text);
        assert_eq!(a, b);
        assert!(a.starts_with("<think>"));
    }

    #[test]
    fn label_and_attach_responses_parse_as_fenced_json_mostly() {
        let model = SyntheticModel { scripts: Default::default(), salt: 0 };
        let label = model.label_response(
            "You are an expert in reasoning trace analysis.\n...\nSegment:\nlet me compute step by step: 3",
        );
        assert!(label.contains("mental_execution"));
        let attach = model.attach_response(
            "You are building a reasoning tree...\nHere are previous thoughts in the structure:\n(empty)\n\nNow consider this new segment:\n```\nhello\n```\nrest",
        );
        assert!(attach.contains("\"root\""));
    }
}

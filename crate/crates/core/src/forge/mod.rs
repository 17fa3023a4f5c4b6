//! Typed base problems and the composition engine that chains them into
//! higher-level tasks.
//!
//! A composed problem is an ordered chain of base problems whose signatures
//! line up output-to-input. Its oracle runs the constituents in sequence,
//! so correctness stays automatically checkable at every level. A length-1
//! chain is the identity wrapper for a base problem, which keeps every
//! downstream consumer on a single problem type.

mod sig;
pub mod templates;

pub use sig::{compatible, parse_signature, TypeSig, TypeTerm};
pub use templates::{render_prompt, TEMPLATE_SET_DEEPSEEK, TEMPLATE_SET_DEFAULT};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

use crate::hashing::{content_hash, mix_seed};

/// Task families. Chains never mix families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Execution,
    FillInMiddle,
    Translation,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Execution => write!(f, "execution"),
            Family::FillInMiddle => write!(f, "fill_in_middle"),
            Family::Translation => write!(f, "translation"),
        }
    }
}

/// How a judge decides correctness for a problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    /// Compare the predicted data literal against the reference output.
    LiteralEquality,
    /// Run the program(s) on stdin tests and compare stdout token streams.
    StdioTests,
    /// Build and run a translated program, compare against the reference.
    CompileRunCompare,
}

/// Executable correctness oracle attached to a problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    pub mode: OracleMode,
    /// Serialized inputs: data literals for execution problems, raw stdin
    /// text for stdio problems.
    pub test_inputs: Vec<String>,
    /// Precomputed reference outputs, filled in lazily by the harness.
    pub expected: Option<Vec<String>>,
    pub timeout_secs: f64,
}

impl OracleSpec {
    pub fn new(mode: OracleMode, test_inputs: Vec<String>, timeout_secs: f64) -> Result<Self, ForgeError> {
        let spec = Self {
            mode,
            test_inputs,
            expected: None,
            timeout_secs,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ForgeError> {
        if self.timeout_secs <= 0.0 {
            return Err(ForgeError::BadOracle {
                detail: "timeout must be positive".into(),
            });
        }
        if self.mode == OracleMode::StdioTests && self.test_inputs.is_empty() {
            return Err(ForgeError::BadOracle {
                detail: "stdio oracles need at least one test input".into(),
            });
        }
        Ok(())
    }
}

/// A single typed coding task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseProblem {
    /// Content hash over family, language, and source text.
    pub id: String,
    pub family: Family,
    /// Language of the program text itself; data, not implementation.
    pub subject_language: String,
    pub source_text: String,
    pub signature: TypeSig,
    pub oracle: OracleSpec,
    /// Free-form metadata: problem descriptions, translation language pair,
    /// reference completions for fill-in-the-middle blanks.
    pub metadata: BTreeMap<String, String>,
}

impl BaseProblem {
    /// Build a problem, parsing the signature from the source.
    pub fn new(
        family: Family,
        subject_language: &str,
        source_text: &str,
        oracle: OracleSpec,
        metadata: BTreeMap<String, String>,
    ) -> Result<Self, ForgeError> {
        if source_text.trim().is_empty() {
            return Err(ForgeError::BadSource {
                detail: "source text is empty".into(),
            });
        }
        let signature = parse_signature(source_text, family)?;
        oracle.validate()?;
        // Metadata participates in the hash: two blanked-out programs can
        // share source text and differ only in their reference completion.
        let metadata_canon: String = metadata
            .iter()
            .map(|(k, v)| format!("{k}\u{1}{v}\u{2}"))
            .collect();
        let id = content_hash(
            &[
                family.to_string().as_bytes(),
                subject_language.as_bytes(),
                source_text.as_bytes(),
                metadata_canon.as_bytes(),
            ],
            16,
        );
        Ok(Self {
            id,
            family,
            subject_language: subject_language.to_string(),
            source_text: source_text.to_string(),
            signature,
            oracle,
            metadata,
        })
    }

    pub fn metadata_value(&self, key: &str) -> String {
        self.metadata.get(key).cloned().unwrap_or_default()
    }

    /// Description block used in fill-in-the-middle prompts.
    pub(crate) fn described_source(&self) -> String {
        let description = self.metadata_value("description");
        if description.is_empty() {
            self.source_text.clone()
        } else {
            format!("{}\n{}", description, self.source_text)
        }
    }
}

/// A compatibility-checked chain of base problems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComposedProblem {
    pub id: String,
    /// Constituent problem ids, head first.
    pub chain: Vec<String>,
    /// Composition level; equals the chain length.
    pub level: usize,
    pub prompt_text: String,
    pub oracle: OracleSpec,
}

/// Errors from parsing, composing, and rendering problems.
#[derive(Debug, thiserror::Error)]
pub enum ForgeError {
    #[error("execution function '{function}' lacks an annotation for {what}")]
    MissingAnnotation { function: String, what: String },
    #[error("malformed type term '{term}': {detail}")]
    MalformedTerm { term: String, detail: String },
    #[error("bad problem source: {detail}")]
    BadSource { detail: String },
    #[error("bad oracle spec: {detail}")]
    BadOracle { detail: String },
    #[error("incompatible chain at position {position}: {producer} !-> {consumer} ({detail})")]
    IncompatibleChain {
        position: usize,
        producer: String,
        consumer: String,
        detail: String,
    },
    #[error("problem '{id}' appears more than once in the chain")]
    DuplicateInChain { id: String },
    #[error("no prompt template for family {family} at level {level} in set '{template_set}'")]
    UnknownTemplate {
        family: Family,
        level: usize,
        template_set: String,
    },
    #[error("compose requires a nonempty chain")]
    EmptyChain,
}

/// Check every adjacency constraint of a chain and report the first
/// violation. Families must match, ids must be unique, and each consumer
/// must be unary with an input equal to its producer's output.
pub fn check_chain(chain: &[&BaseProblem]) -> Result<(), ForgeError> {
    if chain.is_empty() {
        return Err(ForgeError::EmptyChain);
    }
    for (i, problem) in chain.iter().enumerate() {
        if chain[..i].iter().any(|p| p.id == problem.id) {
            return Err(ForgeError::DuplicateInChain {
                id: problem.id.clone(),
            });
        }
    }
    for (i, pair) in chain.windows(2).enumerate() {
        let (producer, consumer) = (pair[0], pair[1]);
        if producer.family != consumer.family {
            return Err(ForgeError::IncompatibleChain {
                position: i,
                producer: producer.id.clone(),
                consumer: consumer.id.clone(),
                detail: format!(
                    "family {} cannot chain into family {}",
                    producer.family, consumer.family
                ),
            });
        }
        if !compatible(&producer.signature, &consumer.signature) {
            return Err(ForgeError::IncompatibleChain {
                position: i,
                producer: producer.id.clone(),
                consumer: consumer.id.clone(),
                detail: format!(
                    "{} does not feed {}",
                    producer.signature, consumer.signature
                ),
            });
        }
    }
    Ok(())
}

/// Compose a chain into a single problem with an inherited oracle.
///
/// The chain oracle keeps the head's test inputs (the chain is driven end
/// to end from the head's input) and budgets the sum of the constituent
/// timeouts. Level-1 chains keep the base problem's oracle untouched.
pub fn compose(chain: &[&BaseProblem]) -> Result<ComposedProblem, ForgeError> {
    compose_with_templates(chain, TEMPLATE_SET_DEFAULT)
}

/// [`compose`] with an explicit template set for prompt rendering.
pub fn compose_with_templates(
    chain: &[&BaseProblem],
    template_set: &str,
) -> Result<ComposedProblem, ForgeError> {
    check_chain(chain)?;
    let prompt_text = render_prompt(chain, template_set)?;
    let head = chain[0];
    let oracle = if chain.len() == 1 {
        head.oracle.clone()
    } else {
        OracleSpec {
            mode: head.oracle.mode,
            test_inputs: head.oracle.test_inputs.clone(),
            expected: None,
            timeout_secs: chain.iter().map(|p| p.oracle.timeout_secs).sum(),
        }
    };
    let mut hash_parts: Vec<&[u8]> = vec![b"chain"];
    for problem in chain {
        hash_parts.push(problem.id.as_bytes());
    }
    Ok(ComposedProblem {
        id: content_hash(&hash_parts, 16),
        chain: chain.iter().map(|p| p.id.clone()).collect(),
        level: chain.len(),
        prompt_text,
        oracle,
    })
}

/// Enumerate up to `limit` valid chains of exactly `level` distinct pool
/// members, deterministically for a given seed.
///
/// The search walks candidate extensions in seed-shuffled order at every
/// position, so the result is a reproducible sample of the valid-chain
/// space without exhaustive enumeration. Chains that have no template for
/// their level (execution or fill-in-the-middle beyond level 3) are
/// skipped rather than reported as errors.
pub fn enumerate_compositions(
    pool: &[BaseProblem],
    level: usize,
    limit: usize,
    seed: u64,
) -> Vec<ComposedProblem> {
    assert!(level >= 1, "level must be at least 1");
    let mut results = Vec::new();
    if limit == 0 || pool.is_empty() {
        return results;
    }
    let mut order: Vec<usize> = (0..pool.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, level as u64));
    order.shuffle(&mut rng);

    let mut stack: Vec<usize> = Vec::with_capacity(level);
    extend_chains(pool, level, limit, seed, &order, &mut stack, &mut results);
    results
}

fn extend_chains(
    pool: &[BaseProblem],
    level: usize,
    limit: usize,
    seed: u64,
    head_order: &[usize],
    stack: &mut Vec<usize>,
    results: &mut Vec<ComposedProblem>,
) {
    if results.len() >= limit {
        return;
    }
    if stack.len() == level {
        let chain: Vec<&BaseProblem> = stack.iter().map(|&i| &pool[i]).collect();
        if let Ok(composed) = compose(&chain) {
            results.push(composed);
        }
        return;
    }
    let candidates: Vec<usize> = if stack.is_empty() {
        head_order.to_vec()
    } else {
        let tail = &pool[*stack.last().unwrap()];
        let mut next: Vec<usize> = (0..pool.len())
            .filter(|i| !stack.contains(i))
            .filter(|&i| {
                pool[i].family == tail.family && compatible(&tail.signature, &pool[i].signature)
            })
            .collect();
        // Deterministic shuffle keyed by the partial chain, so sibling
        // branches draw independent orders.
        let mut salt = mix_seed(seed, stack.len() as u64);
        for &idx in stack.iter() {
            salt = mix_seed(salt, idx as u64 + 1);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(salt);
        next.shuffle(&mut rng);
        next
    };
    for idx in candidates {
        if results.len() >= limit {
            return;
        }
        if stack.contains(&idx) {
            continue;
        }
        stack.push(idx);
        extend_chains(pool, level, limit, seed, head_order, stack, results);
        stack.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::corpus;

    fn fig_pair() -> (BaseProblem, BaseProblem) {
        (corpus::fig_skip_spaces(), corpus::fig_char_shift_freq())
    }

    #[test]
    fn composes_the_compatible_pair() {
        let (f1, f2) = fig_pair();
        let composed = compose(&[&f1, &f2]).unwrap();
        assert_eq!(composed.level, 2);
        assert_eq!(composed.chain, vec![f1.id.clone(), f2.id.clone()]);
        assert!(composed.prompt_text.contains("assert f2(f1("));
    }

    #[test]
    fn level_one_wrapper_keeps_the_base_oracle() {
        let (f1, _) = fig_pair();
        let composed = compose(&[&f1]).unwrap();
        assert_eq!(composed.level, 1);
        assert_eq!(composed.oracle, f1.oracle);
    }

    #[test]
    fn incompatible_order_names_the_pair() {
        let (f1, f2) = fig_pair();
        match compose(&[&f2, &f1]).unwrap_err() {
            ForgeError::IncompatibleChain {
                position,
                producer,
                consumer,
                ..
            } => {
                assert_eq!(position, 0);
                assert_eq!(producer, f2.id);
                assert_eq!(consumer, f1.id);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn duplicates_are_rejected() {
        let (f1, _) = fig_pair();
        assert!(matches!(
            compose(&[&f1, &f1]).unwrap_err(),
            ForgeError::DuplicateInChain { .. }
        ));
    }

    #[test]
    fn families_never_mix() {
        let (f1, _) = fig_pair();
        let fim = corpus::fim_problems().remove(0);
        let err = check_chain(&[&f1, &fim]).unwrap_err();
        assert!(matches!(err, ForgeError::IncompatibleChain { .. }));
    }

    #[test]
    fn level_two_over_the_figure_pool_finds_only_one_chain() {
        // Exhaustive check: of the two ordered pairs over {f1, f2}, only
        // f1 -> f2 is type-compatible, so enumeration must return exactly it.
        let (f1, f2) = fig_pair();
        let pool = vec![f1.clone(), f2.clone()];
        let found = enumerate_compositions(&pool, 2, 10, 123);
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].chain, vec![f1.id, f2.id]);
    }

    #[test]
    fn level_one_enumeration_wraps_the_pool_in_seeded_order() {
        let pool = corpus::execution_problems();
        let found = enumerate_compositions(&pool, 1, pool.len(), 7);
        assert_eq!(found.len(), pool.len());
        let mut ids: Vec<String> = found.iter().map(|c| c.chain[0].clone()).collect();
        ids.sort();
        let mut expected: Vec<String> = pool.iter().map(|p| p.id.clone()).collect();
        expected.sort();
        assert_eq!(ids, expected);
        // Seeded: a different seed gives a different order somewhere.
        let again = enumerate_compositions(&pool, 1, pool.len(), 7);
        assert_eq!(
            found.iter().map(|c| c.id.clone()).collect::<Vec<_>>(),
            again.iter().map(|c| c.id.clone()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn limit_zero_yields_nothing() {
        let pool = corpus::execution_problems();
        assert!(enumerate_compositions(&pool, 1, 0, 7).is_empty());
    }

    #[test]
    fn enumeration_is_a_pure_function_of_inputs() {
        let pool = corpus::mini_corpus();
        for level in 1..=3 {
            let a = enumerate_compositions(&pool, level, 25, 99);
            let b = enumerate_compositions(&pool, level, 25, 99);
            assert_eq!(
                a.iter().map(|c| c.id.clone()).collect::<Vec<_>>(),
                b.iter().map(|c| c.id.clone()).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn every_enumerated_chain_recomposes_cleanly() {
        let pool = corpus::mini_corpus();
        let by_id: std::collections::BTreeMap<&str, &BaseProblem> =
            pool.iter().map(|p| (p.id.as_str(), p)).collect();
        for level in 1..=3 {
            for composed in enumerate_compositions(&pool, level, 40, 5) {
                let chain: Vec<&BaseProblem> =
                    composed.chain.iter().map(|id| by_id[id.as_str()]).collect();
                check_chain(&chain).unwrap();
                let again = compose(&chain).unwrap();
                assert_eq!(again.id, composed.id);
            }
        }
    }
}

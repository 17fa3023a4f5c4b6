//! Z-score flagging of structurally anomalous traces and the guided retry
//! loop around it.
//!
//! Statistics are fit over the feature vectors of *correct* traces from a
//! named reference population. A trace is flagged when at least one
//! watched feature deviates past the threshold in its risk direction
//! (one-sided: `dir * z > theta`), and flagged problems get exactly one
//! retry with a guidance block prepended to the prompt.

use serde::{Deserialize, Serialize};

use crate::features::{FeatureSchema, FeatureVector};
use crate::gateway::{CompletionSource, GatewayError, Mode, ModelEndpoint};

/// Per-feature mean and population standard deviation of correct traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub population: String,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub count: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum InterveneError {
    #[error("reference population is empty")]
    EmptyPopulation,
    #[error("schema mismatch: stats cover {expected} features, vector has {got}")]
    SchemaMismatch { expected: usize, got: usize },
    #[error("watched feature '{name}' is not in the schema")]
    UnknownFeatureName { name: String },
    #[error("prompt already carries the guidance block")]
    AlreadyAugmented,
}

/// Fit per-feature mean and population std (ddof = 0). Zero deviations are
/// kept as-is and guarded at z-score time.
pub fn fit_stats(
    population: &str,
    correct: &[&FeatureVector],
) -> Result<FeatureStats, InterveneError> {
    if correct.is_empty() {
        return Err(InterveneError::EmptyPopulation);
    }
    let d = correct[0].values.len();
    let n = correct.len() as f64;
    let mut mean = vec![0.0; d];
    for v in correct {
        if v.values.len() != d {
            return Err(InterveneError::SchemaMismatch {
                expected: d,
                got: v.values.len(),
            });
        }
        for (j, value) in v.values.iter().enumerate() {
            mean[j] += value;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut std = vec![0.0; d];
    for v in correct {
        for (j, value) in v.values.iter().enumerate() {
            std[j] += (value - mean[j]).powi(2);
        }
    }
    for s in &mut std {
        *s = (*s / n).sqrt();
    }
    Ok(FeatureStats {
        population: population.to_string(),
        mean,
        std,
        count: correct.len(),
    })
}

/// z_j = (x_j - mean_j) / std_j, with z_j = 0 wherever std_j = 0.
pub fn z_scores(x: &FeatureVector, stats: &FeatureStats) -> Result<Vec<f64>, InterveneError> {
    if x.values.len() != stats.mean.len() {
        return Err(InterveneError::SchemaMismatch {
            expected: stats.mean.len(),
            got: x.values.len(),
        });
    }
    Ok(x.values
        .iter()
        .zip(stats.mean.iter().zip(&stats.std))
        .map(|(&v, (&m, &s))| if s == 0.0 { 0.0 } else { (v - m) / s })
        .collect())
}

/// Watched features with risk directions and the flag threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WatchSpec {
    /// (feature name, direction): +1 flags when z > theta, -1 when
    /// z < -theta.
    pub entries: Vec<(String, i8)>,
    pub theta: f64,
}

impl WatchSpec {
    /// Common predictive features: structure and length up, lexical
    /// diversity down. Threshold 1.96.
    pub fn default_watch(schema: &FeatureSchema) -> Self {
        let entries = schema
            .defs()
            .iter()
            .filter(|d| d.direction != 0)
            .map(|d| (d.name.to_string(), d.direction))
            .collect();
        Self {
            entries,
            theta: 1.96,
        }
    }

    pub fn validate(&self, schema: &FeatureSchema) -> Result<(), InterveneError> {
        for (name, _) in &self.entries {
            if schema.index_of(name).is_none() {
                return Err(InterveneError::UnknownFeatureName { name: name.clone() });
            }
        }
        Ok(())
    }
}

/// One triggering feature of a flagged trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trigger {
    pub feature: String,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagReport {
    pub flagged: bool,
    pub triggers: Vec<Trigger>,
}

/// Flag a vector iff some watched feature satisfies `dir * z > theta`;
/// lists every satisfying feature.
pub fn flag(
    x: &FeatureVector,
    stats: &FeatureStats,
    watch: &WatchSpec,
    schema: &FeatureSchema,
) -> Result<FlagReport, InterveneError> {
    watch.validate(schema)?;
    let z = z_scores(x, stats)?;
    let mut triggers = Vec::new();
    for (name, direction) in &watch.entries {
        let j = schema
            .index_of(name)
            .ok_or_else(|| InterveneError::UnknownFeatureName { name: name.clone() })?;
        if (*direction as f64) * z[j] > watch.theta {
            triggers.push(Trigger {
                feature: name.clone(),
                z: z[j],
            });
        }
    }
    Ok(FlagReport {
        flagged: !triggers.is_empty(),
        triggers,
    })
}

/// The guidance block prepended to retried prompts.
pub const GUIDANCE_BLOCK: &str = "Additional guidance: prior analysis of successful runs on this benchmark suggests your reasoning style on similar problems tends to be more compact than on failed attempts. Keep internal reasoning concise: simulate f on the given input in few steps, avoid redundant backtracking, then output only the literal result as instructed.";

/// Prepend the guidance block to a prompt, separated by one blank line.
/// Augmenting an already-augmented prompt is an error.
pub fn augment_prompt(base_prompt: &str) -> Result<String, InterveneError> {
    if base_prompt.starts_with("Additional guidance:") {
        return Err(InterveneError::AlreadyAugmented);
    }
    if base_prompt.is_empty() {
        return Ok(GUIDANCE_BLOCK.to_string());
    }
    Ok(format!("{GUIDANCE_BLOCK}\n\n{base_prompt}"))
}

/// Retry selection policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterventionMode {
    /// Retry flagged traces that are known-incorrect (study protocol;
    /// requires ground truth).
    OracleFiltered,
    /// Retry every flagged trace (deployment; flags alone decide).
    Blind,
}

/// One flagged trace queued for retry.
#[derive(Debug, Clone)]
pub struct FlaggedCase {
    pub trace_id: String,
    pub problem_id: String,
    pub base_prompt: String,
    /// Ground-truth incorrectness, when known.
    pub truly_incorrect: Option<bool>,
}

/// Outcome of a retry batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionResult {
    pub mode: InterventionMode,
    pub flagged_count: usize,
    pub recovered_count: usize,
    /// recovered / flagged; absent when nothing was flagged.
    pub intervention_pass_at_1: Option<f64>,
    pub retries: Vec<RetryOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryOutcome {
    pub trace_id: String,
    pub problem_id: String,
    pub recovered: bool,
    /// Present when the retry failed outright (gateway or judge error);
    /// such traces count as not recovered.
    pub error: Option<String>,
}

/// Intervention Pass@1 from raw counts.
pub fn intervention_rate(recovered: usize, flagged: usize) -> Option<f64> {
    if flagged == 0 {
        None
    } else {
        Some(recovered as f64 / flagged as f64)
    }
}

/// Retry each selected case once with the augmented prompt and judge the
/// answer. Per-case failures are recorded, never fatal for the batch.
pub fn run_intervention(
    cases: &[FlaggedCase],
    gateway: &dyn CompletionSource,
    endpoint: &ModelEndpoint,
    mode_gateway: Mode,
    mode: InterventionMode,
    judge: &mut dyn FnMut(&str, &str) -> Result<bool, String>,
) -> InterventionResult {
    let selected: Vec<&FlaggedCase> = cases
        .iter()
        .filter(|case| match mode {
            InterventionMode::Blind => true,
            InterventionMode::OracleFiltered => case.truly_incorrect == Some(true),
        })
        .collect();
    let mut retries = Vec::with_capacity(selected.len());
    let mut recovered_count = 0usize;
    for case in &selected {
        let outcome = retry_one(case, gateway, endpoint, mode_gateway, judge);
        if outcome.recovered {
            recovered_count += 1;
        }
        retries.push(outcome);
    }
    InterventionResult {
        mode,
        flagged_count: selected.len(),
        recovered_count,
        intervention_pass_at_1: intervention_rate(recovered_count, selected.len()),
        retries,
    }
}

fn retry_one(
    case: &FlaggedCase,
    gateway: &dyn CompletionSource,
    endpoint: &ModelEndpoint,
    mode_gateway: Mode,
    judge: &mut dyn FnMut(&str, &str) -> Result<bool, String>,
) -> RetryOutcome {
    let fail = |error: String| RetryOutcome {
        trace_id: case.trace_id.clone(),
        problem_id: case.problem_id.clone(),
        recovered: false,
        error: Some(error),
    };
    let prompt = match augment_prompt(&case.base_prompt) {
        Ok(p) => p,
        Err(e) => return fail(e.to_string()),
    };
    let completion = match gateway.complete(endpoint, &prompt, mode_gateway) {
        Ok(c) => c,
        Err(GatewayError::FixtureMiss { key }) => return fail(format!("fixture miss: {key}")),
        Err(e) => return fail(e.to_string()),
    };
    match judge(&case.problem_id, &completion.final_answer) {
        Ok(recovered) => RetryOutcome {
            trace_id: case.trace_id.clone(),
            problem_id: case.problem_id.clone(),
            recovered,
            error: None,
        },
        Err(e) => fail(e),
    }
}

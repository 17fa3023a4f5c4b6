//! Wire client for trace-producing and annotation models.
//!
//! Every completion can be recorded into a [`FixtureStore`] keyed by a
//! stable hash of (endpoint identity, prompt, decoding). Replay mode reads
//! back byte-identical completions and never touches the transport, which
//! keeps the whole downstream pipeline testable offline.

mod fixtures;
mod split;
mod transport;

pub use fixtures::{fixture_key, FixtureStore};
pub use split::{split_reasoning, SplitPolicy};
pub use transport::{ChatMessage, ChatRequest, ChatResponse, HttpTransport, Transport, TransportFault};

use serde::{Deserialize, Serialize};
use std::time::Duration;

/// What an endpoint is used for in the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    TraceGeneration,
    Annotation,
}

/// Decoding parameters sent with every request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub temperature: f64,
    pub max_tokens: u32,
}

/// A reachable model plus its decoding configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEndpoint {
    pub base_url: String,
    pub model_name: String,
    pub decoding: Decoding,
    /// Name of the environment variable holding the bearer token.
    /// `None` means the endpoint needs no auth (local or scripted models).
    pub api_key_env: Option<String>,
    pub role: Role,
}

impl ModelEndpoint {
    pub fn new(
        base_url: &str,
        model_name: &str,
        role: Role,
        temperature: f64,
        max_tokens: u32,
    ) -> Result<Self, GatewayError> {
        if temperature < 0.0 {
            return Err(GatewayError::BadEndpoint {
                detail: "temperature must be nonnegative".into(),
            });
        }
        if max_tokens == 0 {
            return Err(GatewayError::BadEndpoint {
                detail: "max_tokens must be positive".into(),
            });
        }
        Ok(Self {
            base_url: base_url.to_string(),
            model_name: model_name.to_string(),
            decoding: Decoding {
                temperature,
                max_tokens,
            },
            api_key_env: None,
            role,
        })
    }

    /// Annotation endpoints default to temperature 0.2.
    pub fn annotation(base_url: &str, model_name: &str, max_tokens: u32) -> Self {
        Self::new(base_url, model_name, Role::Annotation, 0.2, max_tokens)
            .expect("static arguments are valid")
    }

    pub fn with_api_key_env(mut self, var: &str) -> Self {
        self.api_key_env = Some(var.to_string());
        self
    }
}

/// Why generation stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenCounts {
    pub prompt: u64,
    pub output: u64,
}

/// One model completion, already split into reasoning trace and answer.
///
/// `raw_text` is the recombination of trace and answer under the split
/// policy that produced them: `open + trace + close + answer` when a trace
/// is present, plain `answer` otherwise. `truncated` holds exactly when
/// the model hit its token limit; truncated completions are ordinary data
/// here, not errors, because downstream analysis wants them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub raw_text: String,
    pub reasoning_trace: String,
    pub final_answer: String,
    pub finish_reason: FinishReason,
    pub token_counts: TokenCounts,
    pub truncated: bool,
    /// Unix seconds when the completion was produced; preserved verbatim
    /// on replay so replayed artifacts are byte-stable.
    pub created_unix: u64,
}

impl Completion {
    /// Build from raw text, enforcing `truncated == (finish == Length)`.
    pub fn from_raw(
        raw_text: String,
        policy: &SplitPolicy,
        finish_reason: FinishReason,
        token_counts: TokenCounts,
        created_unix: u64,
    ) -> Result<Self, GatewayError> {
        let (reasoning_trace, final_answer) = split_reasoning(&raw_text, policy)?;
        Ok(Self {
            raw_text,
            reasoning_trace,
            final_answer,
            truncated: finish_reason == FinishReason::Length,
            finish_reason,
            token_counts,
            created_unix,
        })
    }
}

/// How a completion is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Live,
    Record,
    Replay,
}

/// Retry schedule for transient transport failures: full-jitter
/// exponential backoff, 5 attempts of base 1 s doubling by default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackoffConfig {
    pub attempts: u32,
    pub base_secs: f64,
    pub factor: f64,
}

impl Default for BackoffConfig {
    fn default() -> Self {
        Self {
            attempts: 5,
            base_secs: 1.0,
            factor: 2.0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("bad endpoint configuration: {detail}")]
    BadEndpoint { detail: String },
    #[error("environment variable '{var}' for the API key is not set")]
    MissingApiKey { var: String },
    #[error("transport failed after {attempts} attempts: {detail}")]
    TransportError { attempts: u32, detail: String },
    #[error("rate limited (retry after {retry_after_secs:?} s)")]
    RateLimited { retry_after_secs: Option<f64> },
    #[error("no fixture recorded for key {key}")]
    FixtureMiss { key: String },
    #[error("unbalanced reasoning delimiters: open marker at byte {open_at} has no close")]
    UnbalancedDelimiters { open_at: usize },
    #[error("fixture store I/O at {path}: {source}")]
    FixtureIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("fixture at {path} is corrupt: {detail}")]
    FixtureCorrupt { path: String, detail: String },
}

/// The client. Generic over the transport so tests can inject scripted or
/// failing transports; replay mode never calls the transport at all.
pub struct Gateway<T: Transport> {
    transport: T,
    store: FixtureStore,
    policy: SplitPolicy,
    backoff: BackoffConfig,
    /// Bounded request parallelism for batch completion.
    pub max_in_flight: usize,
    /// Test hook: when set, sleeps are skipped and recorded timestamps are
    /// taken from this value instead of the wall clock.
    fixed_clock: Option<u64>,
}

/// Object-safe completion interface used by annotation consumers.
pub trait CompletionSource: Sync {
    fn complete(
        &self,
        endpoint: &ModelEndpoint,
        prompt: &str,
        mode: Mode,
    ) -> Result<Completion, GatewayError>;
}

impl<T: Transport> CompletionSource for Gateway<T> {
    fn complete(
        &self,
        endpoint: &ModelEndpoint,
        prompt: &str,
        mode: Mode,
    ) -> Result<Completion, GatewayError> {
        Gateway::complete(self, endpoint, prompt, mode)
    }
}

impl<T: Transport> Gateway<T> {
    pub fn new(transport: T, store: FixtureStore, policy: SplitPolicy) -> Self {
        Self {
            transport,
            store,
            policy,
            backoff: BackoffConfig::default(),
            max_in_flight: 4,
            fixed_clock: None,
        }
    }

    pub fn with_backoff(mut self, backoff: BackoffConfig) -> Self {
        self.backoff = backoff;
        self
    }

    /// Disable real sleeping and wall-clock timestamps (for tests).
    pub fn with_fixed_clock(mut self, unix: u64) -> Self {
        self.fixed_clock = Some(unix);
        self
    }

    pub fn split_policy(&self) -> &SplitPolicy {
        &self.policy
    }

    pub fn fixture_store(&self) -> &FixtureStore {
        &self.store
    }

    /// Obtain a completion for `prompt` from `endpoint`.
    ///
    /// Replay reads the fixture or fails with [`GatewayError::FixtureMiss`];
    /// it never performs network activity. Live and record modes call the
    /// transport with retries; record additionally persists the fixture.
    pub fn complete(
        &self,
        endpoint: &ModelEndpoint,
        prompt: &str,
        mode: Mode,
    ) -> Result<Completion, GatewayError> {
        let key = fixture_key(endpoint, prompt);
        if mode == Mode::Replay {
            return self.store.load(&key);
        }
        let bearer = match &endpoint.api_key_env {
            Some(var) => match std::env::var(var) {
                Ok(value) => Some(value),
                Err(_) => return Err(GatewayError::MissingApiKey { var: var.clone() }),
            },
            None => None,
        };
        let request = ChatRequest {
            model: endpoint.model_name.clone(),
            messages: vec![ChatMessage {
                role: "user".to_string(),
                content: prompt.to_string(),
            }],
            temperature: endpoint.decoding.temperature,
            max_tokens: endpoint.decoding.max_tokens,
        };
        let response = self.call_with_backoff(endpoint, &request, bearer.as_deref())?;
        let completion = self.completion_from_response(response)?;
        if mode == Mode::Record {
            self.store.save(&key, &completion)?;
        }
        Ok(completion)
    }

    /// Complete many prompts with at most `max_in_flight` requests at once.
    /// Results come back in prompt order.
    pub fn complete_batch(
        &self,
        endpoint: &ModelEndpoint,
        prompts: &[String],
        mode: Mode,
    ) -> Vec<Result<Completion, GatewayError>> {
        let width = self.max_in_flight.max(1);
        let mut results: Vec<Option<Result<Completion, GatewayError>>> =
            (0..prompts.len()).map(|_| None).collect();
        for chunk_start in (0..prompts.len()).step_by(width) {
            let chunk_end = (chunk_start + width).min(prompts.len());
            let chunk_results: Vec<Result<Completion, GatewayError>> = std::thread::scope(|scope| {
                let handles: Vec<_> = prompts[chunk_start..chunk_end]
                    .iter()
                    .map(|prompt| scope.spawn(move || self.complete(endpoint, prompt, mode)))
                    .collect();
                handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
            });
            for (offset, result) in chunk_results.into_iter().enumerate() {
                results[chunk_start + offset] = Some(result);
            }
        }
        results.into_iter().map(|r| r.expect("all slots filled")).collect()
    }

    fn call_with_backoff(
        &self,
        endpoint: &ModelEndpoint,
        request: &ChatRequest,
        bearer: Option<&str>,
    ) -> Result<ChatResponse, GatewayError> {
        let mut last_detail = String::new();
        let mut last_rate_limit: Option<Option<f64>> = None;
        let mut jitter = ChaChaJitter::new(request);
        for attempt in 0..self.backoff.attempts {
            match self.transport.post_chat(&endpoint.base_url, request, bearer) {
                Ok(response) => return Ok(response),
                Err(TransportFault::Fatal { detail }) => {
                    return Err(GatewayError::TransportError {
                        attempts: attempt + 1,
                        detail,
                    })
                }
                Err(TransportFault::Retryable { detail }) => {
                    last_detail = detail;
                    last_rate_limit = None;
                }
                Err(TransportFault::RateLimited { retry_after_secs }) => {
                    last_rate_limit = Some(retry_after_secs);
                }
            }
            if attempt + 1 < self.backoff.attempts {
                let cap = self.backoff.base_secs * self.backoff.factor.powi(attempt as i32);
                let mut wait = cap * jitter.next_unit();
                if let Some(Some(after)) = last_rate_limit {
                    wait = wait.max(after);
                }
                if self.fixed_clock.is_none() {
                    std::thread::sleep(Duration::from_secs_f64(wait.max(0.0)));
                }
            }
        }
        if let Some(retry_after_secs) = last_rate_limit {
            return Err(GatewayError::RateLimited { retry_after_secs });
        }
        Err(GatewayError::TransportError {
            attempts: self.backoff.attempts,
            detail: last_detail,
        })
    }

    fn completion_from_response(&self, response: ChatResponse) -> Result<Completion, GatewayError> {
        let created = self.fixed_clock.unwrap_or_else(now_unix);
        let finish = match response.finish_reason.as_str() {
            "stop" => FinishReason::Stop,
            "length" => FinishReason::Length,
            _ => FinishReason::Error,
        };
        let raw_text = match (&self.policy.reasoning_field, response.reasoning) {
            // A structured reasoning field is folded back into marker form
            // so the raw text round-trips under the same policy.
            (Some(_), Some(reasoning)) if !reasoning.is_empty() => format!(
                "{}{}{}{}",
                self.policy.open, reasoning, self.policy.close, response.content
            ),
            _ => response.content,
        };
        Completion::from_raw(
            raw_text,
            &self.policy,
            finish,
            TokenCounts {
                prompt: response.prompt_tokens,
                output: response.output_tokens,
            },
            created,
        )
    }
}

fn now_unix() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Deterministic full-jitter source seeded from the request, so backoff
/// schedules are reproducible in tests without being synchronized across
/// concurrent requests.
struct ChaChaJitter {
    state: u64,
}

impl ChaChaJitter {
    fn new(request: &ChatRequest) -> Self {
        let mut state = 0xa076_1d64_78bd_642fu64;
        for b in request.model.bytes() {
            state = crate::hashing::mix_seed(state, b as u64);
        }
        if let Some(msg) = request.messages.first() {
            for b in msg.content.bytes().take(64) {
                state = crate::hashing::mix_seed(state, b as u64);
            }
        }
        Self { state }
    }

    /// Uniform in [0, 1).
    fn next_unit(&mut self) -> f64 {
        self.state = crate::hashing::mix_seed(self.state, 1);
        (self.state >> 11) as f64 / (1u64 << 53) as f64
    }
}

//! Chat-completion wire protocol and the HTTP transport.

use serde::{Deserialize, Serialize};

/// One chat message in the request body.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// POST body: `{model, messages, temperature, max_tokens}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

/// Normalized response extracted from the first choice.
#[derive(Debug, Clone)]
pub struct ChatResponse {
    pub content: String,
    /// Provider-specific structured reasoning field, when present.
    pub reasoning: Option<String>,
    pub finish_reason: String,
    pub prompt_tokens: u64,
    pub output_tokens: u64,
}

/// Transport failures, classified for retry behavior.
#[derive(Debug, thiserror::Error)]
pub enum TransportFault {
    #[error("retryable transport failure: {detail}")]
    Retryable { detail: String },
    #[error("rate limited")]
    RateLimited { retry_after_secs: Option<f64> },
    #[error("fatal transport failure: {detail}")]
    Fatal { detail: String },
}

/// Anything that can carry a chat request to a model.
pub trait Transport: Sync {
    fn post_chat(
        &self,
        base_url: &str,
        request: &ChatRequest,
        bearer: Option<&str>,
    ) -> Result<ChatResponse, TransportFault>;
}

#[derive(Deserialize)]
struct WireChoiceMessage {
    #[serde(default)]
    content: String,
    #[serde(default)]
    reasoning_content: Option<String>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireChoiceMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize, Default)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

/// Blocking HTTP transport speaking the chat-completions protocol.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new()
    }
}

impl HttpTransport {
    pub fn new() -> Self {
        Self {
            client: reqwest::blocking::Client::builder()
                .timeout(std::time::Duration::from_secs(600))
                .build()
                .expect("client builds"),
        }
    }
}

impl Transport for HttpTransport {
    fn post_chat(
        &self,
        base_url: &str,
        request: &ChatRequest,
        bearer: Option<&str>,
    ) -> Result<ChatResponse, TransportFault> {
        let url = format!("{}/chat/completions", base_url.trim_end_matches('/'));
        let mut builder = self.client.post(url).json(request);
        if let Some(token) = bearer {
            builder = builder.bearer_auth(token);
        }
        let response = builder.send().map_err(|e| {
            if e.is_timeout() || e.is_connect() {
                TransportFault::Retryable { detail: e.to_string() }
            } else {
                TransportFault::Fatal { detail: e.to_string() }
            }
        })?;
        let status = response.status();
        if status.as_u16() == 429 {
            let retry_after_secs = response
                .headers()
                .get("retry-after")
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.parse::<f64>().ok());
            return Err(TransportFault::RateLimited { retry_after_secs });
        }
        if status.is_server_error() || status.as_u16() == 408 {
            return Err(TransportFault::Retryable {
                detail: format!("server returned {status}"),
            });
        }
        if !status.is_success() {
            return Err(TransportFault::Fatal {
                detail: format!("server returned {status}"),
            });
        }
        let wire: WireResponse = response.json().map_err(|e| TransportFault::Fatal {
            detail: format!("response body did not parse: {e}"),
        })?;
        let choice = wire.choices.into_iter().next().ok_or(TransportFault::Fatal {
            detail: "response had no choices".into(),
        })?;
        let usage = wire.usage.unwrap_or_default();
        Ok(ChatResponse {
            content: choice.message.content,
            reasoning: choice.message.reasoning_content,
            finish_reason: choice.finish_reason.unwrap_or_else(|| "stop".into()),
            prompt_tokens: usage.prompt_tokens,
            output_tokens: usage.completion_tokens,
        })
    }
}

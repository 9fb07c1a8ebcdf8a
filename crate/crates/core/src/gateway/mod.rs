//! Provider-neutral client for chat-style multimodal model endpoints.
//!
//! A [`Gateway`] wraps a [`ChatBackend`] (HTTP or scripted) with retries,
//! per-endpoint concurrency limits and a call log.

mod extract;
mod http;
mod scripted;

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;

pub use extract::{extract_structured, find_json_object, ExtractionError, SchemaId};
pub use http::HttpBackend;
pub use scripted::{ScriptError, ScriptKey, ScriptedBackend, ScriptedReply};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UserPart {
    Text(String),
    Image { media_type: String, data: Vec<u8> },
}

impl UserPart {
    pub fn text(s: impl Into<String>) -> Self {
        UserPart::Text(s.into())
    }

    pub fn png(data: Vec<u8>) -> Self {
        UserPart::Image {
            media_type: "image/png".into(),
            data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub temperature: f32,
    pub max_output_tokens: u32,
}

impl Default for Decoding {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_output_tokens: 2048,
        }
    }
}

/// Identifies a request within a run. Not sent over the wire; used for
/// logging and as the lookup key of the scripted backend.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RequestTag {
    pub stage: String,
    pub video_id: String,
    pub frame: Option<u64>,
    pub ordinal: u32,
}

impl fmt::Display for RequestTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.stage, self.video_id)?;
        if let Some(frame) = self.frame {
            write!(f, "@{frame}")?;
        }
        write!(f, "#{}", self.ordinal)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub model_name: String,
    pub system_prompt: String,
    pub user_parts: Vec<UserPart>,
    pub decoding: Decoding,
    pub timeout: Duration,
    pub tag: RequestTag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub text: String,
    pub finish_reason: FinishReason,
    pub latency: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    #[serde(with = "millis")]
    pub backoff_base: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            backoff_base: Duration::from_millis(500),
        }
    }
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    /// Base URL of a chat-completions style API, e.g. `http://host:8000/v1`.
    pub base_url: String,
    /// Name of the environment variable holding the API key, if any.
    #[serde(default)]
    pub api_key_env: Option<String>,
    pub model_name: String,
    #[serde(default)]
    pub retry: RetryPolicy,
    /// Ceiling on simultaneous in-flight requests to this endpoint.
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
}

fn default_concurrency() -> usize {
    8
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key_env: None,
            model_name: model_name.into(),
            retry: RetryPolicy::default(),
            max_concurrency: default_concurrency(),
        }
    }

    fn limiter_key(&self) -> String {
        format!("{}|{}", self.base_url, self.model_name)
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GatewayError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("provider returned HTTP {status}: {message}")]
    Provider { status: u16, message: String },
    #[error("no scripted response for {0}")]
    MissingScript(ScriptKey),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("API key variable `{0}` is not set")]
    MissingApiKey(String),
}

impl GatewayError {
    pub fn is_transient(&self) -> bool {
        matches!(self, GatewayError::Transport { .. })
    }
}

/// Sends a single attempt of a request.
#[async_trait]
pub trait ChatBackend: Send + Sync {
    async fn send(
        &self,
        endpoint: &EndpointConfig,
        request: &ChatRequest,
    ) -> Result<ChatResponse, GatewayError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub tag: RequestTag,
    pub model: String,
    pub attempts: u32,
    pub ok: bool,
}

pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    limiters: Mutex<HashMap<String, Arc<Semaphore>>>,
    calls: Mutex<Vec<CallRecord>>,
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        Self {
            backend,
            limiters: Mutex::new(HashMap::new()),
            calls: Mutex::new(Vec::new()),
        }
    }

    fn limiter(&self, endpoint: &EndpointConfig) -> Arc<Semaphore> {
        self.limiters
            .lock()
            .entry(endpoint.limiter_key())
            .or_insert_with(|| Arc::new(Semaphore::new(endpoint.max_concurrency.max(1))))
            .clone()
    }

    /// Sends `request`, retrying transient transport failures with
    /// exponential backoff. Provider errors and refusals are returned as is.
    pub async fn complete(
        &self,
        endpoint: &EndpointConfig,
        request: &ChatRequest,
    ) -> Result<ChatResponse, GatewayError> {
        let result = self.complete_inner(endpoint, request).await;
        let attempts = match &result {
            Ok((_, n)) => *n,
            Err((_, n)) => *n,
        };
        self.calls.lock().push(CallRecord {
            tag: request.tag.clone(),
            model: request.model_name.clone(),
            attempts,
            ok: result.is_ok(),
        });
        result.map(|(r, _)| r).map_err(|(e, _)| e)
    }

    async fn complete_inner(
        &self,
        endpoint: &EndpointConfig,
        request: &ChatRequest,
    ) -> Result<(ChatResponse, u32), (GatewayError, u32)> {
        if request.user_parts.is_empty() {
            return Err((
                GatewayError::InvalidRequest("request has no user parts".into()),
                0,
            ));
        }
        let max_attempts = endpoint.retry.max_attempts.max(1);
        let limiter = self.limiter(endpoint);
        let mut attempt = 0;
        loop {
            attempt += 1;
            let started = Instant::now();
            let outcome = {
                let _permit = limiter.acquire().await.expect("limiter never closes");
                self.backend.send(endpoint, request).await
            };
            match outcome {
                Ok(mut resp) => {
                    if resp.latency.is_zero() {
                        resp.latency = started.elapsed();
                    }
                    return Ok((resp, attempt));
                }
                Err(e) if e.is_transient() && attempt < max_attempts => {
                    let delay = endpoint.retry.backoff_base * 2u32.saturating_pow(attempt - 1);
                    tracing::warn!(tag = %request.tag, attempt, error = %e, "retrying in {delay:?}");
                    tokio::time::sleep(delay).await;
                }
                Err(GatewayError::Transport { message, .. }) => {
                    return Err((
                        GatewayError::Transport {
                            attempts: attempt,
                            message,
                        },
                        attempt,
                    ))
                }
                Err(e) => return Err((e, attempt)),
            }
        }
    }

    pub fn call_log(&self) -> Vec<CallRecord> {
        self.calls.lock().clone()
    }

    /// Number of `complete` calls made for one video.
    pub fn calls_for_video(&self, video_id: &str) -> usize {
        self.calls
            .lock()
            .iter()
            .filter(|c| c.tag.video_id == video_id)
            .count()
    }
}

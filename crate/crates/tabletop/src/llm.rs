//! Blocking client for OpenAI-compatible chat-completions endpoints.
//!
//! Rate limits, 5xx responses and network failures are retried with
//! exponential backoff; other non-2xx statuses fail immediately. A shared
//! client caps the number of requests in flight across threads.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::Serialize;
use serde_json::Value;
use tabletop_core::hash::{Fnv64, StateHash};
use tabletop_core::select::{BackendError, BackendErrorKind, ChatBackend, ChatMessage, ChatReply};

pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
pub const DEFAULT_MODEL: &str = "gpt-3.5-turbo";
pub const ENV_API_KEY: &str = "LLM_API_KEY";
pub const ENV_BASE_URL: &str = "LLM_BASE_URL";
pub const ENV_MODEL: &str = "LLM_MODEL";

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("{ENV_API_KEY} is not set")]
    MissingApiKey,
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("API error {status}: {body}")]
    Api { status: u16, body: String },
    #[error("malformed response: {0}")]
    Protocol(String),
}

impl From<LlmError> for BackendError {
    fn from(e: LlmError) -> Self {
        let kind = match &e {
            LlmError::Api { status, .. } => BackendErrorKind::Api { status: *status },
            LlmError::Protocol(_) => BackendErrorKind::Protocol,
            LlmError::MissingApiKey | LlmError::Transport { .. } => BackendErrorKind::Transport,
        };
        BackendError {
            kind,
            message: e.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub factor: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_secs(1),
            factor: 2,
        }
    }
}

impl RetryPolicy {
    /// Wait before retry number `retry` (0 = first retry).
    pub fn delay(&self, retry: u32) -> Duration {
        self.base_delay * self.factor.saturating_pow(retry)
    }
}

#[derive(Clone, Debug)]
pub struct EndpointConfig {
    pub base_url: String,
    pub api_key: String,
    pub model: String,
    pub temperature: f64,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    pub max_in_flight: usize,
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Self {
        EndpointConfig {
            base_url: base_url.into(),
            api_key: api_key.into(),
            model: DEFAULT_MODEL.to_string(),
            temperature: 0.0,
            timeout: Duration::from_secs(120),
            retry: RetryPolicy::default(),
            max_in_flight: 4,
        }
    }

    /// Reads `LLM_API_KEY`, `LLM_BASE_URL` and `LLM_MODEL`.
    pub fn from_env() -> Result<Self, LlmError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, LlmError> {
        let key = lookup(ENV_API_KEY).filter(|k| !k.is_empty()).ok_or(LlmError::MissingApiKey)?;
        let base = lookup(ENV_BASE_URL).unwrap_or_else(|| DEFAULT_BASE_URL.to_string());
        let mut cfg = EndpointConfig::new(base, key);
        if let Some(model) = lookup(ENV_MODEL) {
            cfg.model = model;
        }
        Ok(cfg)
    }

    fn completions_url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub temperature: f64,
    pub messages: Vec<ChatMessage>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChatResponse {
    pub content: String,
    pub finish_reason: Option<String>,
    pub raw_body: String,
    pub attempts: u32,
    pub correlation_id: String,
}

/// Counting semaphore; also remembers the highest concurrency seen.
#[derive(Debug)]
struct Gate {
    limit: usize,
    state: Mutex<(usize, usize)>,
    freed: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(limit: usize) -> Self {
        Gate {
            limit: limit.max(1),
            state: Mutex::new((0, 0)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut st = self.state.lock().expect("gate poisoned");
        while st.0 >= self.limit {
            st = self.freed.wait(st).expect("gate poisoned");
        }
        st.0 += 1;
        st.1 = st.1.max(st.0);
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut st = self.0.state.lock().expect("gate poisoned");
        st.0 -= 1;
        self.0.freed.notify_one();
    }
}

fn is_transient_status(status: u16) -> bool {
    status == 429 || (500..=599).contains(&status)
}

enum Attempt {
    Done(Result<(u16, String), LlmError>),
    Retry(String),
}

pub struct ChatClient {
    agent: ureq::Agent,
    config: EndpointConfig,
    gate: Gate,
}

impl ChatClient {
    pub fn new(config: EndpointConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        ChatClient {
            agent,
            gate: Gate::new(config.max_in_flight),
            config,
        }
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    /// Highest number of concurrent requests observed so far.
    pub fn peak_in_flight(&self) -> usize {
        self.gate.state.lock().expect("gate poisoned").1
    }

    pub fn request_for(&self, messages: &[ChatMessage]) -> ChatRequest {
        ChatRequest {
            model: self.config.model.clone(),
            temperature: self.config.temperature,
            messages: messages.to_vec(),
        }
    }

    fn attempt(&self, url: &str, body: &str, correlation_id: &str) -> Attempt {
        let _permit = self.gate.acquire();
        let sent = self
            .agent
            .post(url)
            .header("Authorization", format!("Bearer {}", self.config.api_key))
            .header("Content-Type", "application/json")
            .header("X-Request-Id", correlation_id)
            .send(body);
        match sent {
            Ok(mut resp) => {
                let status = resp.status().as_u16();
                let text = resp.body_mut().read_to_string();
                match text {
                    Ok(text) if is_transient_status(status) => Attempt::Retry(format!("HTTP {status}: {text}")),
                    Ok(text) => Attempt::Done(Ok((status, text))),
                    Err(e) => Attempt::Retry(e.to_string()),
                }
            }
            Err(e @ (ureq::Error::BadUri(_) | ureq::Error::Http(_) | ureq::Error::HostNotFound)) => {
                Attempt::Done(Err(LlmError::Transport {
                    attempts: 1,
                    message: e.to_string(),
                }))
            }
            Err(e) => Attempt::Retry(e.to_string()),
        }
    }

    /// Sends one completion request, retrying transient failures.
    pub fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let body = serde_json::to_string(req).map_err(|e| LlmError::Protocol(e.to_string()))?;
        let mut h = Fnv64::new();
        h.write(body.as_bytes());
        let correlation_id = StateHash(h.finish()).to_string();
        let url = self.config.completions_url();

        let max = self.config.retry.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=max {
            match self.attempt(&url, &body, &correlation_id) {
                Attempt::Done(Ok((status, raw))) => {
                    if !(200..300).contains(&status) {
                        return Err(LlmError::Api { status, body: raw });
                    }
                    let (content, finish_reason) = parse_completion(&raw)?;
                    return Ok(ChatResponse {
                        content,
                        finish_reason,
                        raw_body: raw,
                        attempts: attempt,
                        correlation_id,
                    });
                }
                Attempt::Done(Err(e)) => return Err(e),
                Attempt::Retry(why) => {
                    last = why;
                    if attempt < max {
                        std::thread::sleep(self.config.retry.delay(attempt - 1));
                    }
                }
            }
        }
        Err(LlmError::Transport {
            attempts: max,
            message: last,
        })
    }
}

/// `choices[0].message.content` and `choices[0].finish_reason`.
pub fn parse_completion(raw: &str) -> Result<(String, Option<String>), LlmError> {
    let v: Value = serde_json::from_str(raw).map_err(|e| LlmError::Protocol(e.to_string()))?;
    let choice = v
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| LlmError::Protocol("response has no choices".into()))?;
    let content = choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| LlmError::Protocol("choices[0].message.content missing".into()))?;
    let finish = choice.get("finish_reason").and_then(Value::as_str).map(str::to_string);
    Ok((content.to_string(), finish))
}

impl ChatBackend for ChatClient {
    fn complete(&self, messages: &[ChatMessage]) -> Result<ChatReply, BackendError> {
        let resp = self.chat(&self.request_for(messages))?;
        Ok(ChatReply {
            content: resp.content,
            finish_reason: resp.finish_reason,
            raw_body: resp.raw_body,
            correlation_id: Some(resp.correlation_id),
            attempts: resp.attempts,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_schedule() {
        let r = RetryPolicy::default();
        let waits: Vec<_> = (0..4).map(|i| r.delay(i).as_secs()).collect();
        assert_eq!(waits, [1, 2, 4, 8]);
    }

    #[test]
    fn env_lookup() {
        let cfg = EndpointConfig::from_lookup(|k| match k {
            ENV_API_KEY => Some("sk-test".into()),
            ENV_MODEL => Some("other-model".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(cfg.base_url, DEFAULT_BASE_URL);
        assert_eq!(cfg.model, "other-model");
        assert_eq!(cfg.temperature, 0.0);
        assert!(matches!(EndpointConfig::from_lookup(|_| None), Err(LlmError::MissingApiKey)));
        assert_eq!(
            EndpointConfig::new("http://x/v1/", "k").completions_url(),
            "http://x/v1/chat/completions"
        );
    }

    #[test]
    fn completion_parsing() {
        let raw = r#"{"choices":[{"message":{"role":"assistant","content":"Selected action is : 2"},"finish_reason":"stop"}]}"#;
        let (content, finish) = parse_completion(raw).unwrap();
        assert_eq!(content, "Selected action is : 2");
        assert_eq!(finish.as_deref(), Some("stop"));
        assert!(matches!(parse_completion("{}"), Err(LlmError::Protocol(_))));
        assert!(matches!(parse_completion("not json"), Err(LlmError::Protocol(_))));
    }

    #[test]
    fn request_serialization() {
        let req = ChatRequest {
            model: DEFAULT_MODEL.into(),
            temperature: 0.0,
            messages: vec![ChatMessage::system("s"), ChatMessage::user("u")],
        };
        assert_eq!(
            serde_json::to_string(&req).unwrap(),
            r#"{"model":"gpt-3.5-turbo","temperature":0.0,"messages":[{"role":"system","content":"s"},{"role":"user","content":"u"}]}"#
        );
    }
}

//! A uniform chat-completion interface.
//!
//! Backends: [`HttpBackend`] (OpenAI-compatible wire format),
//! [`MockBackend`] (scripted, deterministic) and [`CachedBackend`], which
//! wraps either with a content-addressed disk cache.

mod cache;
mod http;
mod mock;

use std::fmt;
use std::sync::{Condvar, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use cache::CachedBackend;
pub use http::{Endpoint, HttpBackend, HttpConfig, RetryPolicy};
pub use mock::{Matcher, MockBackend, MockRule, MockScript};

pub const ENV_API_BASE: &str = "TOMLOOM_API_BASE";
pub const ENV_API_KEY: &str = "TOMLOOM_API_KEY";
pub const ENV_MODEL: &str = "TOMLOOM_MODEL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub text: String,
}

impl ChatMessage {
    pub fn user(text: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            text: text.into(),
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

pub const DEFAULT_MAX_TOKENS: u32 = 1024;

impl ChatRequest {
    pub fn new(model_id: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        ChatRequest {
            model_id: model_id.into(),
            messages,
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
            seed: None,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("no messages".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        Ok(())
    }

    pub fn last_user_message(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.text.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
    /// True when the counts come from [`estimate_tokens`] rather than the
    /// provider.
    #[serde(default)]
    pub estimated: bool,
}

impl Usage {
    pub fn estimate(req: &ChatRequest, output: &str) -> Usage {
        Usage {
            input_tokens: req.messages.iter().map(|m| estimate_tokens(&m.text)).sum(),
            output_tokens: estimate_tokens(output),
            estimated: true,
        }
    }
}

impl std::ops::AddAssign for Usage {
    fn add_assign(&mut self, rhs: Usage) {
        self.input_tokens += rhs.input_tokens;
        self.output_tokens += rhs.output_tokens;
        self.estimated |= rhs.estimated;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub usage: Usage,
    pub cached: bool,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("request timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("server error {status} after {attempts} attempts")]
    Server { status: u16, attempts: u32 },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend not configured: {0}")]
    Config(String),
    #[error("cache error: {0}")]
    Cache(String),
}

/// Anything that can answer a chat request. Implementations must be safe to
/// call from several worker threads at once.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError>;

    /// Model identifier recorded in result provenance.
    fn model_id(&self) -> &str;
}

impl<B: ChatBackend + ?Sized> ChatBackend for &B {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        (**self).complete(req)
    }

    fn model_id(&self) -> &str {
        (**self).model_id()
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for Box<B> {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        (**self).complete(req)
    }

    fn model_id(&self) -> &str {
        (**self).model_id()
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for std::sync::Arc<B> {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        (**self).complete(req)
    }

    fn model_id(&self) -> &str {
        (**self).model_id()
    }
}

/// SHA-256 over the canonical JSON of every field that influences the
/// response. `serde_json::Value` objects keep keys sorted, so the key order
/// of the input maps never matters; message order does.
pub fn cache_key(req: &ChatRequest) -> String {
    let messages: Vec<serde_json::Value> = req
        .messages
        .iter()
        .map(|m| serde_json::json!({ "role": m.role.as_str(), "text": m.text }))
        .collect();
    let canonical = serde_json::json!({
        "model_id": req.model_id,
        "messages": messages,
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
        "seed": req.seed,
    });
    let digest = Sha256::digest(canonical.to_string().as_bytes());
    hex::encode(digest)
}

/// Token estimate used when the provider reports no usage: every maximal
/// run of alphanumeric characters is one token, and so is every other
/// non-whitespace character.
pub fn estimate_tokens(text: &str) -> u64 {
    let mut count = 0;
    let mut in_word = false;
    for c in text.chars() {
        if c.is_alphanumeric() {
            if !in_word {
                count += 1;
                in_word = true;
            }
        } else {
            in_word = false;
            if !c.is_whitespace() {
                count += 1;
            }
        }
    }
    count
}

/// Counting semaphore bounding in-flight requests.
pub struct Limiter {
    permits: Mutex<usize>,
    available: Condvar,
}

impl fmt::Debug for Limiter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Limiter").finish_non_exhaustive()
    }
}

pub struct Permit<'a>(&'a Limiter);

impl Limiter {
    pub fn new(permits: usize) -> Self {
        Limiter {
            permits: Mutex::new(permits.max(1)),
            available: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.permits.lock().unwrap();
        while *n == 0 {
            n = self.available.wait(n).unwrap();
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().unwrap() += 1;
        self.0.available.notify_one();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req() -> ChatRequest {
        ChatRequest::new(
            "m",
            vec![ChatMessage::user("hello"), ChatMessage::assistant("hi")],
        )
    }

    #[test]
    fn identical_requests_share_a_key() {
        assert_eq!(cache_key(&req()), cache_key(&req()));
        assert_eq!(cache_key(&req()).len(), 64);
    }

    #[test]
    fn key_is_sensitive_to_every_field() {
        let base = cache_key(&req());
        let mut r = req();
        r.temperature = 0.7;
        assert_ne!(cache_key(&r), base);
        let mut r = req();
        r.messages.reverse();
        assert_ne!(cache_key(&r), base);
        let mut r = req();
        r.max_tokens = 10;
        assert_ne!(cache_key(&r), base);
        let mut r = req();
        r.seed = Some(1);
        assert_ne!(cache_key(&r), base);
        let mut r = req();
        r.model_id = "other".into();
        assert_ne!(cache_key(&r), base);
    }

    #[test]
    fn key_ignores_json_key_order_of_the_source() {
        let a: ChatRequest = serde_json::from_str(
            r#"{"model_id":"m","messages":[{"role":"user","text":"x"}],"temperature":0.0,"max_tokens":5}"#,
        )
        .unwrap();
        let b: ChatRequest = serde_json::from_str(
            r#"{"max_tokens":5,"temperature":0.0,"messages":[{"text":"x","role":"user"}],"model_id":"m"}"#,
        )
        .unwrap();
        assert_eq!(cache_key(&a), cache_key(&b));
    }

    #[test]
    fn validation() {
        assert!(req().validate().is_ok());
        let mut r = req();
        r.messages.clear();
        assert!(r.validate().is_err());
        let mut r = req();
        r.temperature = -0.1;
        assert!(r.validate().is_err());
    }

    #[test]
    fn token_estimate_counts_words_and_punctuation() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("Benjamin entered the workshop."), 5);
        assert_eq!(estimate_tokens("<answer>vase</answer>"), 8);
        assert_eq!(estimate_tokens("  t-shirt  "), 3);
    }

    #[test]
    fn last_user_message_skips_assistant_turns() {
        assert_eq!(req().last_user_message(), Some("hello"));
    }
}

//! OpenAI-compatible HTTP backend (`/chat/completions` or `/completions`).

use std::fmt;
use std::time::{Duration, Instant};

use rand::Rng;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

use super::{
    ChatBackend, ChatRequest, ChatResponse, GatewayError, Limiter, Usage, ENV_API_BASE,
    ENV_API_KEY, ENV_MODEL,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Endpoint {
    #[default]
    Chat,
    /// Legacy completion endpoint; messages are joined into one prompt.
    Completion,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(20),
        }
    }
}

impl RetryPolicy {
    /// Exponential backoff with up to one base delay of uniform jitter.
    fn delay(&self, retry: u32) -> Duration {
        let exp = self.base_delay.saturating_mul(1u32 << retry.min(16));
        let jitter = self.base_delay.mul_f64(rand::rng().random_range(0.0..1.0));
        exp.saturating_add(jitter).min(self.max_delay)
    }
}

#[derive(Clone)]
pub struct HttpConfig {
    /// e.g. `https://api.openai.com/v1`
    pub base_url: String,
    pub api_key: Option<String>,
    pub model_id: String,
    pub endpoint: Endpoint,
    pub timeout: Duration,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
}

impl fmt::Debug for HttpConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpConfig")
            .field("base_url", &self.base_url)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("model_id", &self.model_id)
            .field("endpoint", &self.endpoint)
            .field("timeout", &self.timeout)
            .field("max_in_flight", &self.max_in_flight)
            .finish()
    }
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>, model_id: impl Into<String>) -> Self {
        HttpConfig {
            base_url: base_url.into(),
            api_key: None,
            model_id: model_id.into(),
            endpoint: Endpoint::Chat,
            timeout: Duration::from_secs(120),
            max_in_flight: 8,
            retry: RetryPolicy::default(),
        }
    }

    /// Reads `TOMLOOM_API_BASE`, `TOMLOOM_API_KEY` and `TOMLOOM_MODEL`.
    pub fn from_env() -> Result<Self, GatewayError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self, GatewayError> {
        let base = get(ENV_API_BASE).filter(|v| !v.is_empty()).ok_or_else(|| {
            GatewayError::Config(format!(
                "set {ENV_API_BASE} to an OpenAI-compatible base URL (e.g. https://api.openai.com/v1), \
                 or pass --backend mock:<script.json>"
            ))
        })?;
        let model = get(ENV_MODEL).filter(|v| !v.is_empty()).ok_or_else(|| {
            GatewayError::Config(format!("set {ENV_MODEL} to the model id to query"))
        })?;
        let mut cfg = HttpConfig::new(base, model);
        cfg.api_key = get(ENV_API_KEY).filter(|v| !v.is_empty());
        Ok(cfg)
    }
}

pub struct HttpBackend {
    config: HttpConfig,
    client: Client,
    limiter: Limiter,
}

impl fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpBackend")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

enum Attempt {
    Done(ChatResponse),
    Retry(GatewayError),
    Fail(GatewayError),
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, GatewayError> {
        let client = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(HttpBackend {
            limiter: Limiter::new(config.max_in_flight),
            config,
            client,
        })
    }

    fn url(&self) -> String {
        let base = self.config.base_url.trim_end_matches('/');
        match self.config.endpoint {
            Endpoint::Chat => format!("{base}/chat/completions"),
            Endpoint::Completion => format!("{base}/completions"),
        }
    }

    fn body(&self, req: &ChatRequest) -> Value {
        let model = if req.model_id.is_empty() {
            &self.config.model_id
        } else {
            &req.model_id
        };
        let mut body = match self.config.endpoint {
            Endpoint::Chat => json!({
                "model": model,
                "messages": req.messages.iter()
                    .map(|m| json!({"role": m.role.as_str(), "content": m.text}))
                    .collect::<Vec<_>>(),
            }),
            Endpoint::Completion => json!({
                "model": model,
                "prompt": req.messages.iter().map(|m| m.text.as_str()).collect::<Vec<_>>().join("\n\n"),
            }),
        };
        body["temperature"] = json!(req.temperature);
        body["max_tokens"] = json!(req.max_tokens);
        if let Some(seed) = req.seed {
            body["seed"] = json!(seed);
        }
        body
    }

    fn parse(
        &self,
        req: &ChatRequest,
        v: &Value,
        started: Instant,
    ) -> Result<ChatResponse, GatewayError> {
        let choice = v
            .get("choices")
            .and_then(|c| c.get(0))
            .ok_or_else(|| GatewayError::MalformedResponse("no choices".into()))?;
        let text = match self.config.endpoint {
            Endpoint::Chat => choice.pointer("/message/content"),
            Endpoint::Completion => choice.get("text"),
        }
        .and_then(Value::as_str)
        .ok_or_else(|| GatewayError::MalformedResponse("choice has no text".into()))?
        .to_string();
        let usage = match (
            v.pointer("/usage/prompt_tokens").and_then(Value::as_u64),
            v.pointer("/usage/completion_tokens")
                .and_then(Value::as_u64),
        ) {
            (Some(input_tokens), Some(output_tokens)) => Usage {
                input_tokens,
                output_tokens,
                estimated: false,
            },
            _ => Usage::estimate(req, &text),
        };
        Ok(ChatResponse {
            text,
            usage,
            cached: false,
            latency_ms: started.elapsed().as_millis() as u64,
        })
    }

    fn attempt(&self, req: &ChatRequest, attempts: u32) -> Attempt {
        let started = Instant::now();
        let mut call = self.client.post(self.url()).json(&self.body(req));
        if let Some(key) = &self.config.api_key {
            call = call.bearer_auth(key);
        }
        let response = match call.send() {
            Ok(r) => r,
            Err(e) if e.is_timeout() => return Attempt::Retry(GatewayError::Timeout { attempts }),
            Err(e) => {
                // strip the URL so no query-string credentials leak into messages
                return Attempt::Retry(GatewayError::Transport(e.without_url().to_string()));
            }
        };
        let status = response.status();
        match status {
            StatusCode::UNAUTHORIZED | StatusCode::FORBIDDEN => {
                Attempt::Fail(GatewayError::Auth(format!("HTTP {}", status.as_u16())))
            }
            StatusCode::TOO_MANY_REQUESTS => Attempt::Retry(GatewayError::RateLimited { attempts }),
            s if s.is_server_error() => Attempt::Retry(GatewayError::Server {
                status: s.as_u16(),
                attempts,
            }),
            s if !s.is_success() => Attempt::Fail(GatewayError::InvalidRequest(format!(
                "HTTP {}: {}",
                s.as_u16(),
                response.text().unwrap_or_default()
            ))),
            _ => match response.json::<Value>() {
                Ok(v) => match self.parse(req, &v, started) {
                    Ok(r) => Attempt::Done(r),
                    Err(e) => Attempt::Fail(e),
                },
                Err(e) if e.is_timeout() => Attempt::Retry(GatewayError::Timeout { attempts }),
                Err(e) => {
                    Attempt::Fail(GatewayError::MalformedResponse(e.without_url().to_string()))
                }
            },
        }
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        req.validate()?;
        let _permit = self.limiter.acquire();
        let mut retry = 0;
        loop {
            match self.attempt(req, retry + 1) {
                Attempt::Done(r) => return Ok(r),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(e) if retry >= self.config.retry.max_retries => return Err(e),
                Attempt::Retry(e) => {
                    log::warn!("attempt {} failed ({e}); retrying", retry + 1);
                    std::thread::sleep(self.config.retry.delay(retry));
                    retry += 1;
                }
            }
        }
    }

    fn model_id(&self) -> &str {
        &self.config.model_id
    }
}

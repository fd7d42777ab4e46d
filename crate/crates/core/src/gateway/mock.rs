//! Scripted backend: the first rule whose matcher hits the last user
//! message wins, otherwise the default response is returned.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatRequest, ChatResponse, GatewayError, Usage};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    Substring(String),
    Pattern(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRule {
    pub matcher: Matcher,
    pub response: String,
}

impl MockRule {
    pub fn substring(needle: impl Into<String>, response: impl Into<String>) -> Self {
        MockRule {
            matcher: Matcher::Substring(needle.into()),
            response: response.into(),
        }
    }

    pub fn pattern(regex: impl Into<String>, response: impl Into<String>) -> Self {
        MockRule {
            matcher: Matcher::Pattern(regex.into()),
            response: response.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub rules: Vec<MockRule>,
    #[serde(default)]
    pub default_response: String,
}

impl MockScript {
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))
    }
}

enum CompiledMatcher {
    Substring(String),
    Pattern(Regex),
}

pub struct MockBackend {
    model_id: String,
    rules: Vec<(CompiledMatcher, String)>,
    default_response: String,
    calls: AtomicUsize,
}

impl std::fmt::Debug for MockBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MockBackend")
            .field("model_id", &self.model_id)
            .field("rules", &self.rules.len())
            .finish()
    }
}

impl MockBackend {
    pub fn new(script: MockScript) -> Result<Self, GatewayError> {
        let rules = script
            .rules
            .into_iter()
            .map(|r| {
                let m = match r.matcher {
                    Matcher::Substring(s) => CompiledMatcher::Substring(s),
                    Matcher::Pattern(p) => CompiledMatcher::Pattern(
                        Regex::new(&p)
                            .map_err(|e| GatewayError::Config(format!("bad pattern `{p}`: {e}")))?,
                    ),
                };
                Ok((m, r.response))
            })
            .collect::<Result<_, GatewayError>>()?;
        Ok(MockBackend {
            model_id: "mock".into(),
            rules,
            default_response: script.default_response,
            calls: AtomicUsize::new(0),
        })
    }

    pub fn with_model_id(mut self, id: impl Into<String>) -> Self {
        self.model_id = id.into();
        self
    }

    /// Number of `complete` calls served so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn respond(&self, last_user: &str) -> &str {
        self.rules
            .iter()
            .find(|(m, _)| match m {
                CompiledMatcher::Substring(s) => last_user.contains(s.as_str()),
                CompiledMatcher::Pattern(r) => r.is_match(last_user),
            })
            .map(|(_, r)| r.as_str())
            .unwrap_or(&self.default_response)
    }
}

impl ChatBackend for MockBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        req.validate()?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        let text = self
            .respond(req.last_user_message().unwrap_or(""))
            .to_string();
        Ok(ChatResponse {
            usage: Usage::estimate(req, &text),
            text,
            cached: false,
            latency_ms: 0,
        })
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }
}

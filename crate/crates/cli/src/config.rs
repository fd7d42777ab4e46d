//! `tomloom.toml` settings and backend selection.
//!
//! Every key is optional; flags and `TOMLOOM_*` environment variables take
//! precedence over the file.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Deserialize;
use tomloom::gateway::{
    CachedBackend, ChatBackend, HttpBackend, HttpConfig, MockBackend, MockScript, ENV_API_BASE,
    ENV_API_KEY, ENV_MODEL,
};

use crate::{user, user_msg};

pub const DEFAULT_CONFIG: &str = "tomloom.toml";

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub api_base: Option<String>,
    pub api_key: Option<String>,
    pub model: Option<String>,
    /// `http` or `mock:<script.json>`.
    pub backend: Option<String>,
    pub cache_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub templates: Option<PathBuf>,
}

impl FileConfig {
    /// Reads `path`, or `./tomloom.toml` when it exists and no path is given.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let path = match path {
            Some(p) => p.to_path_buf(),
            None if Path::new(DEFAULT_CONFIG).is_file() => PathBuf::from(DEFAULT_CONFIG),
            None => return Ok(FileConfig::default()),
        };
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(user)?;
        toml::from_str(&text)
            .with_context(|| format!("parsing {}", path.display()))
            .map_err(user)
    }
}

/// First non-empty value among flag, environment variable and file.
pub fn pick(flag: Option<String>, env: &str, file: Option<&String>) -> Option<String> {
    flag.filter(|v| !v.is_empty())
        .or_else(|| std::env::var(env).ok().filter(|v| !v.is_empty()))
        .or_else(|| file.cloned().filter(|v| !v.is_empty()))
}

#[derive(Debug, Default, Clone, clap::Args)]
pub struct BackendArgs {
    /// `http` (OpenAI-compatible endpoint) or `mock:<script.json>`.
    #[arg(long)]
    pub backend: Option<String>,
    /// Base URL of the chat completions API [env: TOMLOOM_API_BASE].
    #[arg(long)]
    pub api_base: Option<String>,
    /// Model identifier [env: TOMLOOM_MODEL].
    #[arg(long)]
    pub model: Option<String>,
    /// Response cache directory; cacheable requests are replayed from here.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Disable the response cache.
    #[arg(long)]
    pub no_cache: bool,
}

impl BackendArgs {
    pub fn build(&self, file: &FileConfig) -> anyhow::Result<Box<dyn ChatBackend>> {
        let spec = self
            .backend
            .clone()
            .or_else(|| std::env::var("TOMLOOM_BACKEND").ok())
            .or_else(|| file.backend.clone())
            .unwrap_or_else(|| "http".into());
        let backend: Box<dyn ChatBackend> = if let Some(script) = spec.strip_prefix("mock:") {
            let script = MockScript::load(Path::new(script)).map_err(user)?;
            let model = pick(self.model.clone(), ENV_MODEL, file.model.as_ref())
                .unwrap_or_else(|| "mock".into());
            Box::new(MockBackend::new(script).map_err(user)?.with_model_id(model))
        } else if spec == "http" {
            let base = pick(self.api_base.clone(), ENV_API_BASE, file.api_base.as_ref());
            let model = pick(self.model.clone(), ENV_MODEL, file.model.as_ref());
            let key = pick(None, ENV_API_KEY, file.api_key.as_ref());
            let config = HttpConfig::from_lookup(|k| match k {
                ENV_API_BASE => base.clone(),
                ENV_MODEL => model.clone(),
                ENV_API_KEY => key.clone(),
                _ => None,
            })
            .map_err(user)?;
            Box::new(HttpBackend::new(config)?)
        } else {
            return Err(user_msg(format!(
                "unknown backend `{spec}`; use `http` or `mock:<script.json>`"
            )));
        };
        if self.no_cache {
            return Ok(backend);
        }
        match self.cache_dir.clone().or_else(|| file.cache_dir.clone()) {
            Some(dir) => Ok(Box::new(CachedBackend::new(backend, dir))),
            None if spec == "http" => Ok(Box::new(CachedBackend::new(
                backend,
                CachedBackend::<HttpBackend>::default_dir(),
            ))),
            None => Ok(backend),
        }
    }
}

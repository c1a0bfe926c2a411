//! Runtime settings read from `DDAP_*` environment variables.

use std::path::PathBuf;
use std::sync::Arc;

use crate::agent::{ChatBackend, HttpBackend, HttpConfig, ScriptedBackend};

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_DATA_DIR: &str = "ddap-data";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Http,
    Scripted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub backend: BackendKind,
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub api_key: Option<String>,
    pub script_path: Option<PathBuf>,
    pub data_dir: PathBuf,
    pub port: u16,
    /// Directory of retrieval snippets; retrieval is off when unset.
    pub snippet_dir: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum SettingsError {
    #[error("{name}={value:?}: {reason}")]
    Invalid {
        name: &'static str,
        value: String,
        reason: &'static str,
    },
    #[error("{0} must be set for the {1} backend")]
    Missing(&'static str, &'static str),
    #[error(transparent)]
    Backend(#[from] crate::agent::BackendError),
}

impl Settings {
    pub fn from_env() -> Result<Self, SettingsError> {
        Self::from_lookup(|name| std::env::var(name).ok().filter(|v| !v.is_empty()))
    }

    /// Reads settings through `lookup` instead of the process environment.
    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, SettingsError> {
        let script_path = lookup("DDAP_SCRIPT_PATH").map(PathBuf::from);
        let backend = match lookup("DDAP_LLM_BACKEND").as_deref() {
            Some("http") => BackendKind::Http,
            Some("scripted") => BackendKind::Scripted,
            Some(other) => {
                return Err(SettingsError::Invalid {
                    name: "DDAP_LLM_BACKEND",
                    value: other.to_string(),
                    reason: "expected `http` or `scripted`",
                })
            }
            None if script_path.is_some() => BackendKind::Scripted,
            None => BackendKind::Http,
        };
        let port = match lookup("DDAP_PORT") {
            None => DEFAULT_PORT,
            Some(p) => p.parse().map_err(|_| SettingsError::Invalid {
                name: "DDAP_PORT",
                value: p,
                reason: "expected a TCP port number",
            })?,
        };
        Ok(Settings {
            backend,
            base_url: lookup("DDAP_LLM_BASE_URL"),
            model: lookup("DDAP_LLM_MODEL"),
            api_key: lookup("DDAP_LLM_API_KEY"),
            script_path,
            data_dir: lookup("DDAP_DATA_DIR")
                .map(PathBuf::from)
                .unwrap_or_else(|| DEFAULT_DATA_DIR.into()),
            port,
            snippet_dir: lookup("DDAP_SNIPPET_DIR").map(PathBuf::from),
        })
    }

    pub fn build_backend(&self) -> Result<Arc<dyn ChatBackend>, SettingsError> {
        match self.backend {
            BackendKind::Scripted => {
                let path = self
                    .script_path
                    .as_ref()
                    .ok_or(SettingsError::Missing("DDAP_SCRIPT_PATH", "scripted"))?;
                Ok(Arc::new(ScriptedBackend::from_path(path)?))
            }
            BackendKind::Http => {
                let base = self
                    .base_url
                    .clone()
                    .ok_or(SettingsError::Missing("DDAP_LLM_BASE_URL", "http"))?;
                let model = self
                    .model
                    .clone()
                    .ok_or(SettingsError::Missing("DDAP_LLM_MODEL", "http"))?;
                let mut config = HttpConfig::new(base, model);
                config.api_key = self.api_key.clone();
                Ok(Arc::new(HttpBackend::new(config)))
            }
        }
    }
}

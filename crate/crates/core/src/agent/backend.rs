//! Chat backends: a generic HTTP chat-completion client and a scripted
//! stand-in that replays a fixed transcript.

use std::path::Path;
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{now_millis, AgentConfig, AgentTask};
use crate::stage::Stage;

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest<'a> {
    pub stage: Stage,
    pub task: AgentTask,
    pub temperature: f64,
    pub prompt: &'a str,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("backend unreachable after {attempts} attempts: {detail}")]
    RetriesExhausted { attempts: u32, detail: String },
    #[error("backend rejected the request with HTTP {status}: {detail}")]
    Rejected { status: u16, detail: String },
    #[error("backend reply is not a chat completion: {0}")]
    BadResponse(String),
    #[error("scripted transcript exhausted after {consumed} entries")]
    TranscriptExhausted { consumed: usize },
    #[error("scripted entry {index} expects stage `{expected}` but the live stage is `{actual}`")]
    StageMismatch {
        index: usize,
        expected: String,
        actual: Stage,
    },
    #[error("cannot load transcript: {0}")]
    Fixture(String),
}

/// Something that answers a rendered prompt with raw text.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<String, BackendError>;
}

/// One request/response pair, as written to the session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub stage: Stage,
    pub task: AgentTask,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub timestamp: u64,
}

/// Sends one prompt for `config` and records the exchange in `log`.
pub fn send_turn(
    config: &AgentConfig,
    backend: &dyn ChatBackend,
    stage: Stage,
    prompt: &str,
    log: &mut Vec<Exchange>,
) -> Result<String, BackendError> {
    let request = ChatRequest {
        stage,
        task: config.task,
        temperature: config.temperature,
        prompt,
    };
    let result = backend.complete(&request);
    log.push(Exchange {
        stage,
        task: config.task,
        prompt: prompt.to_string(),
        response: result.as_ref().ok().cloned(),
        error: result.as_ref().err().map(|e| e.to_string()),
        timestamp: now_millis(),
    });
    result
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_stage: Option<String>,
    pub response: String,
}

impl TranscriptEntry {
    pub fn new(stage: Stage, response: impl Into<String>) -> Self {
        TranscriptEntry {
            expect_stage: Some(stage.as_str().to_string()),
            response: response.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordedRequest {
    pub stage: Stage,
    pub task: AgentTask,
    pub temperature: f64,
    pub prompt: String,
}

#[derive(Debug, Default)]
struct ScriptState {
    entries: Vec<TranscriptEntry>,
    cursor: usize,
    requests: Vec<RecordedRequest>,
}

/// Replays transcript entries strictly in order, one per request.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    state: Mutex<ScriptState>,
}

impl ScriptedBackend {
    pub fn new(entries: Vec<TranscriptEntry>) -> Self {
        ScriptedBackend {
            state: Mutex::new(ScriptState {
                entries,
                ..ScriptState::default()
            }),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, BackendError> {
        let entries =
            serde_json::from_str(text).map_err(|e| BackendError::Fixture(e.to_string()))?;
        Ok(Self::new(entries))
    }

    pub fn from_path(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Fixture(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Number of entries handed out so far.
    pub fn consumed(&self) -> usize {
        self.state.lock().unwrap().cursor
    }

    pub fn remaining(&self) -> usize {
        let s = self.state.lock().unwrap();
        s.entries.len() - s.cursor
    }

    /// Every request received, in order.
    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.state.lock().unwrap().requests.clone()
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<String, BackendError> {
        let mut s = self.state.lock().unwrap();
        s.requests.push(RecordedRequest {
            stage: request.stage,
            task: request.task,
            temperature: request.temperature,
            prompt: request.prompt.to_string(),
        });
        let index = s.cursor;
        let Some(entry) = s.entries.get(index) else {
            return Err(BackendError::TranscriptExhausted { consumed: index });
        };
        if let Some(expected) = &entry.expect_stage {
            if expected != request.stage.as_str() {
                return Err(BackendError::StageMismatch {
                    index,
                    expected: expected.clone(),
                    actual: request.stage,
                });
            }
        }
        let response = entry.response.clone();
        s.cursor += 1;
        Ok(response)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_attempts: u32,
    /// Delay before the second attempt; doubles for each further attempt.
    pub backoff_base: Duration,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        HttpConfig {
            base_url: base_url.into(),
            model: model.into(),
            api_key: None,
            timeout: Duration::from_secs(120),
            max_attempts: 3,
            backoff_base: Duration::from_millis(500),
        }
    }
}

/// Client for any `POST {base_url}/chat/completions` endpoint.
pub struct HttpBackend {
    config: HttpConfig,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend { config, agent }
    }

    fn endpoint(&self) -> String {
        format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        )
    }

    fn attempt(&self, body: &Value) -> Attempt {
        let mut req = self
            .agent
            .post(&self.endpoint())
            .header("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().unwrap_or_default();
        match status {
            200..=299 => match extract_content(&text) {
                Ok(content) => Attempt::Done(Ok(content)),
                Err(e) => Attempt::Done(Err(e)),
            },
            408 | 429 | 500..=599 => Attempt::Retry(format!("HTTP {status}")),
            _ => Attempt::Done(Err(BackendError::Rejected {
                status,
                detail: truncate(&text, 300),
            })),
        }
    }
}

enum Attempt {
    Done(Result<String, BackendError>),
    Retry(String),
}

fn truncate(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_string(),
    }
}

fn extract_content(body: &str) -> Result<String, BackendError> {
    let v: Value =
        serde_json::from_str(body).map_err(|e| BackendError::BadResponse(e.to_string()))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| BackendError::BadResponse("missing choices[0].message.content".into()))
}

impl ChatBackend for HttpBackend {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<String, BackendError> {
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
        });
        let attempts = self.config.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=attempts {
            match self.attempt(&body) {
                Attempt::Done(result) => return result,
                Attempt::Retry(detail) => {
                    tracing::warn!(attempt, %detail, "chat completion failed");
                    last = detail;
                }
            }
            if attempt < attempts {
                thread::sleep(self.config.backoff_base * 2u32.pow(attempt - 1));
            }
        }
        Err(BackendError::RetriesExhausted {
            attempts,
            detail: last,
        })
    }
}

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use ddap_cli::api::{self, App, ServerHandle};
use ddap_core::agent::{ScriptedBackend, TranscriptEntry};
use ddap_core::{ArtifactStore, ChatBackend, Orchestrator};
use serde_json::Value;

pub fn scratch_dir() -> tempfile::TempDir {
    let shm = Path::new("/dev/shm");
    if shm.is_dir() {
        if let Ok(dir) = tempfile::tempdir_in(shm) {
            return dir;
        }
    }
    tempfile::tempdir().unwrap()
}

pub fn start(root: &Path, backend: Arc<dyn ChatBackend>) -> ServerHandle {
    let orch = Orchestrator::new(ArtifactStore::new(root), backend);
    api::spawn("127.0.0.1:0".parse().unwrap(), App::new(orch)).unwrap()
}

pub fn start_scripted(root: &Path, entries: Vec<TranscriptEntry>) -> ServerHandle {
    start(root, Arc::new(ScriptedBackend::new(entries)))
}

pub struct Client {
    agent: ureq::Agent,
    base: String,
}

impl Client {
    pub fn new(server: &ServerHandle) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build()
            .into();
        Client {
            agent,
            base: server.base_url(),
        }
    }

    fn finish(mut response: ureq::http::Response<ureq::Body>) -> (u16, String) {
        let status = response.status().as_u16();
        (status, response.body_mut().read_to_string().unwrap())
    }

    pub fn get_raw(&self, path: &str) -> (u16, String) {
        Self::finish(
            self.agent
                .get(format!("{}{path}", self.base))
                .call()
                .unwrap(),
        )
    }

    pub fn get(&self, path: &str) -> (u16, Value) {
        let (s, body) = self.get_raw(path);
        (
            s,
            serde_json::from_str(&body).unwrap_or_else(|e| panic!("{path}: {e}: {body}")),
        )
    }

    pub fn post_raw(&self, path: &str, body: &str) -> (u16, String) {
        let url = format!("{}{path}", self.base);
        Self::finish(
            self.agent
                .post(url)
                .header("content-type", "application/json")
                .send(body)
                .unwrap(),
        )
    }

    pub fn post(&self, path: &str, body: Value) -> (u16, Value) {
        let (s, text) = self.post_raw(path, &body.to_string());
        (
            s,
            serde_json::from_str(&text).unwrap_or_else(|e| panic!("{path}: {e}: {text}")),
        )
    }

    pub fn post_empty(&self, path: &str) -> (u16, Value) {
        let (s, text) = self.post_raw(path, "");
        (
            s,
            serde_json::from_str(&text).unwrap_or_else(|e| panic!("{path}: {e}: {text}")),
        )
    }
}

/// Every file under `dir`, relative path to bytes.
pub fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

/// The HTTP equivalent of a headless run with default options.
pub fn drive_http(client: &Client, intent: &str, answers: &[String]) -> String {
    let (status, created) = client.post_empty("/api/sessions");
    assert_eq!(status, 201, "{created}");
    let id = created["session_id"].as_str().unwrap().to_string();
    for text in std::iter::once(intent).chain(answers.iter().map(String::as_str)) {
        let (status, turn) = client.post(
            &format!("/api/sessions/{id}/messages"),
            serde_json::json!({"text": text}),
        );
        assert_eq!(status, 200, "{turn}");
    }
    for step in ["preprocessing", "pipelines"] {
        let (status, turn) = client.post_empty(&format!("/api/sessions/{id}/{step}"));
        assert_eq!(status, 200, "{turn}");
    }
    let (status, v) = client.post(
        &format!("/api/sessions/{id}/pipelines/select"),
        serde_json::json!({"index": 1}),
    );
    assert_eq!(status, 200, "{v}");
    let (status, turn) = client.post_empty(&format!("/api/sessions/{id}/code"));
    assert_eq!(status, 200, "{turn}");
    let code = turn["artifact_ref"]["id"].as_str().unwrap().to_string();
    let (status, run) = client.post_empty(&format!("/api/code/{code}/execute"));
    assert_eq!(status, 200, "{run}");
    id
}

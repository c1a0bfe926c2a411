#![allow(dead_code)]

use std::sync::Arc;

use ddap_core::agent::{ScriptedBackend, TranscriptEntry};
use ddap_core::{fixtures, ArtifactStore, Orchestrator, Stage};
use serde_json::{json, Value};

pub fn question(message: &str) -> String {
    json!({"status": "question", "message": message}).to_string()
}

pub fn final_reply(message: &str, payload: Value) -> String {
    json!({"status": "final", "message": message, "payload": payload}).to_string()
}

pub fn entry(stage: Stage, response: impl Into<String>) -> TranscriptEntry {
    TranscriptEntry::new(stage, response)
}

/// The pipeline payload as the agent sends it: candidates only.
pub fn candidates_payload() -> Value {
    json!({"candidates": fixtures::pipeline_set()["candidates"].clone()})
}

pub fn code_reply(source: &str) -> String {
    final_reply(
        "code",
        json!({"files": [{"relative_path": "main.py", "content": source}], "entrypoint": "main.py"}),
    )
}

pub struct Harness {
    pub dir: tempfile::TempDir,
    pub backend: Arc<ScriptedBackend>,
    pub orch: Orchestrator,
}

/// A temporary directory, on tmpfs when one is available.
pub fn scratch_dir() -> tempfile::TempDir {
    let shm = std::path::Path::new("/dev/shm");
    if shm.is_dir() {
        if let Ok(dir) = tempfile::tempdir_in(shm) {
            return dir;
        }
    }
    tempfile::tempdir().unwrap()
}

pub fn harness(entries: Vec<TranscriptEntry>) -> Harness {
    let dir = scratch_dir();
    let backend = Arc::new(ScriptedBackend::new(entries));
    let orch = Orchestrator::new(ArtifactStore::new(dir.path()), backend.clone());
    Harness { dir, backend, orch }
}

/// Entries that complete stages 1 and 2 immediately with the fixture documents.
pub fn quick_dialogue() -> Vec<TranscriptEntry> {
    vec![
        entry(
            Stage::ProblemDefinition,
            final_reply("a1", fixtures::problem_definition()),
        ),
        entry(
            Stage::ComputeSpec,
            final_reply("a2", fixtures::compute_spec()),
        ),
    ]
}

pub fn quick_stage3() -> Vec<TranscriptEntry> {
    vec![
        entry(
            Stage::PipelineGeneration,
            final_reply("plan", fixtures::preprocessing_plan()),
        ),
        entry(
            Stage::PipelineGeneration,
            final_reply("set", candidates_payload()),
        ),
    ]
}

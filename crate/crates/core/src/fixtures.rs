//! Scripted fixtures shipped with the crate.
//!
//! The canonical scenario drives every stage with a scripted backend:
//! three Stage-1 questions, two Stage-2 questions, one preprocessing plan,
//! one five-candidate set and one code payload. The repair transcripts
//! replace the code-generation tail with a failing program followed by a
//! fixed (or still failing) repair.

use serde_json::Value;

use crate::agent::TranscriptEntry;

pub const INTENT: &str = include_str!("../fixtures/canonical/intent.txt");
pub const ANSWERS_JSON: &str = include_str!("../fixtures/canonical/answers.json");
pub const TRANSCRIPT_JSON: &str = include_str!("../fixtures/canonical/transcript.json");
pub const FAIL_THEN_FIXED_JSON: &str = include_str!("../fixtures/repair/fail_then_fixed.json");
pub const ALWAYS_FAILING_JSON: &str = include_str!("../fixtures/repair/always_failing.json");

const PROBLEM_DEFINITION: &str = include_str!("../fixtures/documents/problem_definition.json");
const COMPUTE_SPEC: &str = include_str!("../fixtures/documents/compute_spec.json");
const PREPROCESSING_PLAN: &str = include_str!("../fixtures/documents/preprocessing_plan.json");
const PIPELINE_SET: &str = include_str!("../fixtures/documents/pipeline_set.json");
const CODE_PAYLOAD: &str = include_str!("../fixtures/documents/code_payload.json");

fn parse(text: &str) -> Value {
    serde_json::from_str(text).expect("fixture documents are valid JSON")
}

pub fn problem_definition() -> Value {
    parse(PROBLEM_DEFINITION)
}

pub fn compute_spec() -> Value {
    parse(COMPUTE_SPEC)
}

pub fn preprocessing_plan() -> Value {
    parse(PREPROCESSING_PLAN)
}

pub fn pipeline_set() -> Value {
    parse(PIPELINE_SET)
}

/// Agent payload for code generation (files and entrypoint only).
pub fn code_payload() -> Value {
    parse(CODE_PAYLOAD)
}

/// A complete single-file code artifact document.
pub fn code_artifact(candidate_index: u8, source: &str) -> Value {
    serde_json::json!({
        "candidate_index": candidate_index,
        "files": [{"relative_path": "main.py", "content": source}],
        "entrypoint": "main.py",
        "platform": "PyTorch",
        "repair_count": 0
    })
}

pub fn answers() -> Vec<String> {
    serde_json::from_str(ANSWERS_JSON).expect("answers fixture is a JSON array of strings")
}

fn entries(text: &str) -> Vec<TranscriptEntry> {
    serde_json::from_str(text).expect("transcript fixtures are well formed")
}

/// The full canonical transcript.
pub fn transcript() -> Vec<TranscriptEntry> {
    entries(TRANSCRIPT_JSON)
}

/// Canonical entries up to and including the pipeline set.
pub fn transcript_through_pipelines() -> Vec<TranscriptEntry> {
    let mut all = transcript();
    all.retain(|e| e.expect_stage.as_deref() != Some("code_generation"));
    all
}

/// Canonical prefix followed by a failing program and a working repair.
pub fn fail_then_fixed_transcript() -> Vec<TranscriptEntry> {
    let mut all = transcript_through_pipelines();
    all.extend(entries(FAIL_THEN_FIXED_JSON));
    all
}

/// Canonical prefix followed by a failing program and a repair that still fails.
pub fn always_failing_transcript() -> Vec<TranscriptEntry> {
    let mut all = transcript_through_pipelines();
    all.extend(entries(ALWAYS_FAILING_JSON));
    all
}

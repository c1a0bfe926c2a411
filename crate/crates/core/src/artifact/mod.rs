//! Artifact documents produced by the staged workflow.
//!
//! Four artifacts make up a complete run: the problem definition, the
//! compute-environment specification, the pipeline set (five candidates
//! plus the preprocessing plan they share) and one or more code artifacts.
//! The preprocessing plan is also persisted on its own, since it is
//! generated in a separate step before the candidates.
//!
//! Documents travel as untyped JSON (`serde_json::Value`) between agents,
//! the store and the API. [`validate_artifact`] checks a document against
//! the schema for its kind; the typed structs below are for code that
//! needs addressable fields. Unknown fields are kept in `extra` so richer
//! agent output survives a round trip.

pub(crate) mod validate;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub use validate::{validate_artifact, validate_named, ValidationReport, Violation};

/// Current on-disk schema version stamped into every stored document.
pub const SCHEMA_VERSION: u64 = 1;

/// Number of pipeline candidates in every pipeline set.
pub const CANDIDATE_COUNT: usize = 5;

/// Header field naming the artifact kind in stored documents.
pub const KIND_FIELD: &str = "artifact_kind";
/// Header field carrying the schema version in stored documents.
pub const VERSION_FIELD: &str = "schema_version";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    ProblemDefinition,
    ComputeSpec,
    PreprocessingPlan,
    PipelineSet,
    CodeArtifact,
}

impl ArtifactKind {
    pub const ALL: [ArtifactKind; 5] = [
        ArtifactKind::ProblemDefinition,
        ArtifactKind::ComputeSpec,
        ArtifactKind::PreprocessingPlan,
        ArtifactKind::PipelineSet,
        ArtifactKind::CodeArtifact,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ArtifactKind::ProblemDefinition => "problem_definition",
            ArtifactKind::ComputeSpec => "compute_spec",
            ArtifactKind::PreprocessingPlan => "preprocessing_plan",
            ArtifactKind::PipelineSet => "pipeline_set",
            ArtifactKind::CodeArtifact => "code_artifact",
        }
    }

    /// Human-readable section label used in prompts.
    pub fn label(self) -> &'static str {
        match self {
            ArtifactKind::ProblemDefinition => "Problem Definition",
            ArtifactKind::ComputeSpec => "Compute Environment Specification",
            ArtifactKind::PreprocessingPlan => "Preprocessing Plan",
            ArtifactKind::PipelineSet => "Pipeline Specification",
            ArtifactKind::CodeArtifact => "Implementation Code",
        }
    }
}

impl fmt::Display for ArtifactKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown artifact kind `{0}`")]
pub struct UnknownKind(pub String);

impl FromStr for ArtifactKind {
    type Err = UnknownKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ArtifactKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expertise {
    Novice,
    Intermediate,
    Expert,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskType {
    Classification,
    Regression,
    Clustering,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Image,
    Text,
    Tabular,
    TimeSeries,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataDescription {
    pub modality: Modality,
    pub record_count: u64,
    pub feature_summary: String,
    pub target_description: String,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

/// A1: what the researcher wants to achieve and with which data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemDefinition {
    pub domain: String,
    pub user_expertise: Expertise,
    pub task_type: TaskType,
    pub objective: String,
    pub data_description: DataDescription,
    pub constraints: Vec<String>,
    pub success_metrics: Vec<String>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComputeLocation {
    OnPremises,
    Cloud,
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcceleratorKind {
    Gpu,
    Tpu,
    CpuOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accelerator {
    pub kind: AcceleratorKind,
    pub count: u64,
    pub memory_gb: f64,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Budget {
    Limited {
        amount: f64,
        currency: String,
    },
    /// Serialized as the bare string `"unconstrained"`.
    Unconstrained(String),
}

/// A2: where and with what the pipeline will run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComputeSpec {
    pub location: ComputeLocation,
    pub accelerators: Vec<Accelerator>,
    pub storage_gb: f64,
    pub budget: Budget,
    pub preferred_ml_platform: String,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessingStep {
    pub name: String,
    pub description: String,
    pub rationale: String,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessingPlan {
    pub steps: Vec<PreprocessingStep>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineCandidate {
    pub index: u8,
    pub name: String,
    pub description: String,
    pub preprocessing_refs: Vec<String>,
    pub model_family: String,
    pub training_procedure: String,
    pub evaluation_metrics: Vec<String>,
    pub pros: Vec<String>,
    pub cons: Vec<String>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

/// A3: the shared preprocessing plan and exactly five candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSet {
    pub preprocessing: PreprocessingPlan,
    pub candidates: Vec<PipelineCandidate>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl PipelineSet {
    pub fn candidate(&self, index: u8) -> Option<&PipelineCandidate> {
        self.candidates.iter().find(|c| c.index == index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeFile {
    pub relative_path: String,
    pub content: String,
}

/// A4: generated source files for one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeArtifact {
    pub candidate_index: u8,
    pub files: Vec<CodeFile>,
    pub entrypoint: String,
    pub platform: String,
    pub repair_count: u32,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl CodeArtifact {
    pub fn entrypoint_file(&self) -> Option<&CodeFile> {
        self.files
            .iter()
            .find(|f| f.relative_path == self.entrypoint)
    }
}

/// Error converting an untyped document into one of the typed artifacts.
#[derive(Debug, thiserror::Error)]
pub enum DocumentError {
    #[error("document failed validation: {0}")]
    Invalid(ValidationReport),
    #[error("document does not deserialize: {0}")]
    Shape(#[from] serde_json::Error),
}

/// Types that correspond to one artifact kind.
pub trait ArtifactDocument: Serialize + serde::de::DeserializeOwned {
    const KIND: ArtifactKind;

    /// Validates `doc` and deserializes it, ignoring the storage header.
    fn from_document(doc: &Value) -> Result<Self, DocumentError> {
        let report = validate_artifact(Self::KIND, doc);
        if !report.valid {
            return Err(DocumentError::Invalid(report));
        }
        Ok(serde_json::from_value(strip_header(doc))?)
    }

    /// Serializes into an unstamped document body.
    fn to_document(&self) -> Value {
        serde_json::to_value(self).expect("artifact types always serialize")
    }
}

impl ArtifactDocument for ProblemDefinition {
    const KIND: ArtifactKind = ArtifactKind::ProblemDefinition;
}
impl ArtifactDocument for ComputeSpec {
    const KIND: ArtifactKind = ArtifactKind::ComputeSpec;
}
impl ArtifactDocument for PreprocessingPlan {
    const KIND: ArtifactKind = ArtifactKind::PreprocessingPlan;
}
impl ArtifactDocument for PipelineSet {
    const KIND: ArtifactKind = ArtifactKind::PipelineSet;
}
impl ArtifactDocument for CodeArtifact {
    const KIND: ArtifactKind = ArtifactKind::CodeArtifact;
}

/// Returns a copy of `doc` with `artifact_kind` and `schema_version` set.
pub fn stamp(kind: ArtifactKind, doc: &Value) -> Value {
    let mut out = doc.clone();
    if let Value::Object(map) = &mut out {
        map.insert(KIND_FIELD.into(), Value::String(kind.as_str().into()));
        map.insert(VERSION_FIELD.into(), Value::from(SCHEMA_VERSION));
    }
    out
}

/// Returns a copy of `doc` without the storage header fields.
pub fn strip_header(doc: &Value) -> Value {
    let mut out = doc.clone();
    if let Value::Object(map) = &mut out {
        map.remove(KIND_FIELD);
        map.remove(VERSION_FIELD);
    }
    out
}

/// Canonical serialization: sorted keys, no insignificant whitespace.
///
/// `serde_json::Map` is ordered by key (the `preserve_order` feature is
/// not enabled anywhere in the workspace), so compact output is canonical.
pub fn canonical_json(doc: &Value) -> String {
    serde_json::to_string(doc).expect("json values always serialize")
}

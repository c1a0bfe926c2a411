//! Staged orchestration of role-configured LLM agents.
//!
//! A session moves through four stages, each producing a persisted
//! artifact: a problem definition, a compute specification, a set of five
//! candidate pipelines (with a shared preprocessing plan) and generated
//! code. Code can be run in a sandbox and repaired once from its error
//! output. The [`metrics`] module scores the resulting predictions.

pub mod agent;
pub mod artifact;
pub mod config;
pub mod error;
pub mod fixtures;
pub mod metrics;
pub mod orchestrator;
pub mod sandbox;
pub mod stage;
pub mod store;

pub use agent::{
    AgentConfig, AgentSet, AgentTask, ChatBackend, ConversationTurn, Envelope, EnvelopeStatus,
    HttpBackend, HttpConfig, ScriptedBackend, Snippet, SnippetCorpus, Speaker, TranscriptEntry,
};
pub use artifact::{
    validate_artifact, ArtifactKind, CodeArtifact, ComputeSpec, PipelineSet, PreprocessingPlan,
    ProblemDefinition, ValidationReport, Violation,
};
pub use error::{Error, ErrorClass, Result};
pub use metrics::{ConfusionMatrix, MetricValue};
pub use orchestrator::{
    ArtifactSet, HeadlessError, HeadlessOptions, Orchestrator, Profile, RepairOutcome,
    SessionState, TurnKind, TurnResult,
};
pub use sandbox::{ExecutionResult, SandboxLimits};
pub use stage::Stage;
pub use store::{ArtifactRef, ArtifactStore};

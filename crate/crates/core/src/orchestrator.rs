//! The staged workflow: problem definition, compute specification,
//! pipeline generation and code generation, each driven by its own agent.

use std::collections::BTreeMap;
use std::num::NonZeroUsize;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::agent::{
    parse_envelope, render_prompt, retrieve_context, send_turn, AgentSet, AgentTask, ChatBackend,
    ConversationTurn, EnvelopeStatus, Exchange, PromptArtifact, Snippet, SnippetCorpus, Speaker,
};
use crate::artifact::{
    strip_header, validate_artifact, ArtifactDocument, ArtifactKind, CodeArtifact, ComputeSpec,
    PipelineSet, CANDIDATE_COUNT,
};
use crate::error::{Error, Result};
use crate::sandbox::{
    execute_code, repair_context, ExecutionResult, SandboxLimits, DEFAULT_MAX_REPAIRS,
};
use crate::stage::Stage;
use crate::store::{is_valid_session_id, ArtifactRef, ArtifactStore};

/// Keys of `reprompt_counts`. Dialogue stages use their stage name.
pub mod step {
    pub const PROBLEM_DEFINITION: &str = "problem_definition";
    pub const COMPUTE_SPEC: &str = "compute_spec";
    pub const PREPROCESSING: &str = "preprocessing";
    pub const PIPELINE_GENERATION: &str = "pipeline_generation";
    pub const CODE_GENERATION: &str = "code_generation";
    pub const CODE_REPAIR: &str = "code_repair";
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Profile {
    pub domain: String,
    pub expertise: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionRecord {
    pub code_ref: String,
    pub result: ExecutionResult,
}

/// Everything the orchestrator knows about one session.
///
/// Fields are private so that the stage can only move forward through the
/// orchestrator's operations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    session_id: String,
    stage: Stage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    profile: Option<Profile>,
    #[serde(default)]
    conversations: BTreeMap<Stage, Vec<ConversationTurn>>,
    #[serde(default)]
    artifact_refs: BTreeMap<ArtifactKind, ArtifactRef>,
    /// Every code artifact of the session, repairs included, in creation order.
    #[serde(default)]
    code_refs: Vec<ArtifactRef>,
    #[serde(default)]
    selected_candidate: Option<u8>,
    #[serde(default)]
    reprompt_counts: BTreeMap<String, u32>,
    #[serde(default)]
    last_message: Option<String>,
    #[serde(default)]
    executions: Vec<ExecutionRecord>,
}

impl SessionState {
    fn new(session_id: String, profile: Option<Profile>) -> Self {
        SessionState {
            session_id,
            stage: Stage::ProblemDefinition,
            profile,
            conversations: BTreeMap::new(),
            artifact_refs: BTreeMap::new(),
            code_refs: Vec::new(),
            selected_candidate: None,
            reprompt_counts: BTreeMap::new(),
            last_message: None,
            executions: Vec::new(),
        }
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn profile(&self) -> Option<&Profile> {
        self.profile.as_ref()
    }

    pub fn conversation(&self, stage: Stage) -> &[ConversationTurn] {
        self.conversations
            .get(&stage)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn artifact_ref(&self, kind: ArtifactKind) -> Option<&ArtifactRef> {
        self.artifact_refs.get(&kind)
    }

    pub fn artifact_refs(&self) -> &BTreeMap<ArtifactKind, ArtifactRef> {
        &self.artifact_refs
    }

    pub fn code_refs(&self) -> &[ArtifactRef] {
        &self.code_refs
    }

    pub fn selected_candidate(&self) -> Option<u8> {
        self.selected_candidate
    }

    pub fn reprompt_count(&self, step: &str) -> u32 {
        self.reprompt_counts.get(step).copied().unwrap_or(0)
    }

    pub fn reprompt_counts(&self) -> &BTreeMap<String, u32> {
        &self.reprompt_counts
    }

    pub fn last_message(&self) -> Option<&str> {
        self.last_message.as_deref()
    }

    pub fn executions(&self) -> &[ExecutionRecord] {
        &self.executions
    }

    fn advance(&mut self) {
        self.stage = self.stage.next().expect("done is never advanced");
    }

    fn require(&self, operation: &'static str, expected: Stage) -> Result<()> {
        if self.stage == expected {
            Ok(())
        } else {
            Err(Error::BadStage {
                operation,
                expected: expected.as_str().into(),
                actual: self.stage,
            })
        }
    }

    fn require_code_stage(&self, operation: &'static str) -> Result<()> {
        match self.stage {
            Stage::CodeGeneration | Stage::Done => Ok(()),
            actual => Err(Error::BadStage {
                operation,
                expected: "code_generation or done".into(),
                actual,
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnKind {
    AgentQuestion,
    StageComplete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnResult {
    pub kind: TurnKind,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifact_ref: Option<ArtifactRef>,
    /// Session stage after the turn.
    pub stage: Stage,
}

/// Result of an execute/repair loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairOutcome {
    pub result: ExecutionResult,
    /// The code artifact that produced `result`.
    pub code_ref: ArtifactRef,
    pub executions: u32,
    pub repairs: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactSet {
    pub session_id: String,
    pub problem_definition: ArtifactRef,
    pub compute_spec: ArtifactRef,
    pub preprocessing_plan: ArtifactRef,
    pub pipeline_set: ArtifactRef,
    pub code: ArtifactRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub execution: Option<RepairOutcome>,
}

#[derive(Debug, Clone)]
pub struct HeadlessOptions {
    pub profile: Option<Profile>,
    /// Candidate to implement.
    pub candidate: u8,
    /// Run the generated code (with repair) and finish on success; when
    /// false the session is finalized without execution.
    pub execute: bool,
}

impl Default for HeadlessOptions {
    fn default() -> Self {
        HeadlessOptions {
            profile: None,
            candidate: 1,
            execute: true,
        }
    }
}

/// A headless run stopped. `turn` counts the user inputs consumed so far,
/// the intent being input 0; when answers ran out it is the index of the
/// missing answer.
#[derive(Debug, thiserror::Error)]
#[error("headless run failed at stage {stage}, turn {turn}: {source}")]
pub struct HeadlessError {
    pub stage: Stage,
    pub turn: usize,
    #[source]
    pub source: Error,
}

enum Reply {
    Question(String),
    Final { message: String, document: Value },
}

fn task_stage(task: AgentTask) -> Stage {
    match task {
        AgentTask::ProblemDefinition => Stage::ProblemDefinition,
        AgentTask::ComputeSpecification => Stage::ComputeSpec,
        AgentTask::Preprocessing | AgentTask::PipelineGeneration => Stage::PipelineGeneration,
        AgentTask::CodeGeneration | AgentTask::CodeRepair => Stage::CodeGeneration,
    }
}

fn correction(problem: &str, allow_question: bool) -> String {
    let shape = if allow_question {
        r#"{"status": "question" or "final", "message": "...", "payload": {...}}"#
    } else {
        r#"{"status": "final", "message": "...", "payload": {...}}"#
    };
    format!("Your previous reply was rejected: {problem}. Reply again with exactly one JSON object of the form {shape} and no other text.")
}

fn validated(kind: ArtifactKind, doc: Value) -> std::result::Result<Value, String> {
    let report = validate_artifact(kind, &doc);
    if report.valid {
        Ok(doc)
    } else {
        Err(format!("the payload failed validation: {report}"))
    }
}

pub struct Orchestrator {
    store: ArtifactStore,
    backend: Arc<dyn ChatBackend>,
    agents: AgentSet,
    corpus: Option<SnippetCorpus>,
    retrieval_k: NonZeroUsize,
    limits: SandboxLimits,
    max_repairs: u32,
}

impl Orchestrator {
    pub fn new(store: ArtifactStore, backend: Arc<dyn ChatBackend>) -> Self {
        Orchestrator {
            store,
            backend,
            agents: AgentSet::default(),
            corpus: None,
            retrieval_k: NonZeroUsize::new(3).expect("nonzero"),
            limits: SandboxLimits::default(),
            max_repairs: DEFAULT_MAX_REPAIRS,
        }
    }

    pub fn with_agents(mut self, agents: AgentSet) -> Self {
        self.agents = agents;
        self
    }

    /// Enables retrieval of up to `k` snippets per prompt.
    pub fn with_corpus(mut self, corpus: SnippetCorpus, k: NonZeroUsize) -> Self {
        self.corpus = Some(corpus);
        self.retrieval_k = k;
        self
    }

    pub fn with_limits(mut self, limits: SandboxLimits) -> Self {
        self.limits = limits;
        self
    }

    pub fn with_max_repairs(mut self, max_repairs: u32) -> Self {
        self.max_repairs = max_repairs;
        self
    }

    pub fn store(&self) -> &ArtifactStore {
        &self.store
    }

    pub fn agents(&self) -> &AgentSet {
        &self.agents
    }

    pub fn limits(&self) -> &SandboxLimits {
        &self.limits
    }

    pub fn max_repairs(&self) -> u32 {
        self.max_repairs
    }

    // ---- sessions ----

    pub fn create_session(&self, profile: Option<Profile>) -> Result<SessionState> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let mut state = SessionState::new(id, None);
        if let Some(p) = profile {
            state.conversations.entry(Stage::ProblemDefinition).or_default().push(ConversationTurn::new(
                Speaker::System,
                format!(
                    "Researcher profile: domain {}; expertise {}. Adapt questions and wording to this profile.",
                    p.domain, p.expertise
                ),
            ));
            state.profile = Some(p);
        }
        self.save_session(&state)?;
        Ok(state)
    }

    pub fn load_session(&self, session_id: &str) -> Result<SessionState> {
        if !is_valid_session_id(session_id) {
            return Err(Error::NotFound(format!("session {session_id}")));
        }
        let bytes = self.store.read_session_file(session_id)?;
        let state: SessionState = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Corruption(format!("session {session_id}: {e}")))?;
        if state.session_id != session_id {
            return Err(Error::Corruption(format!(
                "session file of {session_id} names {}",
                state.session_id
            )));
        }
        Ok(state)
    }

    pub fn save_session(&self, state: &SessionState) -> Result<()> {
        let bytes = serde_json::to_vec_pretty(state).expect("session state serializes");
        self.store.write_session_file(&state.session_id, &bytes)?;
        Ok(())
    }

    /// Checks stage precedence against the store: every artifact required
    /// by the current stage is recorded, loads, and validates.
    pub fn verify_session(&self, state: &SessionState) -> std::result::Result<(), String> {
        let required: &[ArtifactKind] = match state.stage {
            Stage::ProblemDefinition => &[],
            Stage::ComputeSpec => &[ArtifactKind::ProblemDefinition],
            Stage::PipelineGeneration => {
                &[ArtifactKind::ProblemDefinition, ArtifactKind::ComputeSpec]
            }
            Stage::CodeGeneration | Stage::Done => &[
                ArtifactKind::ProblemDefinition,
                ArtifactKind::ComputeSpec,
                ArtifactKind::PipelineSet,
            ],
        };
        for kind in required {
            let r = state
                .artifact_refs
                .get(kind)
                .ok_or_else(|| format!("stage {} without {kind}", state.stage))?;
            let doc = self.store.load_artifact(r).map_err(|e| e.to_string())?;
            let report = validate_artifact(*kind, &doc);
            if !report.valid {
                return Err(format!("{kind} is invalid: {report}"));
            }
        }
        if state.stage == Stage::Done && state.code_refs.is_empty() {
            return Err("done without any code artifact".into());
        }
        if state.selected_candidate.is_some()
            && !state.artifact_refs.contains_key(&ArtifactKind::PipelineSet)
        {
            return Err("candidate selected without a pipeline set".into());
        }
        Ok(())
    }

    // ---- agent plumbing ----

    fn prior(&self, state: &SessionState, kinds: &[ArtifactKind]) -> Result<Vec<PromptArtifact>> {
        let mut out = Vec::new();
        for kind in kinds {
            if let Some(r) = state.artifact_refs.get(kind) {
                out.push(PromptArtifact::new(*kind, self.store.load_text(r)?));
            }
        }
        Ok(out)
    }

    fn snippets(&self, query: &str) -> Vec<Snippet> {
        match &self.corpus {
            None => Vec::new(),
            Some(corpus) => {
                let r = retrieve_context(query, Some(corpus), self.retrieval_k);
                if let Some(w) = r.warning {
                    tracing::warn!("{w}");
                }
                r.snippets
            }
        }
    }

    /// One agent interaction with corrective re-prompts. `count` is the
    /// step's re-prompt counter and is updated in place; once it has reached
    /// the agent's `max_reprompt`, the next unusable reply is fatal.
    #[allow(clippy::too_many_arguments)]
    fn exchange(
        &self,
        session_id: &str,
        step: &str,
        task: AgentTask,
        prior: &[PromptArtifact],
        snippets: &[Snippet],
        conversation: &mut Vec<ConversationTurn>,
        allow_question: bool,
        count: &mut u32,
        mut build: impl FnMut(Map<String, Value>) -> std::result::Result<Value, String>,
    ) -> Result<Reply> {
        let config = self.agents.get(task);
        let stage = task_stage(task);
        let mut log: Vec<Exchange> = Vec::new();
        let outcome = loop {
            let prompt = render_prompt(config, prior, snippets, conversation);
            let raw = match send_turn(config, self.backend.as_ref(), stage, &prompt, &mut log) {
                Ok(raw) => raw,
                Err(e) => break Err(Error::Backend(e)),
            };
            let problem = match parse_envelope(&raw) {
                Err(e) => e.reason,
                Ok(env) => match (env.status, env.payload) {
                    (EnvelopeStatus::Question, _) if allow_question => {
                        conversation
                            .push(ConversationTurn::new(Speaker::Agent, env.message.clone()));
                        break Ok(Reply::Question(env.message));
                    }
                    (EnvelopeStatus::Question, _) => {
                        "this step needs a final reply, not a question".to_string()
                    }
                    (EnvelopeStatus::Final, None) => {
                        "a final reply must carry a payload".to_string()
                    }
                    (EnvelopeStatus::Final, Some(payload)) => match build(payload) {
                        Ok(document) => {
                            conversation
                                .push(ConversationTurn::new(Speaker::Agent, env.message.clone()));
                            break Ok(Reply::Final {
                                message: env.message,
                                document,
                            });
                        }
                        Err(problem) => problem,
                    },
                },
            };
            if *count >= config.max_reprompt {
                break Err(Error::GuardrailExhausted {
                    step: step.to_string(),
                    attempts: *count + 1,
                    last_problem: problem,
                });
            }
            *count += 1;
            tracing::debug!(step, attempt = *count, "re-prompting: {problem}");
            let shown = if raw.trim().is_empty() {
                "(empty reply)".to_string()
            } else {
                raw
            };
            conversation.push(ConversationTurn::new(Speaker::Agent, shown));
            conversation.push(ConversationTurn::new(
                Speaker::System,
                correction(&problem, allow_question),
            ));
        };
        self.store.append_log(session_id, step, &log)?;
        outcome
    }

    /// Runs a one-shot step with a fresh context and a fresh re-prompt budget.
    fn one_shot(
        &self,
        state: &mut SessionState,
        step: &'static str,
        task: AgentTask,
        prior: &[PromptArtifact],
        instruction: String,
        build: impl FnMut(Map<String, Value>) -> std::result::Result<Value, String>,
    ) -> Result<(String, Value)> {
        let query = prior.first().map(|p| p.text.clone()).unwrap_or_default();
        let snippets = self.snippets(&query);
        let mut conversation = vec![ConversationTurn::new(Speaker::System, instruction)];
        let mut count = 0;
        let reply = self.exchange(
            &state.session_id,
            step,
            task,
            prior,
            &snippets,
            &mut conversation,
            false,
            &mut count,
            build,
        );
        state.reprompt_counts.insert(step.to_string(), count);
        match reply {
            Ok(Reply::Final { message, document }) => {
                state.last_message = Some(message.clone());
                Ok((message, document))
            }
            Ok(Reply::Question(_)) => unreachable!("questions are rejected in one-shot steps"),
            Err(e) => {
                self.save_session(state)?;
                Err(e)
            }
        }
    }

    // ---- stages 1 and 2 ----

    /// Sends a user message to the agent of the current dialogue stage.
    pub fn submit_user_message(&self, state: &mut SessionState, text: &str) -> Result<TurnResult> {
        let stage = state.stage;
        let (task, kind, step_name) = match stage {
            Stage::ProblemDefinition => (
                AgentTask::ProblemDefinition,
                ArtifactKind::ProblemDefinition,
                step::PROBLEM_DEFINITION,
            ),
            Stage::ComputeSpec => (
                AgentTask::ComputeSpecification,
                ArtifactKind::ComputeSpec,
                step::COMPUTE_SPEC,
            ),
            actual => {
                return Err(Error::BadStage {
                    operation: "submit_user_message",
                    expected: "problem_definition or compute_spec".into(),
                    actual,
                })
            }
        };
        if text.trim().is_empty() {
            return Err(Error::InvalidInput("message text must not be empty".into()));
        }
        let prior = self.prior(state, &[ArtifactKind::ProblemDefinition])?;
        let mut conversation = state.conversations.remove(&stage).unwrap_or_default();
        conversation.push(ConversationTurn::new(Speaker::User, text));
        let query: Vec<&str> = conversation
            .iter()
            .filter(|t| t.speaker == Speaker::User)
            .map(|t| t.text.as_str())
            .collect();
        let snippets = self.snippets(&query.join(" "));
        let mut count = state.reprompt_count(step_name);
        let reply = self.exchange(
            &state.session_id,
            step_name,
            task,
            &prior,
            &snippets,
            &mut conversation,
            true,
            &mut count,
            |payload| validated(kind, Value::Object(payload)),
        );
        state.conversations.insert(stage, conversation);
        state.reprompt_counts.insert(step_name.to_string(), count);
        let result = match reply {
            Err(e) => {
                self.save_session(state)?;
                return Err(e);
            }
            Ok(Reply::Question(message)) => TurnResult {
                kind: TurnKind::AgentQuestion,
                message,
                artifact_ref: None,
                stage,
            },
            Ok(Reply::Final { message, document }) => {
                let r = self
                    .store
                    .persist_artifact(&state.session_id, kind, &document)?;
                state.artifact_refs.insert(kind, r.clone());
                state.advance();
                TurnResult {
                    kind: TurnKind::StageComplete,
                    message,
                    artifact_ref: Some(r),
                    stage: state.stage,
                }
            }
        };
        state.last_message = Some(result.message.clone());
        self.save_session(state)?;
        Ok(result)
    }

    // ---- stage 3 ----

    pub fn generate_preprocessing(&self, state: &mut SessionState) -> Result<TurnResult> {
        state.require("generate_preprocessing", Stage::PipelineGeneration)?;
        let prior = self.prior(
            state,
            &[ArtifactKind::ProblemDefinition, ArtifactKind::ComputeSpec],
        )?;
        let (message, document) = self.one_shot(
            state,
            step::PREPROCESSING,
            AgentTask::Preprocessing,
            &prior,
            "Propose the preprocessing plan for this project.".into(),
            |payload| validated(ArtifactKind::PreprocessingPlan, Value::Object(payload)),
        )?;
        let r = self.store.persist_artifact(
            &state.session_id,
            ArtifactKind::PreprocessingPlan,
            &document,
        )?;
        state
            .artifact_refs
            .insert(ArtifactKind::PreprocessingPlan, r.clone());
        self.save_session(state)?;
        Ok(TurnResult {
            kind: TurnKind::StageComplete,
            message,
            artifact_ref: Some(r),
            stage: state.stage,
        })
    }

    /// Generates the five candidates. The stored preprocessing plan is
    /// embedded into the pipeline set as its `preprocessing` field.
    pub fn generate_pipelines(&self, state: &mut SessionState) -> Result<TurnResult> {
        state.require("generate_pipelines", Stage::PipelineGeneration)?;
        let plan_ref = state
            .artifact_refs
            .get(&ArtifactKind::PreprocessingPlan)
            .ok_or_else(|| Error::Precondition("generate the preprocessing plan first".into()))?;
        let plan = strip_header(&self.store.load_artifact(plan_ref)?);
        let prior = self.prior(
            state,
            &[
                ArtifactKind::ProblemDefinition,
                ArtifactKind::ComputeSpec,
                ArtifactKind::PreprocessingPlan,
            ],
        )?;
        let (message, document) = self.one_shot(
            state,
            step::PIPELINE_GENERATION,
            AgentTask::PipelineGeneration,
            &prior,
            format!("Design exactly {CANDIDATE_COUNT} candidate pipelines for this project."),
            |mut payload| {
                payload.insert("preprocessing".into(), plan.clone());
                validated(ArtifactKind::PipelineSet, Value::Object(payload))
            },
        )?;
        let r =
            self.store
                .persist_artifact(&state.session_id, ArtifactKind::PipelineSet, &document)?;
        state
            .artifact_refs
            .insert(ArtifactKind::PipelineSet, r.clone());
        state.advance();
        self.save_session(state)?;
        Ok(TurnResult {
            kind: TurnKind::StageComplete,
            message,
            artifact_ref: Some(r),
            stage: state.stage,
        })
    }

    pub fn select_pipeline(&self, state: &mut SessionState, index: u8) -> Result<()> {
        if !state.artifact_refs.contains_key(&ArtifactKind::PipelineSet) {
            return Err(Error::Precondition("no pipeline set to select from".into()));
        }
        if !(1..=CANDIDATE_COUNT as u8).contains(&index) {
            return Err(Error::OutOfRange(format!(
                "candidate index {index} is outside 1-{CANDIDATE_COUNT}"
            )));
        }
        state.selected_candidate = Some(index);
        self.save_session(state)
    }

    // ---- stage 4 ----

    fn code_prior(&self, state: &SessionState) -> Result<Vec<PromptArtifact>> {
        self.prior(
            state,
            &[
                ArtifactKind::ProblemDefinition,
                ArtifactKind::ComputeSpec,
                ArtifactKind::PreprocessingPlan,
                ArtifactKind::PipelineSet,
            ],
        )
    }

    fn record_code(&self, state: &mut SessionState, document: &Value) -> Result<ArtifactRef> {
        let r =
            self.store
                .persist_artifact(&state.session_id, ArtifactKind::CodeArtifact, document)?;
        state.code_refs.retain(|c| c.path != r.path);
        state.code_refs.push(r.clone());
        state
            .artifact_refs
            .insert(ArtifactKind::CodeArtifact, r.clone());
        Ok(r)
    }

    /// Generates code for `candidate`, or for the selected candidate.
    pub fn generate_code(
        &self,
        state: &mut SessionState,
        candidate: Option<u8>,
    ) -> Result<TurnResult> {
        state.require("generate_code", Stage::CodeGeneration)?;
        let index = candidate
            .or(state.selected_candidate)
            .ok_or_else(|| Error::Precondition("no candidate given and none selected".into()))?;
        if !(1..=CANDIDATE_COUNT as u8).contains(&index) {
            return Err(Error::OutOfRange(format!(
                "candidate index {index} is outside 1-{CANDIDATE_COUNT}"
            )));
        }
        let a2 = self.load_typed::<ComputeSpec>(state, ArtifactKind::ComputeSpec)?;
        let a3 = self.load_typed::<PipelineSet>(state, ArtifactKind::PipelineSet)?;
        let name = a3
            .candidate(index)
            .map(|c| c.name.clone())
            .unwrap_or_default();
        let prior = self.code_prior(state)?;
        let platform = Value::String(a2.preferred_ml_platform);
        let (message, document) = self.one_shot(
            state,
            step::CODE_GENERATION,
            AgentTask::CodeGeneration,
            &prior,
            format!("Implement candidate {index} ({name}) as a complete, runnable program."),
            |mut payload| {
                payload.insert("candidate_index".into(), Value::from(index));
                payload.insert("platform".into(), platform.clone());
                payload.insert("repair_count".into(), Value::from(0));
                validated(ArtifactKind::CodeArtifact, Value::Object(payload))
            },
        )?;
        let r = self.record_code(state, &document)?;
        self.save_session(state)?;
        Ok(TurnResult {
            kind: TurnKind::StageComplete,
            message,
            artifact_ref: Some(r),
            stage: state.stage,
        })
    }

    /// Generates code for every candidate, in index order.
    pub fn generate_all_code(&self, state: &mut SessionState) -> Result<Vec<TurnResult>> {
        (1..=CANDIDATE_COUNT as u8)
            .map(|k| self.generate_code(state, Some(k)))
            .collect()
    }

    fn load_typed<T: ArtifactDocument>(
        &self,
        state: &SessionState,
        kind: ArtifactKind,
    ) -> Result<T> {
        let r = state
            .artifact_refs
            .get(&kind)
            .ok_or_else(|| Error::Precondition(format!("session has no {kind}")))?;
        self.load_ref(r)
    }

    fn load_ref<T: ArtifactDocument>(&self, r: &ArtifactRef) -> Result<T> {
        let doc = self.store.load_artifact(r)?;
        T::from_document(&doc).map_err(|e| Error::Corruption(format!("{}: {e}", r.id())))
    }

    fn own_code(&self, state: &SessionState, code_ref: &ArtifactRef) -> Result<CodeArtifact> {
        if code_ref.session_id != state.session_id
            || code_ref.artifact_kind != ArtifactKind::CodeArtifact
        {
            return Err(Error::InvalidInput(format!(
                "{} is not a code artifact of session {}",
                code_ref.id(),
                state.session_id
            )));
        }
        self.load_ref(code_ref)
    }

    /// Runs a code artifact. The first successful run completes the session.
    pub fn execute(
        &self,
        state: &mut SessionState,
        code_ref: &ArtifactRef,
    ) -> Result<ExecutionResult> {
        state.require_code_stage("execute")?;
        let code = self.own_code(state, code_ref)?;
        let result = execute_code(&code, &self.limits)?;
        state.executions.push(ExecutionRecord {
            code_ref: code_ref.id(),
            result: result.clone(),
        });
        if result.succeeded() && state.stage == Stage::CodeGeneration {
            state.advance();
        }
        self.save_session(state)?;
        Ok(result)
    }

    /// Asks the code agent to fix `code_ref` given its failed run. The
    /// repaired version is stored next to the original.
    pub fn repair(
        &self,
        state: &mut SessionState,
        code_ref: &ArtifactRef,
        failure: &ExecutionResult,
    ) -> Result<TurnResult> {
        state.require_code_stage("repair")?;
        let code = self.own_code(state, code_ref)?;
        if failure.succeeded() {
            return Err(Error::Precondition(
                "the run succeeded; nothing to repair".into(),
            ));
        }
        if code.repair_count >= self.max_repairs {
            return Err(Error::RepairBudgetExhausted {
                repair_count: code.repair_count,
                max_repairs: self.max_repairs,
            });
        }
        let prior = self.code_prior(state)?;
        let index = code.candidate_index;
        let platform = code.platform.clone();
        let repairs = code.repair_count + 1;
        let (message, document) = self.one_shot(
            state,
            step::CODE_REPAIR,
            AgentTask::CodeRepair,
            &prior,
            repair_context(&code, failure),
            |mut payload| {
                payload.insert("candidate_index".into(), Value::from(index));
                payload.insert("platform".into(), Value::String(platform.clone()));
                payload.insert("repair_count".into(), Value::from(repairs));
                validated(ArtifactKind::CodeArtifact, Value::Object(payload))
            },
        )?;
        let r = self.record_code(state, &document)?;
        self.save_session(state)?;
        Ok(TurnResult {
            kind: TurnKind::StageComplete,
            message,
            artifact_ref: Some(r),
            stage: state.stage,
        })
    }

    /// Repairs `code_ref` using its most recent recorded execution.
    pub fn repair_last_failure(
        &self,
        state: &mut SessionState,
        code_ref: &ArtifactRef,
    ) -> Result<TurnResult> {
        let id = code_ref.id();
        let failure = state
            .executions
            .iter()
            .rev()
            .find(|e| e.code_ref == id)
            .map(|e| e.result.clone())
            .ok_or_else(|| Error::Precondition(format!("{id} has not been executed")))?;
        self.repair(state, code_ref, &failure)
    }

    /// Execute, and on failure repair and re-execute, at most `max_repairs` times.
    pub fn run_with_repair(
        &self,
        state: &mut SessionState,
        code_ref: &ArtifactRef,
    ) -> Result<RepairOutcome> {
        let mut current = code_ref.clone();
        let mut executions = 0;
        let mut repairs = 0;
        loop {
            let result = self.execute(state, &current)?;
            executions += 1;
            let code = self.own_code(state, &current)?;
            if result.succeeded() || code.repair_count >= self.max_repairs {
                return Ok(RepairOutcome {
                    result,
                    code_ref: current,
                    executions,
                    repairs,
                });
            }
            current = self
                .repair(state, &current, &result)?
                .artifact_ref
                .expect("repair yields a code ref");
            repairs += 1;
        }
    }

    /// Ends the session without a successful execution.
    pub fn finalize(&self, state: &mut SessionState) -> Result<()> {
        state.require("finalize", Stage::CodeGeneration)?;
        if state.code_refs.is_empty() {
            return Err(Error::Precondition(
                "generate code before finalizing".into(),
            ));
        }
        state.advance();
        self.save_session(state)
    }

    // ---- reuse ----

    /// Copies an artifact from any session into `state`, skipping the
    /// dialogue that would have produced it.
    pub fn import_artifact(
        &self,
        state: &mut SessionState,
        artifact_id: &str,
    ) -> Result<ArtifactRef> {
        let source = self.store.resolve(artifact_id)?;
        let kind = source.artifact_kind;
        state.require("import_artifact", Stage::producing(kind))?;
        let r = self.store.copy_artifact(&source, &state.session_id)?;
        match kind {
            ArtifactKind::CodeArtifact => {
                state.code_refs.retain(|c| c.path != r.path);
                state.code_refs.push(r.clone());
                state.artifact_refs.insert(kind, r.clone());
            }
            ArtifactKind::PreprocessingPlan => {
                state.artifact_refs.insert(kind, r.clone());
            }
            ArtifactKind::ProblemDefinition
            | ArtifactKind::ComputeSpec
            | ArtifactKind::PipelineSet => {
                state.artifact_refs.insert(kind, r.clone());
                state.advance();
            }
        }
        self.save_session(state)?;
        Ok(r)
    }

    // ---- headless ----

    /// Drives every stage with the given intent and answers.
    pub fn run_headless(
        &self,
        intent: &str,
        answers: &[String],
        options: &HeadlessOptions,
    ) -> std::result::Result<ArtifactSet, HeadlessError> {
        let fail = |stage: Stage, turn: usize| {
            move |source: Error| HeadlessError {
                stage,
                turn,
                source,
            }
        };
        let mut state = self
            .create_session(options.profile.clone())
            .map_err(fail(Stage::ProblemDefinition, 0))?;
        let mut inputs = std::iter::once(intent).chain(answers.iter().map(String::as_str));
        let mut turn = 0;
        while matches!(state.stage, Stage::ProblemDefinition | Stage::ComputeSpec) {
            let stage = state.stage;
            let Some(text) = inputs.next() else {
                return Err(HeadlessError {
                    stage,
                    turn,
                    source: Error::Precondition(
                        "answers exhausted before the stage completed".into(),
                    ),
                });
            };
            self.submit_user_message(&mut state, text)
                .map_err(fail(stage, turn))?;
            turn += 1;
        }
        let unused = inputs.count();
        if unused > 0 {
            tracing::warn!("{unused} answer(s) left unused");
        }
        let stage = Stage::PipelineGeneration;
        self.generate_preprocessing(&mut state)
            .map_err(fail(stage, turn))?;
        self.generate_pipelines(&mut state)
            .map_err(fail(stage, turn))?;
        let stage = Stage::CodeGeneration;
        self.select_pipeline(&mut state, options.candidate)
            .map_err(fail(stage, turn))?;
        let code = self
            .generate_code(&mut state, None)
            .map_err(fail(stage, turn))?
            .artifact_ref
            .expect("code generation yields a ref");
        let (code, execution) = if options.execute {
            let outcome = self
                .run_with_repair(&mut state, &code)
                .map_err(fail(stage, turn))?;
            if !outcome.result.succeeded() {
                return Err(HeadlessError {
                    stage,
                    turn,
                    source: Error::ExecutionFailed {
                        exit_status: outcome.result.exit_status,
                        executions: outcome.executions,
                    },
                });
            }
            (outcome.code_ref.clone(), Some(outcome))
        } else {
            self.finalize(&mut state).map_err(fail(stage, turn))?;
            (code, None)
        };
        let get = |kind| state.artifact_refs[&kind].clone();
        Ok(ArtifactSet {
            session_id: state.session_id.clone(),
            problem_definition: get(ArtifactKind::ProblemDefinition),
            compute_spec: get(ArtifactKind::ComputeSpec),
            preprocessing_plan: get(ArtifactKind::PreprocessingPlan),
            pipeline_set: get(ArtifactKind::PipelineSet),
            code,
            execution,
        })
    }
}

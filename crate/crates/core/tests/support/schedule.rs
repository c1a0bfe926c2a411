//! Random operation schedules against a backend that always answers in the
//! expected shape, or deliberately not when told to misbehave.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::{Arc, Mutex};

use ddap_core::agent::{BackendError, ChatBackend, ChatRequest};
use ddap_core::{
    fixtures, AgentTask, ArtifactKind, ArtifactStore, ErrorClass, Orchestrator, SessionState, Stage,
};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy)]
pub enum Mood {
    Ask,
    Answer,
    Garble,
}

#[derive(Default)]
struct Responsive {
    moods: Mutex<VecDeque<Mood>>,
}

fn envelope(status: &str, payload: Option<Value>) -> String {
    let mut v = json!({"status": status, "message": "reply"});
    if let Some(p) = payload {
        v["payload"] = p;
    }
    v.to_string()
}

impl ChatBackend for Responsive {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<String, BackendError> {
        let mood = self
            .moods
            .lock()
            .unwrap()
            .pop_front()
            .unwrap_or(Mood::Answer);
        let dialogue = matches!(
            request.task,
            AgentTask::ProblemDefinition | AgentTask::ComputeSpecification
        );
        let payload = match request.task {
            AgentTask::ProblemDefinition => fixtures::problem_definition(),
            AgentTask::ComputeSpecification => fixtures::compute_spec(),
            AgentTask::Preprocessing => fixtures::preprocessing_plan(),
            AgentTask::PipelineGeneration => {
                json!({"candidates": fixtures::pipeline_set()["candidates"].clone()})
            }
            AgentTask::CodeGeneration | AgentTask::CodeRepair => {
                json!({"files": [{"relative_path": "main.py", "content": "print('ok')\n"}], "entrypoint": "main.py"})
            }
        };
        Ok(match mood {
            Mood::Garble => "not an envelope".to_string(),
            Mood::Ask if dialogue => envelope("question", None),
            _ => envelope("final", Some(payload)),
        })
    }
}

#[derive(Debug, Clone)]
pub enum Op {
    Say,
    Preprocess,
    Pipelines,
    Select(u8),
    Code(Option<u8>),
    Finalize,
    Import(ArtifactKind),
    Reload,
}

pub fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => Just(Op::Say),
        2 => Just(Op::Preprocess),
        2 => Just(Op::Pipelines),
        2 => (0u8..=6).prop_map(Op::Select),
        2 => proptest::option::of(0u8..=6).prop_map(Op::Code),
        1 => Just(Op::Finalize),
        1 => prop_oneof![
            Just(ArtifactKind::ProblemDefinition),
            Just(ArtifactKind::ComputeSpec),
            Just(ArtifactKind::PipelineSet),
        ]
        .prop_map(Op::Import),
        1 => Just(Op::Reload),
    ]
}

pub fn mood() -> impl Strategy<Value = Mood> {
    prop_oneof![2 => Just(Mood::Answer), 2 => Just(Mood::Ask), 1 => Just(Mood::Garble)]
}

/// Up to 47 operations and 15 backend moods.
pub fn schedule() -> impl Strategy<Value = (Vec<Op>, Vec<Mood>)> {
    (
        proptest::collection::vec(op(), 1..48),
        proptest::collection::vec(mood(), 0..16),
    )
}

fn stage_index(stage: Stage) -> usize {
    Stage::ORDER.iter().position(|s| *s == stage).unwrap()
}

/// A session through stage 3 whose artifacts can be imported.
fn donor(orch: &Orchestrator) -> SessionState {
    let mut s = orch.create_session(None).unwrap();
    orch.submit_user_message(&mut s, "donor").unwrap();
    orch.submit_user_message(&mut s, "donor").unwrap();
    orch.generate_preprocessing(&mut s).unwrap();
    orch.generate_pipelines(&mut s).unwrap();
    s
}

fn apply(
    orch: &Orchestrator,
    donor: &SessionState,
    s: &mut SessionState,
    op: &Op,
) -> ddap_core::Result<()> {
    match op {
        Op::Say => orch.submit_user_message(s, "more detail").map(drop),
        Op::Preprocess => orch.generate_preprocessing(s).map(drop),
        Op::Pipelines => orch.generate_pipelines(s).map(drop),
        Op::Select(k) => orch.select_pipeline(s, *k),
        Op::Code(k) => orch.generate_code(s, *k).map(drop),
        Op::Finalize => orch.finalize(s),
        Op::Import(kind) => {
            let id = donor.artifact_ref(*kind).unwrap().id();
            orch.import_artifact(s, &id).map(drop)
        }
        Op::Reload => {
            *s = orch.load_session(s.session_id())?;
            Ok(())
        }
    }
}

/// Runs one schedule in a fresh store under `root`, checking after every
/// operation that the stage moved forward by at most one step, that a
/// failed operation left the stage (and, for ordering and input errors,
/// the whole state) unchanged, that every artifact the stage requires is
/// present and valid, and that the state on disk matches memory.
pub fn check(root: &Path, ops: &[Op], moods: &[Mood]) -> Result<(), TestCaseError> {
    let backend = Arc::new(Responsive::default());
    let orch = Orchestrator::new(ArtifactStore::new(root), backend.clone());
    let donor = donor(&orch);
    backend.moods.lock().unwrap().extend(moods.iter().copied());

    let mut s = orch.create_session(None).unwrap();
    for op in ops {
        let before = s.clone();
        let outcome = apply(&orch, &donor, &mut s, op);
        prop_assert!(
            stage_index(s.stage()) >= stage_index(before.stage()),
            "{op:?} moved {} -> {}",
            before.stage(),
            s.stage()
        );
        prop_assert!(
            stage_index(s.stage()) <= stage_index(before.stage()) + 1,
            "{op:?} skipped a stage"
        );
        if let Err(e) = &outcome {
            prop_assert_eq!(s.stage(), before.stage());
            match e.class() {
                ErrorClass::BadStage | ErrorClass::NotFound | ErrorClass::ValidationFailed => {
                    prop_assert_eq!(&s, &before, "{:?} failed with {} but changed state", op, e)
                }
                ErrorClass::GuardrailExhausted => {}
                other => prop_assert!(false, "{op:?} failed unexpectedly ({other}): {e}"),
            }
        }
        prop_assert_eq!(orch.verify_session(&s), Ok(()));
        prop_assert_eq!(&orch.load_session(s.session_id()).unwrap(), &s);
    }
    Ok(())
}

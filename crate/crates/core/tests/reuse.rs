mod common;

use std::fs;

use common::*;
use ddap_core::{fixtures, ArtifactKind, Error, ErrorClass, HeadlessOptions, Stage};

#[test]
fn imported_compute_spec_skips_stage_two() {
    let mut entries = fixtures::transcript();
    // Second project: a new problem definition, then straight to stage 3.
    entries.push(entry(
        Stage::ProblemDefinition,
        final_reply("a1", fixtures::problem_definition()),
    ));
    entries.extend(quick_stage3());
    let h = harness(entries);
    let o = &h.orch;
    let first = o
        .run_headless(
            fixtures::INTENT,
            &fixtures::answers(),
            &HeadlessOptions::default(),
        )
        .unwrap();

    let mut s = o.create_session(None).unwrap();
    o.submit_user_message(&mut s, "Same lab, new pest survey.")
        .unwrap();
    assert_eq!(s.stage(), Stage::ComputeSpec);
    let imported = o.import_artifact(&mut s, &first.compute_spec.id()).unwrap();
    assert_eq!(s.stage(), Stage::PipelineGeneration);
    assert!(s.conversation(Stage::ComputeSpec).is_empty());

    let source_bytes = fs::read(o.store().absolute(&first.compute_spec)).unwrap();
    assert_eq!(
        fs::read(o.store().absolute(&imported)).unwrap(),
        source_bytes
    );
    assert_eq!(imported.content_hash, first.compute_spec.content_hash);
    assert_eq!(imported.id(), format!("{}:a2_compute", s.session_id()));

    let before = h.backend.requests().len();
    o.generate_preprocessing(&mut s).unwrap();
    o.generate_pipelines(&mut s).unwrap();
    let source = String::from_utf8(source_bytes).unwrap();
    for request in &h.backend.requests()[before..] {
        assert!(request.prompt.contains(&source));
    }
}

#[test]
fn import_at_wrong_stage_is_an_ordering_error() {
    let h = harness(fixtures::transcript());
    let first = h
        .orch
        .run_headless(
            fixtures::INTENT,
            &fixtures::answers(),
            &HeadlessOptions::default(),
        )
        .unwrap();
    let mut s = h.orch.create_session(None).unwrap();
    let err = h
        .orch
        .import_artifact(&mut s, &first.compute_spec.id())
        .unwrap_err();
    assert!(matches!(err, Error::BadStage { .. }));
    assert_eq!(err.class(), ErrorClass::BadStage);
    assert_eq!(s.stage(), Stage::ProblemDefinition);
    assert!(s.artifact_ref(ArtifactKind::ComputeSpec).is_none());
}

#[test]
fn importing_problem_definition_skips_stage_one() {
    let h = harness(fixtures::transcript());
    let first = h
        .orch
        .run_headless(
            fixtures::INTENT,
            &fixtures::answers(),
            &HeadlessOptions::default(),
        )
        .unwrap();
    let mut s = h.orch.create_session(None).unwrap();
    h.orch
        .import_artifact(&mut s, &first.problem_definition.id())
        .unwrap();
    assert_eq!(s.stage(), Stage::ComputeSpec);
    h.orch.verify_session(&s).unwrap();
}

#[test]
fn unknown_refs_are_not_found() {
    let h = harness(vec![]);
    let mut s = h.orch.create_session(None).unwrap();
    for id in ["nosuch:a1_problem", "garbage", "x:a4_code_9"] {
        let err = h.orch.import_artifact(&mut s, id).unwrap_err();
        assert_eq!(err.class(), ErrorClass::NotFound, "{id}");
    }
}

#[test]
fn tampered_source_is_not_imported() {
    let h = harness(fixtures::transcript());
    let first = h
        .orch
        .run_headless(
            fixtures::INTENT,
            &fixtures::answers(),
            &HeadlessOptions::default(),
        )
        .unwrap();
    let path = h.orch.store().absolute(&first.problem_definition);
    let text = fs::read_to_string(&path)
        .unwrap()
        .replace("\"novice\"", "\"wizard\"");
    fs::write(&path, text).unwrap();
    let mut s = h.orch.create_session(None).unwrap();
    let err = h
        .orch
        .import_artifact(&mut s, &first.problem_definition.id())
        .unwrap_err();
    assert_eq!(err.class(), ErrorClass::ValidationFailed);
    assert_eq!(s.stage(), Stage::ProblemDefinition);
}

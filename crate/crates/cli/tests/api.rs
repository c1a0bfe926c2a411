mod common;

use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

use common::*;
use ddap_core::agent::{BackendError, ChatRequest};
use ddap_core::{fixtures, ChatBackend};
use serde_json::json;

fn canonical() -> (tempfile::TempDir, ddap_cli::api::ServerHandle, Client) {
    let dir = scratch_dir();
    let server = start_scripted(dir.path(), fixtures::transcript());
    let client = Client::new(&server);
    (dir, server, client)
}

#[test]
fn health_and_creation() {
    let (_d, _s, c) = canonical();
    assert_eq!(c.get("/api/health"), (200, json!({"status": "ok"})));
    let (status, body) = c.post_empty("/api/sessions");
    assert_eq!(status, 201);
    assert_eq!(body["stage"], "problem_definition");
    let id = body["session_id"].as_str().unwrap();
    let (status, view) = c.get(&format!("/api/sessions/{id}"));
    assert_eq!(status, 200);
    assert_eq!(view["session_id"], id);
    assert_eq!(view["artifact_refs"], json!({}));
}

#[test]
fn profile_is_recorded() {
    let (_d, _s, c) = canonical();
    let (status, body) = c.post(
        "/api/sessions",
        json!({"profile": {"domain": "ecology", "expertise": "expert"}}),
    );
    assert_eq!(status, 201);
    let (_, view) = c.get(&format!(
        "/api/sessions/{}",
        body["session_id"].as_str().unwrap()
    ));
    assert_eq!(view["profile"]["domain"], "ecology");
    assert_eq!(
        view["conversations"]["problem_definition"][0]["speaker"],
        "system"
    );
}

#[test]
fn full_session_over_http() {
    let (_d, _s, c) = canonical();
    let id = drive_http(&c, fixtures::INTENT.trim(), &fixtures::answers());
    let (status, view) = c.get(&format!("/api/sessions/{id}"));
    assert_eq!(status, 200);
    assert_eq!(view["stage"], "done");
    assert_eq!(view["selected_candidate"], 1);
    assert_eq!(view["executions"].as_array().unwrap().len(), 1);
    assert_eq!(
        view["conversations"]["problem_definition"]
            .as_array()
            .unwrap()
            .len(),
        8
    );

    let (status, list) = c.get(&format!("/api/sessions/{id}/artifacts"));
    assert_eq!(status, 200);
    let ids: Vec<&str> = list
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["id"].as_str().unwrap())
        .collect();
    for slot in [
        "a1_problem",
        "a2_compute",
        "a3_preprocessing",
        "a3_pipelines",
        "a4_code_1",
    ] {
        assert!(
            ids.contains(&format!("{id}:{slot}").as_str()),
            "{slot} missing from {ids:?}"
        );
    }
    for r in list.as_array().unwrap() {
        let (status, text) = c.get_raw(&format!("/api/artifacts/{}", r["id"].as_str().unwrap()));
        assert_eq!(status, 200);
        let on_disk = std::fs::read_to_string(_d.path().join(r["path"].as_str().unwrap())).unwrap();
        assert_eq!(text, on_disk);
    }
}

#[test]
fn errors_are_api_errors() {
    let (_d, _s, c) = canonical();
    let (status, e) = c.get("/api/sessions/nosuch");
    assert_eq!((status, e["code"].as_str()), (404, Some("not_found")));
    let (status, e) = c.get("/api/sessions/..%2F..%2Fetc");
    assert_eq!((status, e["code"].as_str()), (404, Some("not_found")));
    let (status, e) = c.get("/api/nowhere");
    assert_eq!((status, e["code"].as_str()), (404, Some("not_found")));
    let (status, e) = c.get("/api/artifacts/nosuch:a1_problem");
    assert_eq!((status, e["code"].as_str()), (404, Some("not_found")));

    let (_, created) = c.post_empty("/api/sessions");
    let id = created["session_id"].as_str().unwrap();
    let (status, e) = c.post_raw(&format!("/api/sessions/{id}/messages"), "{not json");
    assert_eq!(status, 422, "{e}");
    let (status, e) = c.post(&format!("/api/sessions/{id}/messages"), json!({}));
    assert_eq!(
        (status, e["code"].as_str()),
        (422, Some("validation_failed"))
    );
    let (status, e) = c.post(
        &format!("/api/sessions/{id}/messages"),
        json!({"text": "x", "extra": 1}),
    );
    assert_eq!(
        (status, e["code"].as_str()),
        (422, Some("validation_failed"))
    );
    let (status, e) = c.post(
        &format!("/api/sessions/{id}/pipelines/select"),
        json!({"index": 2}),
    );
    assert_eq!((status, e["code"].as_str()), (409, Some("bad_stage")));
    let (status, e) = c.post_empty(&format!("/api/sessions/{id}/code"));
    assert_eq!((status, e["code"].as_str()), (409, Some("bad_stage")));
    for (status, body) in [
        c.get_raw("/api/nowhere"),
        c.post_raw(&format!("/api/sessions/{id}/messages"), "["),
    ] {
        let e: serde_json::Value = serde_json::from_str(&body).unwrap();
        assert_eq!(e.as_object().unwrap().len(), 2, "{status}: {body}");
        assert!(!body.contains("panicked") && !body.contains("src/"));
    }
}

#[test]
fn guardrail_exhaustion_is_reported() {
    let dir = scratch_dir();
    let bad =
        ddap_core::agent::TranscriptEntry::new(ddap_core::Stage::ProblemDefinition, "not json");
    let server = start_scripted(dir.path(), vec![bad.clone(), bad.clone(), bad]);
    let c = Client::new(&server);
    let (_, created) = c.post_empty("/api/sessions");
    let id = created["session_id"].as_str().unwrap();
    let (status, e) = c.post(
        &format!("/api/sessions/{id}/messages"),
        json!({"text": "hello"}),
    );
    assert_eq!(
        (status, e["code"].as_str()),
        (502, Some("guardrail_exhausted"))
    );
    let (_, view) = c.get(&format!("/api/sessions/{id}"));
    assert_eq!(view["stage"], "problem_definition");
    assert_eq!(view["reprompt_counts"]["problem_definition"], 2);
}

#[test]
fn repair_over_http() {
    let dir = scratch_dir();
    let server = start_scripted(dir.path(), fixtures::fail_then_fixed_transcript());
    let c = Client::new(&server);
    let (_, created) = c.post_empty("/api/sessions");
    let id = created["session_id"].as_str().unwrap().to_string();
    for text in
        std::iter::once(fixtures::INTENT).chain(fixtures::answers().iter().map(String::as_str))
    {
        assert_eq!(
            c.post(
                &format!("/api/sessions/{id}/messages"),
                json!({"text": text})
            )
            .0,
            200
        );
    }
    assert_eq!(
        c.post_empty(&format!("/api/sessions/{id}/preprocessing")).0,
        200
    );
    assert_eq!(
        c.post_empty(&format!("/api/sessions/{id}/pipelines")).0,
        200
    );
    assert_eq!(
        c.post(
            &format!("/api/sessions/{id}/pipelines/select"),
            json!({"index": 2})
        )
        .0,
        200
    );
    let (_, turn) = c.post(
        &format!("/api/sessions/{id}/code"),
        json!({"candidate_index": 2}),
    );
    let code = turn["artifact_ref"]["id"].as_str().unwrap().to_string();
    assert_eq!(code, format!("{id}:a4_code_2"));

    let (status, e) = c.post_empty(&format!("/api/code/{code}/repair"));
    assert_eq!(
        (status, e["code"].as_str()),
        (409, Some("bad_stage")),
        "nothing to repair yet"
    );

    let (status, run) = c.post_empty(&format!("/api/code/{code}/execute"));
    assert_eq!(status, 200);
    assert_ne!(run["result"]["exit_status"], 0);
    assert_eq!(run["stage"], "code_generation");

    let (status, turn) = c.post_empty(&format!("/api/code/{code}/repair"));
    assert_eq!(status, 200, "{turn}");
    let fixed = turn["artifact_ref"]["id"].as_str().unwrap().to_string();
    assert_eq!(fixed, format!("{id}:a4_code_2_r1"));
    let (_, doc) = c.get(&format!("/api/artifacts/{fixed}"));
    assert_eq!(doc["repair_count"], 1);

    let (_, run) = c.post_empty(&format!("/api/code/{fixed}/execute"));
    assert_eq!(run["result"]["exit_status"], 0);
    assert_eq!(run["stage"], "done");

    let (status, e) = c.post_empty(&format!("/api/code/{id}:a1_problem/execute"));
    assert_eq!(
        (status, e["code"].as_str()),
        (422, Some("validation_failed"))
    );
}

#[test]
fn sessions_survive_a_restart() {
    let dir = scratch_dir();
    let entries = fixtures::transcript();
    let first = start_scripted(dir.path(), entries[..1].to_vec());
    let c = Client::new(&first);
    let (_, created) = c.post_empty("/api/sessions");
    let id = created["session_id"].as_str().unwrap().to_string();
    assert_eq!(
        c.post(
            &format!("/api/sessions/{id}/messages"),
            json!({"text": fixtures::INTENT})
        )
        .0,
        200
    );
    let (_, before) = c.get(&format!("/api/sessions/{id}"));
    first.shutdown().unwrap();

    let second = start_scripted(dir.path(), entries[1..].to_vec());
    let c = Client::new(&second);
    let (status, after) = c.get(&format!("/api/sessions/{id}"));
    assert_eq!(status, 200);
    assert_eq!(after, before);
    let (status, turn) = c.post(
        &format!("/api/sessions/{id}/messages"),
        json!({"text": fixtures::answers()[0]}),
    );
    assert_eq!(status, 200, "{turn}");
    assert_eq!(turn["kind"], "agent_question");
}

/// Answers every request with a question, but only after being released.
#[derive(Default)]
struct Gate {
    state: Mutex<(usize, bool)>,
    changed: Condvar,
}

impl Gate {
    fn wait_entered(&self, n: usize) {
        let mut s = self.state.lock().unwrap();
        while s.0 < n {
            s = self
                .changed
                .wait_timeout(s, Duration::from_secs(10))
                .unwrap()
                .0;
        }
    }

    fn release(&self) {
        self.state.lock().unwrap().1 = true;
        self.changed.notify_all();
    }
}

impl ChatBackend for Gate {
    fn complete(&self, _: &ChatRequest<'_>) -> Result<String, BackendError> {
        let mut s = self.state.lock().unwrap();
        s.0 += 1;
        self.changed.notify_all();
        while !s.1 {
            s = self.changed.wait(s).unwrap();
        }
        Ok(json!({"status": "question", "message": "and then?"}).to_string())
    }
}

#[test]
fn one_request_per_session_at_a_time() {
    let dir = scratch_dir();
    let gate = Arc::new(Gate::default());
    let server = start(dir.path(), gate.clone());
    let c = Arc::new(Client::new(&server));
    let (_, a) = c.post_empty("/api/sessions");
    let (_, b) = c.post_empty("/api/sessions");
    let a = a["session_id"].as_str().unwrap().to_string();
    let b = b["session_id"].as_str().unwrap().to_string();

    let first = {
        let (c, a) = (c.clone(), a.clone());
        thread::spawn(move || {
            c.post(
                &format!("/api/sessions/{a}/messages"),
                json!({"text": "one"}),
            )
        })
    };
    gate.wait_entered(1);
    let (status, e) = c.post(
        &format!("/api/sessions/{a}/messages"),
        json!({"text": "two"}),
    );
    assert_eq!((status, e["code"].as_str()), (409, Some("bad_stage")));
    assert!(e["detail"].as_str().unwrap().contains("busy"));

    // Other sessions are not blocked.
    let other = {
        let (c, b) = (c.clone(), b.clone());
        thread::spawn(move || {
            c.post(
                &format!("/api/sessions/{b}/messages"),
                json!({"text": "three"}),
            )
        })
    };
    gate.wait_entered(2);
    gate.release();
    assert_eq!(first.join().unwrap().0, 200);
    assert_eq!(other.join().unwrap().0, 200);
    let (_, view) = c.get(&format!("/api/sessions/{a}"));
    assert_eq!(
        view["conversations"]["problem_definition"]
            .as_array()
            .unwrap()
            .len(),
        2
    );
}

#[test]
fn shutdown_drains_in_flight_turns() {
    let dir = scratch_dir();
    let gate = Arc::new(Gate::default());
    let server = start(dir.path(), gate.clone());
    let c = Arc::new(Client::new(&server));
    let (_, a) = c.post_empty("/api/sessions");
    let a = a["session_id"].as_str().unwrap().to_string();
    let in_flight = {
        let c = c.clone();
        thread::spawn(move || {
            c.post(
                &format!("/api/sessions/{a}/messages"),
                json!({"text": "one"}),
            )
        })
    };
    gate.wait_entered(1);
    let stopper = thread::spawn(move || server.shutdown());
    thread::sleep(Duration::from_millis(100));
    gate.release();
    let (status, turn) = in_flight.join().unwrap();
    assert_eq!(status, 200);
    assert_eq!(turn["kind"], "agent_question");
    stopper.join().unwrap().unwrap();
}

#[test]
fn bind_failure_is_a_startup_error() {
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let dir = scratch_dir();
    let orch = ddap_core::Orchestrator::new(
        ddap_core::ArtifactStore::new(dir.path()),
        Arc::new(ddap_core::ScriptedBackend::new(vec![])),
    );
    assert!(
        ddap_cli::api::spawn(taken.local_addr().unwrap(), ddap_cli::api::App::new(orch)).is_err()
    );
}

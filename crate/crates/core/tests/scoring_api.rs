//! The A/B scoring HTTP API, exercised in-process without a UI.

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use incident_report::report::{zero_counts, EventType, IncidentReport};
use incident_report::scoring::{router, ScoringService};
use serde_json::{json, Value};
use tower::ServiceExt;

const ADMIN: &str = "admin-secret-token";
const EVALUATORS: [&str; 3] = ["eval-ann", "eval-ben", "eval-cat"];

fn report(video: &str, caption: &str, provenance: &str) -> IncidentReport {
    IncidentReport {
        video_id: video.into(),
        event_type: EventType::Accident,
        crash_severity: 3,
        ego_involved: true,
        entity_counts: zero_counts(),
        time_to_incident_frames: Some(30),
        caption_before: caption.into(),
        caption_after: "The ego car stops on the shoulder.".into(),
        provenance: provenance.into(),
    }
}

/// Marker words that identify each run's text to the test, not to evaluators.
const MARK: [&str; 2] = ["northbound", "southbound"];
const RUN_IDS: [&str; 2] = ["run-7f3a", "run-c21d"];
const LABELS: [&str; 2] = ["GridPointBaseline", "EnsembleFinal"];
const PROVENANCE: [&str; 2] = ["(GLM-4.5V,k=2,t=6)", "ensemble(24 candidates)"];

fn runs_body(videos_a: &[&str], videos_b: &[&str]) -> Value {
    let make = |i: usize, videos: &[&str]| {
        json!({
            "run_id": RUN_IDS[i],
            "label": LABELS[i],
            "reports": videos.iter()
                .map(|v| report(v, &format!("A {} truck brakes.", MARK[i]), PROVENANCE[i]))
                .collect::<Vec<_>>(),
        })
    };
    json!([make(0, videos_a), make(1, videos_b)])
}

struct Api {
    app: Router,
    /// Every body an evaluator-facing route returned.
    evaluator_payloads: Vec<String>,
}

impl Api {
    fn open(store: &Path) -> Self {
        let service = Arc::new(ScoringService::open(store, ADMIN).unwrap());
        Self {
            app: router(service, None),
            evaluator_payloads: Vec::new(),
        }
    }

    async fn send(&self, req: Request<Body>) -> (StatusCode, String) {
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
        (status, String::from_utf8(bytes.to_vec()).unwrap())
    }

    async fn create(&self, runs: Value, seed: u64) -> (StatusCode, Value) {
        let body = json!({"runs": runs, "roster": EVALUATORS, "seed": seed});
        let req = Request::post("/sessions")
            .header(header::CONTENT_TYPE, "application/json")
            .header(header::AUTHORIZATION, format!("Bearer {ADMIN}"))
            .body(Body::from(body.to_string()))
            .unwrap();
        let (status, text) = self.send(req).await;
        (status, serde_json::from_str(&text).unwrap_or(Value::Null))
    }

    async fn next(&mut self, sid: &str, evaluator: &str) -> (StatusCode, Value) {
        let req = Request::get(format!("/sessions/{sid}/next?evaluator={evaluator}"))
            .body(Body::empty())
            .unwrap();
        let (status, text) = self.send(req).await;
        self.evaluator_payloads.push(text.clone());
        (status, serde_json::from_str(&text).unwrap())
    }

    async fn vote(&mut self, sid: &str, evaluator: &str, pair: &str, choice: &str) -> (StatusCode, Value) {
        let body = json!({"evaluator": evaluator, "pair_id": pair, "choice": choice});
        let req = Request::post(format!("/sessions/{sid}/votes"))
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(body.to_string()))
            .unwrap();
        let (status, text) = self.send(req).await;
        self.evaluator_payloads.push(text.clone());
        (status, serde_json::from_str(&text).unwrap_or(Value::Null))
    }

    async fn results(&self, sid: &str, token: Option<&str>) -> (StatusCode, Value) {
        let mut b = Request::get(format!("/sessions/{sid}/results"));
        if let Some(t) = token {
            b = b.header(header::AUTHORIZATION, format!("Bearer {t}"));
        }
        let (status, text) = self.send(b.body(Body::empty()).unwrap()).await;
        (status, serde_json::from_str(&text).unwrap_or(Value::Null))
    }

    fn assert_blind(&self) {
        for payload in &self.evaluator_payloads {
            for secret in RUN_IDS.iter().chain(&LABELS).chain(&PROVENANCE) {
                assert!(!payload.contains(secret), "{secret:?} leaked in {payload}");
            }
        }
    }
}

/// Which run the test can see behind a blinded panel text.
fn run_of(text: &str) -> usize {
    match (text.contains(MARK[0]), text.contains(MARK[1])) {
        (true, false) => 0,
        (false, true) => 1,
        _ => panic!("panel text identifies no single run: {text}"),
    }
}

#[tokio::test]
async fn all_27_vote_combinations_match_brute_force_majority() {
    let choices = ["A", "B", "Tie"];
    for combo in 0..27usize {
        let picks = [combo % 3, (combo / 3) % 3, combo / 9].map(|c| choices[c]);
        let store = tempfile::tempdir().unwrap();
        let mut api = Api::open(store.path());
        let (status, created) = api.create(runs_body(&["v1"], &["v1"]), combo as u64).await;
        assert_eq!(status, StatusCode::CREATED);
        let sid = created["session_id"].as_str().unwrap().to_string();

        // Brute-force tally in run space, from what each evaluator saw.
        let mut tally = [0u32; 2];
        for (ev, pick) in EVALUATORS.iter().zip(picks) {
            let (_, next) = api.next(&sid, ev).await;
            assert_eq!(next["status"], "pair");
            let left = run_of(next["left_text"].as_str().unwrap());
            assert_eq!(run_of(next["right_text"].as_str().unwrap()), 1 - left);
            match pick {
                "A" => tally[left] += 1,
                "B" => tally[1 - left] += 1,
                _ => {}
            }
            let (status, _) = api.vote(&sid, ev, "p1", pick).await;
            assert_eq!(status, StatusCode::OK);
        }
        let expected = (0..2).find(|&r| 2 * tally[r] > 3).map(|r| RUN_IDS[r]);

        let (status, results) = api.results(&sid, Some(ADMIN)).await;
        assert_eq!(status, StatusCode::OK);
        let pair = &results["pairs"][0];
        assert_eq!(pair["votes"], json!(tally), "combo {picks:?}");
        assert_eq!(pair["winner"].as_str(), expected, "combo {picks:?}");
        api.assert_blind();
    }
}

#[tokio::test]
async fn session_flow_status_codes_and_blinding() {
    let store = tempfile::tempdir().unwrap();
    let mut api = Api::open(store.path());

    let (status, _) = {
        let req = Request::post("/sessions")
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(json!({"runs": runs_body(&["v1"], &["v1"]), "roster": EVALUATORS, "seed": 1}).to_string()))
            .unwrap();
        api.send(req).await
    };
    assert_eq!(status, StatusCode::UNAUTHORIZED);

    let (status, created) = api.create(runs_body(&["v1", "v2", "v3"], &["v1", "v2"]), 5).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(created["pairs"], 2);
    assert_eq!(created["excluded"][0]["video_id"], "v3");
    let sid = created["session_id"].as_str().unwrap().to_string();

    // Idempotent re-creation.
    let (_, again) = api.create(runs_body(&["v1", "v2", "v3"], &["v1", "v2"]), 5).await;
    assert_eq!(again["session_id"], created["session_id"]);

    let (status, _) = api.create(runs_body(&["v1"], &["v2"]), 5).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, _) = api.next(&sid, "intruder").await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let (status, _) = api.next("no-such-session", EVALUATORS[0]).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (_, first) = api.next(&sid, EVALUATORS[0]).await;
    assert_eq!(first["pair_id"], "p1");
    assert_eq!(first["progress"], json!({"done": 0, "total": 2}));
    let (status, _) = api.vote(&sid, EVALUATORS[0], "p1", "A").await;
    assert_eq!(status, StatusCode::OK);
    let (status, _) = api.vote(&sid, EVALUATORS[0], "p1", "B").await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) = api.vote(&sid, EVALUATORS[0], "p9", "B").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (_, second) = api.next(&sid, EVALUATORS[0]).await;
    assert_eq!(second["pair_id"], "p2");
    let (status, ack) = api.vote(&sid, EVALUATORS[0], "p2", "Tie").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ack["progress"], json!({"done": 2, "total": 2}));
    let (_, done) = api.next(&sid, EVALUATORS[0]).await;
    assert_eq!(done["status"], "done");

    let (status, _) = api.results(&sid, None).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let (status, _) = api.results(&sid, Some("wrong")).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let (status, results) = api.results(&sid, Some(ADMIN)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(results["total_votes"], 2);

    api.assert_blind();
}

#[tokio::test]
async fn votes_survive_kill_and_restart() {
    let store = tempfile::tempdir().unwrap();
    let videos = ["v1", "v2", "v3", "v4"];
    let sid;
    let before;
    {
        let mut api = Api::open(store.path());
        let (_, created) = api.create(runs_body(&videos, &videos), 9).await;
        sid = created["session_id"].as_str().unwrap().to_string();
        for (n, ev) in EVALUATORS.iter().enumerate() {
            for (p, choice) in ["A", "B", "Tie", "A"].iter().enumerate().take(n + 2) {
                let pair = format!("p{}", p + 1);
                let (status, _) = api.vote(&sid, ev, &pair, choice).await;
                assert_eq!(status, StatusCode::OK);
            }
        }
        before = api.results(&sid, Some(ADMIN)).await.1;
        // Dropped without any shutdown: the log is the only state.
    }

    // A crash mid-append leaves an unterminated line behind.
    let log = store.path().join("sessions").join(format!("{sid}.votes.jsonl"));
    let mut bytes = std::fs::read(&log).unwrap();
    bytes.extend_from_slice(br#"{"pair_id":"p4","evaluator_id":"eval-a"#);
    std::fs::write(&log, bytes).unwrap();

    let mut api = Api::open(store.path());
    let after = api.results(&sid, Some(ADMIN)).await.1;
    assert_eq!(before, after);
    assert_eq!(after["total_votes"], 2 + 3 + 4);

    // Already-cast votes stay rejected; new ones still append.
    let (status, _) = api.vote(&sid, EVALUATORS[0], "p1", "B").await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) = api.vote(&sid, EVALUATORS[0], "p3", "B").await;
    assert_eq!(status, StatusCode::OK);
    drop(api);
    let api = Api::open(store.path());
    assert_eq!(api.results(&sid, Some(ADMIN)).await.1["total_votes"], 10);
}

#[tokio::test]
async fn ui_bundle_is_served_beside_the_api() {
    let store = tempfile::tempdir().unwrap();
    let ui = tempfile::tempdir().unwrap();
    std::fs::write(ui.path().join("index.html"), "<html>ab</html>").unwrap();
    let service = Arc::new(ScoringService::open(store.path(), ADMIN).unwrap());
    let app = router(service, Some(ui.path()));
    let resp = app
        .oneshot(Request::get("/index.html").body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
}

//! A blind A/B session driven through the HTTP API: create, fetch blinded
//! pairs, vote as three evaluators, read the aggregate.
//!
//! ```bash
//! cargo run --example ab_session
//! ```

use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use incident_report::report::{zero_counts, EventType, IncidentReport};
use incident_report::scoring::{router, ScoringService};
use serde_json::{json, Value};
use tower::ServiceExt;

const ADMIN: &str = "example-admin-token";

fn report(video: &str, caption: &str, provenance: &str) -> IncidentReport {
    IncidentReport {
        video_id: video.into(),
        event_type: EventType::Hazard,
        crash_severity: 2,
        ego_involved: false,
        entity_counts: zero_counts(),
        time_to_incident_frames: Some(45),
        caption_before: caption.into(),
        caption_after: "The ego car slows down.".into(),
        provenance: provenance.into(),
    }
}

async fn call(app: &axum::Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.clone().oneshot(req).await.expect("infallible");
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn post(uri: &str, body: Value, admin: bool) -> Request<Body> {
    let mut b = Request::post(uri).header(header::CONTENT_TYPE, "application/json");
    if admin {
        b = b.header(header::AUTHORIZATION, format!("Bearer {ADMIN}"));
    }
    b.body(Body::from(body.to_string())).unwrap()
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let store = tempfile::tempdir()?;
    let service = Arc::new(ScoringService::open(store.path(), ADMIN)?);
    let app = router(service, None);

    let videos = ["v1", "v2", "v3"];
    let runs = json!([
        {"run_id": "run-grid", "label": "single grid point",
         "reports": videos.iter().map(|v| report(v, "A bus pulls out.", "(vlm,k=2,t=6)")).collect::<Vec<_>>()},
        {"run_id": "run-ens", "label": "ensembled",
         "reports": videos.iter().map(|v| report(v, "A bus pulls out from the stop.", "ensemble(24 candidates)")).collect::<Vec<_>>()},
    ]);
    let (status, created) = call(
        &app,
        post("/sessions", json!({"runs": runs, "roster": ["ann", "ben", "cat"], "seed": 11}), true),
    )
    .await;
    println!("create: {status} {created}");
    let sid = created["session_id"].as_str().unwrap().to_string();

    // Each evaluator prefers whichever panel mentions "the stop".
    for evaluator in ["ann", "ben", "cat"] {
        loop {
            let (_, next) = call(
                &app,
                Request::get(format!("/sessions/{sid}/next?evaluator={evaluator}"))
                    .body(Body::empty())
                    .unwrap(),
            )
            .await;
            if next["status"] == "done" {
                break;
            }
            let left = next["left_text"].as_str().unwrap();
            let choice = if left.contains("the stop") { "A" } else { "B" };
            let vote = json!({"evaluator": evaluator, "pair_id": next["pair_id"], "choice": choice});
            let (status, _) = call(&app, post(&format!("/sessions/{sid}/votes"), vote, false)).await;
            println!("{evaluator} votes {choice} on {} ({status})", next["pair_id"]);
        }
    }

    let (_, results) = call(
        &app,
        Request::get(format!("/sessions/{sid}/results"))
            .header(header::AUTHORIZATION, format!("Bearer {ADMIN}"))
            .body(Body::empty())
            .unwrap(),
    )
    .await;
    println!("{}", serde_json::to_string_pretty(&results)?);
    Ok(())
}

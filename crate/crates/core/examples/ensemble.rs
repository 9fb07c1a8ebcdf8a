//! Merges candidate reports: single-candidate passthrough, majority
//! override of the model's classification, and fallback on unusable output.
//!
//! ```bash
//! cargo run --example ensemble
//! ```

use std::sync::Arc;

use incident_report::config::EnsembleConfig;
use incident_report::ensemble::Ensembler;
use incident_report::gateway::{Gateway, ScriptedBackend};
use incident_report::pipeline::StagePrompts;
use incident_report::report::{zero_counts, EventType, IncidentReport};

fn candidate(video: &str, event: EventType, severity: u8, k: u64) -> IncidentReport {
    IncidentReport {
        video_id: video.into(),
        event_type: event,
        crash_severity: severity,
        ego_involved: false,
        entity_counts: zero_counts(),
        time_to_incident_frames: Some(90),
        caption_before: "A van waits at the light.".into(),
        caption_after: "A scooter cuts in front of the van.".into(),
        provenance: format!("(vlm,k={k},t=6)"),
    }
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let backend = ScriptedBackend::new();
    backend.insert_text(
        "ensemble",
        "v-majority",
        None,
        0,
        r#"{"event_type": "hazard", "crash_severity": 3, "ego_involved": false,
            "entity_counts": {"vehicles": 1, "pedestrians": 0, "cyclists_or_scooters": 1, "animals": 0},
            "time_to_incident_frames": 90,
            "caption_before": "A van idles at a red light.",
            "caption_after": "A scooter swerves across and strikes the van's bumper."}"#,
    );
    backend.insert_text("ensemble", "v-fallback", None, 0, "no idea");
    backend.insert_text("ensemble", "v-fallback", None, 1, "still no idea");

    let gateway = Gateway::new(Arc::new(backend));
    let config = EnsembleConfig::default();
    let prompts = StagePrompts::default();
    let ensembler = Ensembler {
        gateway: &gateway,
        config: &config,
        prompts: &prompts,
    };

    let cases = [
        vec![candidate("v-single", EventType::Hazard, 1, 2)],
        vec![
            candidate("v-majority", EventType::Accident, 3, 2),
            candidate("v-majority", EventType::Accident, 3, 6),
            candidate("v-majority", EventType::Hazard, 3, 11),
        ],
        vec![
            candidate("v-fallback", EventType::Accident, 2, 2),
            candidate("v-fallback", EventType::Accident, 3, 6),
            candidate("v-fallback", EventType::Accident, 3, 11),
        ],
    ];
    for candidates in &cases {
        let out = ensembler.ensemble(candidates).await?;
        println!(
            "{}: {:?} -> {} severity {} [{}]",
            out.report.video_id, out.source, out.report.event_type, out.report.crash_severity, out.report.provenance
        );
        for o in &out.overrides {
            println!("  override: {o}");
        }
    }
    println!("model calls: {}", gateway.call_log().len());
    Ok(())
}

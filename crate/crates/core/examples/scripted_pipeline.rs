//! Runs the three stages over the fixture videos against scripted model
//! responses, then prints each video's detection, candidates and call count.
//!
//! ```bash
//! cargo run --example scripted_pipeline
//! ```

use std::path::Path;
use std::sync::Arc;

use incident_report::config::ExperimentConfig;
use incident_report::gateway::{Gateway, ScriptedBackend};
use incident_report::pipeline::Pipeline;
use incident_report::video::open_video;

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/e2e");
    let config = ExperimentConfig::load(&fixtures.join("config.toml"))?;
    let prompts = config.load_prompts()?;
    let backend = ScriptedBackend::load_dir(&fixtures.join("scripted"))?;
    let gateway = Arc::new(Gateway::new(Arc::new(backend)));
    let pipeline = Pipeline::new(gateway.clone(), config.clone(), prompts);

    println!("grid: {} configuration(s)", config.stage3.grid().len());
    for name in ["alpha", "bravo", "charlie"] {
        let video = open_video(&fixtures.join(format!("videos/{name}.y4m")), &config.decoder)?;
        let out = pipeline.run(&video).await?;
        println!(
            "\n{name}: {} frames, incident frame {} ({:?})",
            out.frame_count, out.detection.incident_frame, out.detection.source
        );
        for obs in &out.observations {
            println!("  frame {:>3}: {} [{} hazard(s)]", obs.frame_index, obs.caption, obs.hazards.len());
        }
        for c in &out.candidates {
            println!("  {} -> {} severity {}", c.provenance, c.event_type, c.crash_severity);
        }
        for f in &out.failures {
            println!("  {} failed: {}", f.provenance, f.message);
        }
        println!("  model calls: {}", gateway.calls_for_video(name));
    }
    Ok(())
}

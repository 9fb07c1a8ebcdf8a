//! Pulls schema-checked JSON out of chatty model replies.
//!
//! ```bash
//! cargo run --example structured_extraction
//! ```

use incident_report::gateway::{extract_structured, SchemaId};
use incident_report::pipeline::detection::parse_incident_frame;

fn main() {
    let replies = [
        (SchemaId::IncidentFrame, "Sure! ```json {\"incident_frame\": 120} ```"),
        (SchemaId::IncidentFrame, "{\"incident_frame\": 120}"),
        (SchemaId::IncidentFrame, "I cannot determine this."),
        (
            SchemaId::FrameCaption,
            "Caption follows: {\"caption\": \"A truck merges.\", \"hazards\": [{\"category\": \"vehicle\", \"description\": \"truck\"}]} hope that helps",
        ),
        (SchemaId::Report, "{\"event_type\": \"crash\"}"),
    ];
    for (schema, text) in replies {
        match extract_structured(text, schema) {
            Ok(doc) => println!("{schema:?}: {doc}"),
            Err(e) => println!("{schema:?}: error: {e}"),
        }
    }

    println!();
    for text in ["{\"incident_frame\": 9999}", "{\"incident_frame\": -4}", "frame 12 maybe"] {
        println!("{text:<28} -> {:?}", parse_incident_frame(text, 300));
    }
}

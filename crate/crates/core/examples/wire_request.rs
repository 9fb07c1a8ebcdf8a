//! The chat-completions body sent for a multimodal request. Nothing is sent.
//!
//! ```bash
//! cargo run --example wire_request
//! ```

use std::time::Duration;

use image::RgbImage;
use incident_report::gateway::{ChatRequest, Decoding, HttpBackend, RequestTag, UserPart};
use incident_report::pipeline::encode_png;

fn main() -> anyhow::Result<()> {
    let frame = RgbImage::from_pixel(4, 2, image::Rgb([200, 40, 40]));
    let request = ChatRequest {
        model_name: "GLM-4.5V".into(),
        system_prompt: "You describe dashcam frames.".into(),
        user_parts: vec![
            UserPart::text("Frame 9 of 30. Describe it."),
            UserPart::png(encode_png(&frame)?),
        ],
        decoding: Decoding::default(),
        timeout: Duration::from_secs(120),
        tag: RequestTag {
            stage: "stage1".into(),
            video_id: "v1".into(),
            frame: Some(9),
            ordinal: 0,
        },
    };
    println!("{}", serde_json::to_string_pretty(&HttpBackend::request_body(&request))?);
    Ok(())
}

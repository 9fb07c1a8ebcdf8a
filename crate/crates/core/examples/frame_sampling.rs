//! Reference-frame sampling, incident frame sets and gaze stacking on the
//! golden fixture clip.
//!
//! ```bash
//! cargo run --example frame_sampling
//! ```

use std::path::Path;

use image::{DynamicImage, GrayImage, Luma};
use incident_report::video::{
    compose_gaze_frame, extract_frames, frame_set, open_video, sample_reference_frames,
    DecoderConfig,
};

fn main() -> anyhow::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/video/golden.y4m");
    let video = open_video(&path, &DecoderConfig::default())?;
    println!(
        "{}: {} frames, {}x{} @ {:.2} fps",
        video.id(),
        video.frame_count(),
        video.meta.width,
        video.meta.height,
        video.meta.fps.as_f64()
    );

    for (n, k) in [(30, 10), (25, 10), (5, 10)] {
        println!("reference frames, {n} frames, k={k}: {:?}", sample_reference_frames(n, k)?);
    }
    for (i, k, t, n) in [(100, 10, 2, 200), (5, 2, 6, 1000), (42, 11, 0, 100)] {
        println!("F(i={i}, k={k}, t={t}) over {n} frames: {:?}", frame_set(i, k, t, n)?);
    }

    let refs = sample_reference_frames(video.frame_count(), 4)?;
    let frames = extract_frames(&video, &refs)?;
    let heat = GrayImage::from_fn(8, 6, |x, y| Luma([((x + y) * 20) as u8]));
    let heat = DynamicImage::ImageLuma8(heat);
    for (&index, frame) in refs.iter().zip(&frames) {
        let composed = compose_gaze_frame(index, frame, Some(&heat))?;
        println!(
            "frame {index}: {:?} -> composed {:?} (gaze: {})",
            frame.dimensions(),
            composed.image.dimensions(),
            composed.has_gaze
        );
    }
    Ok(())
}

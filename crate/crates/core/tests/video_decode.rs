use std::path::{Path, PathBuf};

use incident_report::video::{extract_frames, open_video, DecoderConfig, VideoError};
use serde::Deserialize;
use sha2::{Digest, Sha256};

#[derive(Deserialize)]
struct Golden {
    width: u32,
    height: u32,
    frame_count: u64,
    rgb24_sha256: Vec<String>,
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/video").join(name)
}

fn golden() -> Golden {
    serde_json::from_str(&std::fs::read_to_string(fixture("golden_checksums.json")).unwrap()).unwrap()
}

fn ffmpeg_available() -> bool {
    std::process::Command::new("ffmpeg")
        .arg("-version")
        .output()
        .is_ok_and(|o| o.status.success())
}

fn check_all_frames(file: &str) {
    let g = golden();
    let video = open_video(&fixture(file), &DecoderConfig::default()).unwrap();
    assert_eq!(video.frame_count(), g.frame_count);
    assert_eq!((video.meta.width, video.meta.height), (g.width, g.height));
    let all: Vec<u64> = (0..g.frame_count).collect();
    let frames = extract_frames(&video, &all).unwrap();
    for (i, f) in frames.iter().enumerate() {
        assert_eq!(hex::encode(Sha256::digest(f.as_raw())), g.rgb24_sha256[i], "{file} frame {i}");
    }
}

#[test]
fn y4m_first_and_last_frames_match_golden_checksums() {
    let g = golden();
    let video = open_video(&fixture("golden.y4m"), &DecoderConfig::default()).unwrap();
    let frames = extract_frames(&video, &[0, 9]).unwrap();
    assert_eq!(frames.len(), 2);
    assert_eq!(hex::encode(Sha256::digest(frames[0].as_raw())), g.rgb24_sha256[0]);
    assert_eq!(hex::encode(Sha256::digest(frames[1].as_raw())), g.rgb24_sha256[9]);
}

#[test]
fn y4m_every_frame_matches() {
    check_all_frames("golden.y4m");
}

#[test]
fn ffv1_through_external_decoder_matches() {
    if !ffmpeg_available() {
        eprintln!("ffmpeg not found; skipping");
        return;
    }
    check_all_frames("golden.mkv");
}

#[test]
fn request_order_is_preserved() {
    let g = golden();
    let video = open_video(&fixture("golden.y4m"), &DecoderConfig::default()).unwrap();
    let frames = extract_frames(&video, &[7, 2, 7]).unwrap();
    let sums: Vec<String> = frames.iter().map(|f| hex::encode(Sha256::digest(f.as_raw()))).collect();
    assert_eq!(sums, vec![g.rgb24_sha256[7].clone(), g.rgb24_sha256[2].clone(), g.rgb24_sha256[7].clone()]);
}

#[test]
fn empty_request_and_out_of_range_index() {
    let video = open_video(&fixture("golden.y4m"), &DecoderConfig::default()).unwrap();
    assert!(extract_frames(&video, &[]).unwrap().is_empty());
    assert!(matches!(extract_frames(&video, &[10]), Err(VideoError::InvalidInput(_))));
}

#[test]
fn undecodable_file_reports_decoder_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.mp4");
    std::fs::write(&path, b"not a video at all").unwrap();
    let err = open_video(&path, &DecoderConfig::default()).unwrap_err();
    assert!(matches!(err, VideoError::Decode { .. }), "{err}");

    let y4m = dir.path().join("truncated.y4m");
    let mut bytes = std::fs::read(fixture("golden.y4m")).unwrap();
    bytes.truncate(bytes.len() - 10);
    std::fs::write(&y4m, bytes).unwrap();
    assert!(open_video(&y4m, &DecoderConfig::default()).is_err());
}

//! Reference-frame sampling, incident frame sets, gaze composition and frame decoding.
//!
//! All frame indices are 0-based.

mod compose;
mod decode;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use compose::{compose_gaze_frame, load_gaze_heatmap, ComposedFrame};
pub use decode::{FfmpegSource, FrameSource, Y4mSource};

#[derive(Debug, Error)]
pub enum VideoError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("decoding {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

/// Frame rate as a rational number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fps {
    pub num: u32,
    pub den: u32,
}

impl Fps {
    pub const NOMINAL: Fps = Fps { num: 30, den: 1 };

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den.max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub video_id: String,
    pub frame_count: u64,
    pub fps: Fps,
    pub width: u32,
    pub height: u32,
}

/// An opened video: its metadata plus the provider that decodes its frames.
#[derive(Clone)]
pub struct Video {
    pub meta: VideoMeta,
    pub path: PathBuf,
    source: Arc<dyn FrameSource>,
}

impl std::fmt::Debug for Video {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Video")
            .field("meta", &self.meta)
            .field("path", &self.path)
            .finish()
    }
}

impl Video {
    pub fn from_source(
        video_id: impl Into<String>,
        path: impl Into<PathBuf>,
        source: Arc<dyn FrameSource>,
    ) -> Result<Self, VideoError> {
        let path = path.into();
        let probe = source.probe()?;
        if probe.frame_count == 0 {
            return Err(VideoError::InvalidInput(format!(
                "{} has no frames",
                path.display()
            )));
        }
        Ok(Self {
            meta: VideoMeta {
                video_id: video_id.into(),
                frame_count: probe.frame_count,
                fps: probe.fps,
                width: probe.width,
                height: probe.height,
            },
            path,
            source,
        })
    }

    pub fn id(&self) -> &str {
        &self.meta.video_id
    }

    pub fn frame_count(&self) -> u64 {
        self.meta.frame_count
    }
}

/// What a [`FrameSource`] reports about its stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamProbe {
    pub frame_count: u64,
    pub fps: Fps,
    pub width: u32,
    pub height: u32,
}

/// Decoder settings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderConfig {
    /// External decoder binary used for everything except `.y4m` files.
    pub ffmpeg: PathBuf,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            ffmpeg: PathBuf::from("ffmpeg"),
        }
    }
}

pub const VIDEO_EXTENSIONS: [&str; 7] = ["y4m", "mp4", "avi", "mov", "mkv", "webm", "m4v"];

/// Opens a video file. Uncompressed `.y4m` is read in-process; other
/// containers go through the external decoder.
pub fn open_video(path: &Path, decoder: &DecoderConfig) -> Result<Video, VideoError> {
    let video_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let is_y4m = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("y4m"));
    let source: Arc<dyn FrameSource> = if is_y4m {
        Arc::new(Y4mSource::open(path)?)
    } else {
        Arc::new(FfmpegSource::new(path, &decoder.ffmpeg))
    };
    Video::from_source(video_id, path, source)
}

/// Last frame index of every consecutive `k`-frame segment. A trailing
/// partial segment contributes the final frame.
pub fn sample_reference_frames(frame_count: u64, k: u64) -> Result<Vec<u64>, VideoError> {
    if frame_count == 0 {
        return Err(VideoError::InvalidInput("frame_count must be positive".into()));
    }
    if k == 0 {
        return Err(VideoError::InvalidInput("k must be at least 1".into()));
    }
    let mut out: Vec<u64> = (1..=frame_count / k).map(|s| s * k - 1).collect();
    if frame_count % k != 0 {
        out.push(frame_count - 1);
    }
    Ok(out)
}

/// `{i + m*k : -t <= m <= t}` restricted to `[0, frame_count)`, ascending.
/// Out-of-range members are dropped, never clamped.
pub fn frame_set(i: u64, k: u64, t: u64, frame_count: u64) -> Result<Vec<u64>, VideoError> {
    if i >= frame_count {
        return Err(VideoError::InvalidInput(format!(
            "anchor frame {i} outside video of {frame_count} frames"
        )));
    }
    if k == 0 {
        return Err(VideoError::InvalidInput("k must be at least 1".into()));
    }
    let before = (i / k).min(t);
    let after = ((frame_count - 1 - i) / k).min(t);
    let mut out = Vec::with_capacity((before + after + 1) as usize);
    out.extend((1..=before).rev().map(|m| i - m * k));
    out.push(i);
    out.extend((1..=after).map(|m| i + m * k));
    Ok(out)
}

/// Decodes the frames at `indices`, returned in request order.
pub fn extract_frames(video: &Video, indices: &[u64]) -> Result<Vec<RgbImage>, VideoError> {
    if indices.is_empty() {
        return Ok(Vec::new());
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= video.meta.frame_count) {
        return Err(VideoError::InvalidInput(format!(
            "frame {bad} requested from {} which has {} frames",
            video.id(),
            video.meta.frame_count
        )));
    }
    let mut unique = indices.to_vec();
    unique.sort_unstable();
    unique.dedup();
    let decoded = video.source.read_frames(&unique)?;
    if decoded.len() != unique.len() {
        return Err(VideoError::Decode {
            path: video.path.clone(),
            message: format!(
                "decoder returned {} frames for {} requested",
                decoded.len(),
                unique.len()
            ),
        });
    }
    Ok(indices
        .iter()
        .map(|i| {
            let pos = unique.binary_search(i).expect("index was requested");
            decoded[pos].clone()
        })
        .collect())
}

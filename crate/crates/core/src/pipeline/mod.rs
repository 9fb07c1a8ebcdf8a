//! The three-stage hierarchy: per-frame captioning, incident-frame
//! detection, and incident captioning over a grid of frame-set samplings.

pub mod detection;
pub mod prompts;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Cursor;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use futures::future::join_all;
use image::{ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::config::{ExperimentConfig, GridPoint};
use crate::gateway::{
    extract_structured, ChatRequest, Decoding, EndpointConfig, Gateway, GatewayError, RequestTag,
    SchemaId, UserPart,
};
use crate::report::{
    validate_report, zero_counts, DetectionResult, DetectionSource, EntityKind, EventType,
    FrameObservation, HazardCategory, HazardNote, IncidentReport,
};
use crate::video::{
    compose_gaze_frame, extract_frames, frame_set, load_gaze_heatmap, sample_reference_frames,
    Video, VideoError,
};

pub use detection::{fallback_incident_frame, parse_incident_frame, render_observations};
pub use prompts::{render, PromptError, StagePrompts};

/// Caption recorded for a reference frame whose model call or reply failed.
pub const CAPTION_UNAVAILABLE: &str = "[caption unavailable]";

#[derive(Debug, Error)]
pub enum StageError {
    #[error("every reference frame failed ({frames} frames)")]
    AllFramesFailed { frames: usize },
    #[error(transparent)]
    Video(#[from] VideoError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("no observations to detect from")]
    NoObservations,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("stage 1 failed for {video_id}: {source}")]
    Stage1 {
        video_id: String,
        #[source]
        source: StageError,
    },
    #[error("stage 2 failed for {video_id}: {source}")]
    Stage2 {
        video_id: String,
        #[source]
        source: StageError,
    },
    /// A request the gateway could not even attempt: no scripted response,
    /// no API key. Never degraded into a per-frame or per-grid failure.
    #[error("request {tag} could not be made: {source}")]
    Request {
        tag: RequestTag,
        #[source]
        source: GatewayError,
    },
}

/// Stage 3 outcome for one grid point that produced no report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridFailure {
    pub provenance: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTimings {
    pub stage1_ms: u64,
    pub stage2_ms: u64,
    pub stage3_ms: u64,
}

/// Everything `run_pipeline` learns about one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub video_id: String,
    pub frame_count: u64,
    pub observations: Vec<FrameObservation>,
    pub detection: DetectionResult,
    /// One report per successful grid point, in grid order.
    pub candidates: Vec<IncidentReport>,
    pub failures: Vec<GridFailure>,
    pub timings: StageTimings,
}

fn hard_error(e: &GatewayError) -> bool {
    matches!(
        e,
        GatewayError::MissingScript(_) | GatewayError::MissingApiKey(_) | GatewayError::InvalidRequest(_)
    )
}

pub fn encode_png(image: &RgbImage) -> Result<Vec<u8>, VideoError> {
    let mut out = Cursor::new(Vec::new());
    image.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

/// A report built from a model reply, plus the corrections applied to it.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedReport {
    pub report: IncidentReport,
    pub corrections: Vec<String>,
}

/// Builds a report from a schema-valid JSON object. Missing entity kinds
/// count 0; a missing time-to-incident takes `default_ttf` unless the event
/// is `no_incident`. A `no_incident` report is forced to severity 0 with no
/// time-to-incident. Other invariant violations are errors.
pub fn report_from_value(
    doc: &Value,
    video_id: &str,
    provenance: &str,
    default_ttf: Option<u64>,
) -> Result<ParsedReport, String> {
    let event_type: EventType =
        serde_json::from_value(doc["event_type"].clone()).map_err(|e| e.to_string())?;
    let mut entity_counts = zero_counts();
    if let Some(obj) = doc["entity_counts"].as_object() {
        for kind in EntityKind::ALL {
            if let Some(n) = obj.get(kind.key()).and_then(Value::as_u64) {
                entity_counts.insert(kind, n as u32);
            }
        }
    }
    let text = |k: &str| doc[k].as_str().unwrap_or_default().to_string();
    let mut report = IncidentReport {
        video_id: video_id.to_string(),
        event_type,
        crash_severity: doc["crash_severity"].as_u64().unwrap_or(0) as u8,
        ego_involved: doc["ego_involved"].as_bool().unwrap_or(false),
        entity_counts,
        time_to_incident_frames: doc["time_to_incident_frames"].as_u64(),
        caption_before: text("caption_before"),
        caption_after: text("caption_after"),
        provenance: provenance.to_string(),
    };
    let mut corrections = Vec::new();
    if report.event_type == EventType::NoIncident {
        for v in validate_report(&report) {
            if v.field == "crash_severity" || v.field == "time_to_incident_frames" {
                corrections.push(v.to_string());
            }
        }
        report.crash_severity = 0;
        report.time_to_incident_frames = None;
    } else if report.time_to_incident_frames.is_none() {
        report.time_to_incident_frames = default_ttf;
    }
    let remaining = validate_report(&report);
    if !remaining.is_empty() {
        let msgs: Vec<String> = remaining.iter().map(ToString::to_string).collect();
        return Err(msgs.join("; "));
    }
    Ok(ParsedReport {
        report,
        corrections,
    })
}

/// Runs the stages for one video against a shared gateway.
pub struct Pipeline {
    pub gateway: Arc<Gateway>,
    pub config: ExperimentConfig,
    pub prompts: StagePrompts,
    pub gaze_dir: Option<PathBuf>,
}

enum Stage3Error {
    Soft(String),
    Hard(PipelineError),
}

impl Pipeline {
    pub fn new(gateway: Arc<Gateway>, config: ExperimentConfig, prompts: StagePrompts) -> Self {
        Self {
            gateway,
            config,
            prompts,
            gaze_dir: None,
        }
    }

    pub fn with_gaze_dir(mut self, dir: Option<PathBuf>) -> Self {
        self.gaze_dir = dir;
        self
    }

    fn request(
        &self,
        endpoint: &EndpointConfig,
        system: &str,
        user_parts: Vec<UserPart>,
        decoding: Decoding,
        timeout_secs: u64,
        tag: RequestTag,
    ) -> ChatRequest {
        ChatRequest {
            model_name: endpoint.model_name.clone(),
            system_prompt: system.to_string(),
            user_parts,
            decoding,
            timeout: Duration::from_secs(timeout_secs),
            tag,
        }
    }

    async fn decode(video: &Video, indices: Vec<u64>) -> Result<Vec<RgbImage>, VideoError> {
        let video = video.clone();
        tokio::task::spawn_blocking(move || extract_frames(&video, &indices))
            .await
            .expect("frame decoding task panicked")
    }

    /// Stacks the gaze heatmap under `frame` when one exists. An unreadable
    /// heatmap is logged and skipped.
    fn with_gaze(&self, video_id: &str, index: u64, frame: &RgbImage) -> Result<RgbImage, VideoError> {
        let heatmap = match &self.gaze_dir {
            Some(dir) => load_gaze_heatmap(dir, video_id, index).unwrap_or_else(|e| {
                tracing::warn!(video_id, frame = index, error = %e, "ignoring unreadable gaze heatmap");
                None
            }),
            None => None,
        };
        Ok(compose_gaze_frame(index, frame, heatmap.as_ref())?.image)
    }

    /// Stage 1: one observation per reference frame. A frame whose call or
    /// reply fails gets the sentinel caption and no hazards.
    pub async fn stage1_caption_frames(
        &self,
        video: &Video,
    ) -> Result<Vec<FrameObservation>, PipelineError> {
        let video_id = video.id().to_string();
        let stage1 = |source: StageError| PipelineError::Stage1 {
            video_id: video_id.clone(),
            source,
        };
        let cfg = &self.config.stage1;
        let indices = sample_reference_frames(video.frame_count(), cfg.k)
            .map_err(|e| stage1(e.into()))?;
        let frames = Self::decode(video, indices.clone())
            .await
            .map_err(|e| stage1(e.into()))?;

        let mut requests = Vec::with_capacity(indices.len());
        for (&index, frame) in indices.iter().zip(&frames) {
            let image = self
                .with_gaze(&video_id, index, frame)
                .map_err(|e| stage1(e.into()))?;
            let has_gaze = image.height() != frame.height();
            let gaze_note = if has_gaze {
                "The lower half is a heatmap of where the driver was looking."
            } else {
                ""
            };
            let vars = BTreeMap::from([
                ("frame_index", index.to_string()),
                ("frame_count", video.frame_count().to_string()),
                ("gaze_note", gaze_note.to_string()),
            ]);
            let png = encode_png(&image).map_err(|e| stage1(e.into()))?;
            requests.push(self.request(
                &cfg.endpoint,
                &self.prompts.stage1_system,
                vec![
                    UserPart::text(render(&self.prompts.stage1_user, &vars)),
                    UserPart::png(png),
                ],
                cfg.decoding,
                cfg.timeout_secs,
                RequestTag {
                    stage: "stage1".into(),
                    video_id: video_id.clone(),
                    frame: Some(index),
                    ordinal: 0,
                },
            ));
        }

        let replies = join_all(
            requests
                .iter()
                .map(|r| self.gateway.complete(&cfg.endpoint, r)),
        )
        .await;

        let mut observations = Vec::with_capacity(indices.len());
        let mut failed = 0;
        for ((&index, request), reply) in indices.iter().zip(&requests).zip(replies) {
            let parsed = match reply {
                Ok(resp) => parse_frame_caption(&resp.text),
                Err(e) if hard_error(&e) => {
                    return Err(PipelineError::Request {
                        tag: request.tag.clone(),
                        source: e,
                    })
                }
                Err(e) => Err(e.to_string()),
            };
            let (caption, hazards) = parsed.unwrap_or_else(|message| {
                tracing::warn!(tag = %request.tag, %message, "frame caption unavailable");
                failed += 1;
                (CAPTION_UNAVAILABLE.to_string(), Vec::new())
            });
            observations.push(FrameObservation {
                frame_index: index,
                caption,
                hazards,
            });
        }
        if failed == observations.len() {
            return Err(stage1(StageError::AllFramesFailed { frames: failed }));
        }
        Ok(observations)
    }

    /// Stage 2: asks the model for the incident frame. Unparseable replies
    /// fall back to [`fallback_incident_frame`]; the result is always a valid
    /// frame of the video.
    pub async fn stage2_detect_incident(
        &self,
        video_id: &str,
        observations: &[FrameObservation],
        frame_count: u64,
    ) -> Result<DetectionResult, PipelineError> {
        let stage2 = |source: StageError| PipelineError::Stage2 {
            video_id: video_id.to_string(),
            source,
        };
        if observations.is_empty() || frame_count == 0 {
            return Err(stage2(StageError::NoObservations));
        }
        let cfg = &self.config.stage2;
        let vars = BTreeMap::from([
            ("observations", render_observations(observations)),
            ("frame_count", frame_count.to_string()),
        ]);
        let request = self.request(
            &cfg.endpoint,
            &self.prompts.stage2_system,
            vec![UserPart::text(render(&self.prompts.stage2_user, &vars))],
            cfg.decoding,
            cfg.timeout_secs,
            RequestTag {
                stage: "stage2".into(),
                video_id: video_id.to_string(),
                frame: None,
                ordinal: 0,
            },
        );
        let reply = match self.gateway.complete(&cfg.endpoint, &request).await {
            Ok(r) => r,
            Err(e) if hard_error(&e) => {
                return Err(PipelineError::Request {
                    tag: request.tag,
                    source: e,
                })
            }
            Err(e) => return Err(stage2(e.into())),
        };
        if let Some((frame, rationale)) = parse_incident_frame(&reply.text, frame_count) {
            return Ok(DetectionResult {
                incident_frame: frame,
                rationale,
                source: DetectionSource::Model,
            });
        }
        let frame = fallback_incident_frame(observations)
            .expect("observations are non-empty")
            .min(frame_count - 1);
        tracing::warn!(video_id, frame, "stage 2 reply unusable, using fallback frame");
        Ok(DetectionResult {
            incident_frame: frame,
            rationale: "fallback: most hazards among reference frames".into(),
            source: DetectionSource::Fallback,
        })
    }

    /// Stage 3 for one grid point, decoding its own frames.
    pub async fn stage3_generate_report(
        &self,
        video: &Video,
        incident_frame: u64,
        point: &GridPoint,
    ) -> Result<Result<IncidentReport, GridFailure>, PipelineError> {
        let frames = match self.stage3_frames(video, incident_frame, std::slice::from_ref(point)).await {
            Ok(f) => f,
            Err(e) => {
                return Ok(Err(GridFailure {
                    provenance: point.provenance(),
                    message: e.to_string(),
                }))
            }
        };
        self.stage3_point(video.id(), video.frame_count(), incident_frame, point, &frames)
            .await
    }

    /// PNG-encoded frames for the union of the grid's frame sets.
    async fn stage3_frames(
        &self,
        video: &Video,
        incident_frame: u64,
        grid: &[GridPoint],
    ) -> Result<BTreeMap<u64, Vec<u8>>, VideoError> {
        let mut wanted = BTreeSet::new();
        for p in grid {
            wanted.extend(frame_set(
                incident_frame,
                p.sampling.k,
                p.sampling.t,
                video.frame_count(),
            )?);
        }
        let indices: Vec<u64> = wanted.into_iter().collect();
        let frames = Self::decode(video, indices.clone()).await?;
        let mut out = BTreeMap::new();
        for (index, frame) in indices.into_iter().zip(frames) {
            let image = if self.config.stage3.gaze {
                self.with_gaze(video.id(), index, &frame)?
            } else {
                frame
            };
            out.insert(index, encode_png(&image)?);
        }
        Ok(out)
    }

    async fn stage3_point(
        &self,
        video_id: &str,
        frame_count: u64,
        incident_frame: u64,
        point: &GridPoint,
        frames: &BTreeMap<u64, Vec<u8>>,
    ) -> Result<Result<IncidentReport, GridFailure>, PipelineError> {
        let provenance = point.provenance();
        match self
            .stage3_attempts(video_id, frame_count, incident_frame, point, frames)
            .await
        {
            Ok(report) => Ok(Ok(report)),
            Err(Stage3Error::Soft(message)) => {
                tracing::warn!(video_id, %provenance, %message, "grid point failed");
                Ok(Err(GridFailure {
                    provenance,
                    message,
                }))
            }
            Err(Stage3Error::Hard(e)) => Err(e),
        }
    }

    async fn stage3_attempts(
        &self,
        video_id: &str,
        frame_count: u64,
        incident_frame: u64,
        point: &GridPoint,
        frames: &BTreeMap<u64, Vec<u8>>,
    ) -> Result<IncidentReport, Stage3Error> {
        let cfg = &self.config.stage3;
        let provenance = point.provenance();
        let set = frame_set(incident_frame, point.sampling.k, point.sampling.t, frame_count)
            .map_err(|e| Stage3Error::Soft(e.to_string()))?;
        let vars = BTreeMap::from([
            (
                "frame_indices",
                set.iter().map(u64::to_string).collect::<Vec<_>>().join(", "),
            ),
            ("incident_frame", incident_frame.to_string()),
            ("k", point.sampling.k.to_string()),
            ("t", point.sampling.t.to_string()),
            ("frame_count", frame_count.to_string()),
        ]);
        let mut parts = vec![UserPart::text(render(&self.prompts.stage3_user, &vars))];
        for index in &set {
            let png = frames
                .get(index)
                .ok_or_else(|| Stage3Error::Soft(format!("frame {index} was not decoded")))?;
            parts.push(UserPart::png(png.clone()));
        }

        let mut last_problem = String::new();
        for ordinal in 0..2u32 {
            if ordinal == 1 {
                parts.push(UserPart::text(self.prompts.strict_instruction.clone()));
            }
            let request = self.request(
                &point.endpoint,
                &self.prompts.stage3_system,
                parts.clone(),
                cfg.decoding,
                cfg.timeout_secs,
                RequestTag {
                    stage: format!("stage3{provenance}"),
                    video_id: video_id.to_string(),
                    frame: Some(incident_frame),
                    ordinal,
                },
            );
            let reply = match self.gateway.complete(&point.endpoint, &request).await {
                Ok(r) => r,
                Err(e) if hard_error(&e) => {
                    return Err(Stage3Error::Hard(PipelineError::Request {
                        tag: request.tag,
                        source: e,
                    }))
                }
                Err(e) => return Err(Stage3Error::Soft(e.to_string())),
            };
            let parsed = extract_structured(&reply.text, SchemaId::Report)
                .map_err(|e| e.to_string())
                .and_then(|doc| report_from_value(&doc, video_id, &provenance, Some(incident_frame)));
            match parsed {
                Ok(ParsedReport {
                    report,
                    corrections,
                }) => {
                    for c in corrections {
                        tracing::warn!(video_id, %provenance, correction = %c, "report auto-corrected");
                    }
                    return Ok(report);
                }
                Err(problem) => {
                    tracing::warn!(tag = %request.tag, %problem, "unusable stage 3 reply");
                    last_problem = problem;
                }
            }
        }
        Err(Stage3Error::Soft(format!(
            "unusable reply after re-prompt: {last_problem}"
        )))
    }

    /// Stage 1 once, Stage 2 once, Stage 3 once per grid point. Grid points
    /// that fail are reported next to the candidates.
    pub async fn run(&self, video: &Video) -> Result<PipelineOutput, PipelineError> {
        let video_id = video.id().to_string();
        let t0 = Instant::now();
        let observations = self.stage1_caption_frames(video).await?;
        let t1 = Instant::now();
        let detection = self
            .stage2_detect_incident(&video_id, &observations, video.frame_count())
            .await?;
        let t2 = Instant::now();

        let grid = self.config.stage3.grid();
        let i = detection.incident_frame;
        let mut candidates = Vec::new();
        let mut failures = Vec::new();
        match self.stage3_frames(video, i, &grid).await {
            Err(e) => {
                failures.extend(grid.iter().map(|p| GridFailure {
                    provenance: p.provenance(),
                    message: e.to_string(),
                }));
            }
            Ok(frames) => {
                let outcomes = join_all(grid.iter().map(|p| {
                    self.stage3_point(&video_id, video.frame_count(), i, p, &frames)
                }))
                .await;
                for outcome in outcomes {
                    match outcome? {
                        Ok(report) => candidates.push(report),
                        Err(failure) => failures.push(failure),
                    }
                }
            }
        }
        let t3 = Instant::now();
        Ok(PipelineOutput {
            video_id,
            frame_count: video.frame_count(),
            observations,
            detection,
            candidates,
            failures,
            timings: StageTimings {
                stage1_ms: (t1 - t0).as_millis() as u64,
                stage2_ms: (t2 - t1).as_millis() as u64,
                stage3_ms: (t3 - t2).as_millis() as u64,
            },
        })
    }
}

/// Caption and hazard notes from a Stage 1 reply.
fn parse_frame_caption(text: &str) -> Result<(String, Vec<HazardNote>), String> {
    let doc = extract_structured(text, SchemaId::FrameCaption).map_err(|e| e.to_string())?;
    let caption = doc["caption"].as_str().unwrap_or_default().trim().to_string();
    let hazards = doc["hazards"]
        .as_array()
        .map(|items| {
            items
                .iter()
                .filter_map(|h| {
                    let description = h["description"].as_str()?.trim();
                    let category = HazardCategory::from_loose(h["category"].as_str()?);
                    (!description.is_empty()).then(|| HazardNote {
                        category,
                        description: description.to_string(),
                    })
                })
                .collect()
        })
        .unwrap_or_default();
    Ok((caption, hazards))
}

/// Free-function form of [`Pipeline::run`].
pub async fn run_pipeline(
    pipeline: &Pipeline,
    video: &Video,
) -> Result<PipelineOutput, PipelineError> {
    pipeline.run(video).await
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn report_defaults_and_corrections() {
        let doc = json!({
            "event_type": "accident", "crash_severity": 3, "ego_involved": true,
            "entity_counts": {"vehicles": 2}, "caption_before": "a", "caption_after": "b"
        });
        let p = report_from_value(&doc, "v1", "(m,k=10,t=2)", Some(100)).unwrap();
        assert_eq!(p.report.time_to_incident_frames, Some(100));
        assert_eq!(p.report.entity_counts[&EntityKind::Vehicle], 2);
        assert_eq!(p.report.entity_counts[&EntityKind::Animal], 0);
        assert!(p.corrections.is_empty());

        let doc = json!({
            "event_type": "no_incident", "crash_severity": 3, "ego_involved": false,
            "entity_counts": {}, "time_to_incident_frames": 7,
            "caption_before": "calm", "caption_after": "nothing"
        });
        let p = report_from_value(&doc, "v1", "x", Some(100)).unwrap();
        assert_eq!(p.report.crash_severity, 0);
        assert_eq!(p.report.time_to_incident_frames, None);
        assert_eq!(p.corrections.len(), 2);
    }

    #[test]
    fn empty_caption_is_an_error() {
        let doc = json!({
            "event_type": "hazard", "crash_severity": 1, "ego_involved": false,
            "entity_counts": {}, "caption_before": " ", "caption_after": "b"
        });
        assert!(report_from_value(&doc, "v1", "x", None).is_err());
    }

    #[test]
    fn frame_caption_parsing() {
        let (caption, hazards) = parse_frame_caption(
            r#"{"caption": " A dog runs. ", "hazards": [{"category": "Animal", "description": "dog"},
               {"category": "vehicle", "description": " "}]}"#,
        )
        .unwrap();
        assert_eq!(caption, "A dog runs.");
        assert_eq!(hazards.len(), 1);
        assert_eq!(hazards[0].category, HazardCategory::Animal);
        assert!(parse_frame_caption("nope").is_err());
    }
}

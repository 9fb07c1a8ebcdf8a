//! Consolidation of a video's candidate reports into one final report by a
//! text-only model.
//!
//! The model writes the prose. Structured fields are checked against the
//! candidates afterwards:
//! - `event_type` and `ego_involved` take the candidates' strict-majority
//!   value when there is one;
//! - severity, time-to-incident and each entity count take the candidates'
//!   value when all candidates agree;
//! - entity counts never exceed the per-category maximum over candidates.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::EnsembleConfig;
use crate::gateway::{extract_structured, ChatRequest, Gateway, GatewayError, RequestTag, SchemaId, UserPart};
use crate::pipeline::{render, report_from_value, StagePrompts};
use crate::report::{serialize_report, EntityKind, EventType, IncidentReport};

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("no candidates to ensemble")]
    NoCandidates,
    #[error("candidates belong to different videos: {0} and {1}")]
    MixedVideos(String, String),
    #[error("request {tag} could not be made: {source}")]
    Request {
        tag: RequestTag,
        #[source]
        source: GatewayError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleSource {
    /// Single candidate, returned without a model call.
    Passthrough,
    Model,
    /// The model's replies were unusable; a representative candidate was chosen.
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleOutcome {
    pub report: IncidentReport,
    pub source: EnsembleSource,
    /// Fields where the candidates' consensus replaced the model's value.
    pub overrides: Vec<String>,
}

pub fn ensemble_provenance(n: usize) -> String {
    format!("ensemble({n} candidates)")
}

/// Value held by more than half of `values`.
fn strict_majority<T: Ord + Copy>(values: &[T]) -> Option<T> {
    let mut counts: BTreeMap<T, usize> = BTreeMap::new();
    for &v in values {
        *counts.entry(v).or_default() += 1;
    }
    counts
        .into_iter()
        .find(|&(_, n)| 2 * n > values.len())
        .map(|(v, _)| v)
}

fn unanimous<T: PartialEq + Copy>(values: &[T]) -> Option<T> {
    let first = *values.first()?;
    values.iter().all(|&v| v == first).then_some(first)
}

/// Applies the candidate consensus to a model-written report.
pub fn reconcile(report: &mut IncidentReport, candidates: &[IncidentReport]) -> Vec<String> {
    let mut overrides = Vec::new();
    let events: Vec<EventType> = candidates.iter().map(|c| c.event_type).collect();
    if let Some(major) = strict_majority(&events) {
        if report.event_type != major {
            overrides.push(format!("event_type: {} -> {}", report.event_type, major));
            report.event_type = major;
        }
    }
    let egos: Vec<bool> = candidates.iter().map(|c| c.ego_involved).collect();
    if let Some(major) = strict_majority(&egos) {
        if report.ego_involved != major {
            overrides.push(format!("ego_involved: {} -> {}", report.ego_involved, major));
            report.ego_involved = major;
        }
    }
    let severities: Vec<u8> = candidates.iter().map(|c| c.crash_severity).collect();
    if let Some(s) = unanimous(&severities) {
        if report.crash_severity != s {
            overrides.push(format!("crash_severity: {} -> {}", report.crash_severity, s));
            report.crash_severity = s;
        }
    }
    for kind in EntityKind::ALL {
        let counts: Vec<u32> = candidates
            .iter()
            .map(|c| c.entity_counts.get(&kind).copied().unwrap_or(0))
            .collect();
        let max = counts.iter().copied().max().unwrap_or(0);
        let target = unanimous(&counts);
        let current = report.entity_counts.get(&kind).copied().unwrap_or(0);
        let fixed = match target {
            Some(u) => u,
            None => current.min(max),
        };
        if fixed != current {
            overrides.push(format!("entity_counts.{}: {} -> {}", kind.key(), current, fixed));
        }
        report.entity_counts.insert(kind, fixed);
    }
    if report.event_type == EventType::NoIncident {
        report.crash_severity = 0;
        report.time_to_incident_frames = None;
    } else {
        let ttfs: Vec<Option<u64>> = candidates
            .iter()
            .filter(|c| c.event_type != EventType::NoIncident)
            .map(|c| c.time_to_incident_frames)
            .collect();
        if let Some(t) = unanimous(&ttfs) {
            if report.time_to_incident_frames != t {
                overrides.push(format!(
                    "time_to_incident_frames: {:?} -> {:?}",
                    report.time_to_incident_frames, t
                ));
                report.time_to_incident_frames = t;
            }
        }
        if report.time_to_incident_frames.is_none() {
            report.time_to_incident_frames = ttfs.iter().flatten().next().copied();
        }
    }
    overrides
}

/// Candidate matching the set's most common event type and median severity,
/// earliest provenance first. Candidates must be sorted by provenance.
pub fn fallback_candidate(candidates: &[IncidentReport]) -> &IncidentReport {
    let mut counts: BTreeMap<EventType, usize> = BTreeMap::new();
    for c in candidates {
        *counts.entry(c.event_type).or_default() += 1;
    }
    let top = counts.values().copied().max().unwrap_or(0);
    // Among equally common event types, the one seen first wins.
    let mode = candidates
        .iter()
        .map(|c| c.event_type)
        .find(|e| counts[e] == top)
        .expect("candidates are non-empty");
    let mut severities: Vec<u8> = candidates.iter().map(|c| c.crash_severity).collect();
    severities.sort_unstable();
    let median = severities[(severities.len() - 1) / 2];
    candidates
        .iter()
        .filter(|c| c.event_type == mode)
        .min_by_key(|c| c.crash_severity.abs_diff(median))
        .expect("the mode occurs among the candidates")
}

/// Renders candidates for the prompt, numbered, without provenance.
pub fn render_candidates(candidates: &[IncidentReport]) -> String {
    candidates
        .iter()
        .enumerate()
        .map(|(n, c)| {
            let mut c = c.clone();
            c.provenance.clear();
            format!("Candidate {}: {}", n + 1, serialize_report(&c))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub struct Ensembler<'a> {
    pub gateway: &'a Gateway,
    pub config: &'a EnsembleConfig,
    pub prompts: &'a StagePrompts,
}

impl Ensembler<'_> {
    pub async fn ensemble(
        &self,
        candidates: &[IncidentReport],
    ) -> Result<EnsembleOutcome, EnsembleError> {
        let first = candidates.first().ok_or(EnsembleError::NoCandidates)?;
        let video_id = first.video_id.clone();
        if let Some(other) = candidates.iter().find(|c| c.video_id != video_id) {
            return Err(EnsembleError::MixedVideos(video_id, other.video_id.clone()));
        }
        let mut sorted = candidates.to_vec();
        sorted.sort_by(|a, b| a.provenance.cmp(&b.provenance));
        if sorted.len() == 1 {
            return Ok(EnsembleOutcome {
                report: sorted.remove(0),
                source: EnsembleSource::Passthrough,
                overrides: Vec::new(),
            });
        }

        let provenance = ensemble_provenance(sorted.len());
        let vars = BTreeMap::from([
            ("candidates", render_candidates(&sorted)),
            ("count", sorted.len().to_string()),
        ]);
        let mut parts = vec![UserPart::text(render(&self.prompts.ensemble_user, &vars))];
        for ordinal in 0..2u32 {
            if ordinal == 1 {
                parts.push(UserPart::text(self.prompts.strict_instruction.clone()));
            }
            let request = ChatRequest {
                model_name: self.config.endpoint.model_name.clone(),
                system_prompt: self.prompts.ensemble_system.clone(),
                user_parts: parts.clone(),
                decoding: self.config.decoding,
                timeout: Duration::from_secs(self.config.timeout_secs),
                tag: RequestTag {
                    stage: "ensemble".into(),
                    video_id: video_id.clone(),
                    frame: None,
                    ordinal,
                },
            };
            let text = match self.gateway.complete(&self.config.endpoint, &request).await {
                Ok(r) => r.text,
                Err(
                    e @ (GatewayError::MissingScript(_)
                    | GatewayError::MissingApiKey(_)
                    | GatewayError::InvalidRequest(_)),
                ) => {
                    return Err(EnsembleError::Request {
                        tag: request.tag,
                        source: e,
                    })
                }
                Err(e) => {
                    tracing::warn!(tag = %request.tag, error = %e, "ensemble call failed");
                    break;
                }
            };
            let parsed = extract_structured(&text, SchemaId::Report)
                .map_err(|e| e.to_string())
                .and_then(|doc| report_from_value(&doc, &video_id, &provenance, None));
            match parsed {
                Ok(p) => {
                    let mut report = p.report;
                    let overrides = reconcile(&mut report, &sorted);
                    for o in &overrides {
                        tracing::info!(video_id, override_ = %o, "candidate consensus overrides model");
                    }
                    return Ok(EnsembleOutcome {
                        report,
                        source: EnsembleSource::Model,
                        overrides,
                    });
                }
                Err(problem) => {
                    tracing::warn!(tag = %request.tag, %problem, "unusable ensemble reply");
                }
            }
        }
        let chosen = fallback_candidate(&sorted).clone();
        tracing::warn!(video_id, provenance = %chosen.provenance, "ensemble fell back to a candidate");
        Ok(EnsembleOutcome {
            report: chosen,
            source: EnsembleSource::Fallback,
            overrides: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::zero_counts;

    fn cand(prov: &str, event: EventType, sev: u8) -> IncidentReport {
        IncidentReport {
            video_id: "v1".into(),
            event_type: event,
            crash_severity: sev,
            ego_involved: false,
            entity_counts: zero_counts(),
            time_to_incident_frames: (event != EventType::NoIncident).then_some(40),
            caption_before: "before".into(),
            caption_after: "after".into(),
            provenance: prov.into(),
        }
    }

    #[test]
    fn majority_needs_more_than_half() {
        assert_eq!(strict_majority(&[1, 1, 2]), Some(1));
        assert_eq!(strict_majority(&[1, 2]), None);
        assert_eq!(strict_majority(&[1, 2, 3]), None);
        assert_eq!(strict_majority::<u8>(&[]), None);
    }

    #[test]
    fn reconcile_overrides_event_type() {
        let cands = vec![
            cand("a", EventType::Accident, 3),
            cand("b", EventType::Accident, 3),
            cand("c", EventType::Hazard, 2),
        ];
        let mut r = cand("x", EventType::Hazard, 2);
        let o = reconcile(&mut r, &cands);
        assert_eq!(r.event_type, EventType::Accident);
        assert!(o.iter().any(|s| s.starts_with("event_type")));
    }

    #[test]
    fn tie_defers_to_model() {
        let cands = vec![cand("a", EventType::Accident, 3), cand("b", EventType::Hazard, 2)];
        let mut r = cand("x", EventType::Hazard, 2);
        reconcile(&mut r, &cands);
        assert_eq!(r.event_type, EventType::Hazard);
    }

    #[test]
    fn counts_are_clamped_to_candidate_max() {
        let mut a = cand("a", EventType::Accident, 3);
        a.entity_counts.insert(EntityKind::Vehicle, 2);
        let mut b = cand("b", EventType::Accident, 3);
        b.entity_counts.insert(EntityKind::Vehicle, 1);
        let mut r = cand("x", EventType::Accident, 3);
        r.entity_counts.insert(EntityKind::Vehicle, 5);
        r.entity_counts.insert(EntityKind::Animal, 1);
        reconcile(&mut r, &[a, b]);
        assert_eq!(r.entity_counts[&EntityKind::Vehicle], 2);
        assert_eq!(r.entity_counts[&EntityKind::Animal], 0);
    }

    #[test]
    fn fallback_prefers_median_severity() {
        let cands = vec![
            cand("a", EventType::Accident, 2),
            cand("b", EventType::Accident, 3),
            cand("c", EventType::Accident, 3),
        ];
        assert_eq!(fallback_candidate(&cands).provenance, "b");
        let cands = vec![
            cand("a", EventType::Hazard, 1),
            cand("b", EventType::Accident, 4),
            cand("c", EventType::Accident, 0),
        ];
        // Mode accident; median severity over all candidates is 1; closest accident is c.
        assert_eq!(fallback_candidate(&cands).provenance, "c");
    }

    #[test]
    fn rendered_candidates_hide_provenance() {
        let text = render_candidates(&[cand("(GLM-4.5V,k=2,t=6)", EventType::Hazard, 1)]);
        assert!(!text.contains("GLM"));
        assert!(text.starts_with("Candidate 1: {"));
    }
}

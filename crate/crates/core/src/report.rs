//! Domain types shared by the pipeline, the metrics and the scoring service.
//!
//! [`IncidentReport`] is the structured output per video. Its JSON document
//! shape is fixed (see [`serialize_report`]) and is the on-disk format for
//! candidate files, submissions and reference sets.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Highest crash-severity level. Levels run `0..=MAX_SEVERITY`, 0 meaning no danger.
pub const MAX_SEVERITY: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventType {
    Hazard,
    Accident,
    NoIncident,
}

impl EventType {
    pub fn as_str(self) -> &'static str {
        match self {
            EventType::Hazard => "hazard",
            EventType::Accident => "accident",
            EventType::NoIncident => "no_incident",
        }
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Other parties counted in a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityKind {
    #[serde(rename = "vehicles")]
    Vehicle,
    #[serde(rename = "pedestrians")]
    Pedestrian,
    #[serde(rename = "cyclists_or_scooters")]
    CyclistOrScooter,
    #[serde(rename = "animals")]
    Animal,
}

impl EntityKind {
    pub const ALL: [EntityKind; 4] = [
        EntityKind::Vehicle,
        EntityKind::Pedestrian,
        EntityKind::CyclistOrScooter,
        EntityKind::Animal,
    ];

    /// Key used in the JSON document.
    pub fn key(self) -> &'static str {
        match self {
            EntityKind::Vehicle => "vehicles",
            EntityKind::Pedestrian => "pedestrians",
            EntityKind::CyclistOrScooter => "cyclists_or_scooters",
            EntityKind::Animal => "animals",
        }
    }
}

pub type EntityCounts = BTreeMap<EntityKind, u32>;

/// Entity counts with every kind present and set to zero.
pub fn zero_counts() -> EntityCounts {
    EntityKind::ALL.iter().map(|&k| (k, 0)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncidentReport {
    pub video_id: String,
    pub event_type: EventType,
    pub crash_severity: u8,
    pub ego_involved: bool,
    pub entity_counts: EntityCounts,
    pub time_to_incident_frames: Option<u64>,
    pub caption_before: String,
    pub caption_after: String,
    /// Generating configuration. Never shown to A/B evaluators. Optional in
    /// input documents (reference annotations have none).
    #[serde(default)]
    pub provenance: String,
}

/// Field names of the report document, in canonical order.
pub const REPORT_FIELDS: [&str; 9] = [
    "video_id",
    "event_type",
    "crash_severity",
    "ego_involved",
    "entity_counts",
    "time_to_incident_frames",
    "caption_before",
    "caption_after",
    "provenance",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HazardCategory {
    Vehicle,
    Pedestrian,
    CyclistOrScooter,
    Animal,
    DebrisOrOther,
}

impl HazardCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            HazardCategory::Vehicle => "vehicle",
            HazardCategory::Pedestrian => "pedestrian",
            HazardCategory::CyclistOrScooter => "cyclist_or_scooter",
            HazardCategory::Animal => "animal",
            HazardCategory::DebrisOrOther => "debris_or_other",
        }
    }

    /// Lenient mapping for model output; anything unrecognised is debris/other.
    pub fn from_loose(s: &str) -> HazardCategory {
        match s.trim().to_ascii_lowercase().replace([' ', '-'], "_").as_str() {
            "vehicle" | "vehicles" | "car" | "truck" => HazardCategory::Vehicle,
            "pedestrian" | "pedestrians" | "person" => HazardCategory::Pedestrian,
            "cyclist_or_scooter" | "cyclist" | "cyclists_or_scooters" | "scooter" | "bicycle" => {
                HazardCategory::CyclistOrScooter
            }
            "animal" | "animals" => HazardCategory::Animal,
            _ => HazardCategory::DebrisOrOther,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HazardNote {
    pub category: HazardCategory,
    pub description: String,
}

/// Caption and hazard notes for one reference frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameObservation {
    pub frame_index: u64,
    pub caption: String,
    pub hazards: Vec<HazardNote>,
}

/// Frame interval `k` and symmetric offset `t` (in multiples of `k`) of a frame set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub k: u64,
    pub t: u64,
}

impl SamplingConfig {
    pub fn new(k: u64, t: u64) -> Result<Self, InvalidSampling> {
        if k == 0 {
            return Err(InvalidSampling);
        }
        Ok(Self { k, t })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("frame interval k must be at least 1")]
pub struct InvalidSampling;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionSource {
    Model,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub incident_frame: u64,
    pub rationale: String,
    pub source: DetectionSource,
}

/// One broken invariant of a report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Checks every report invariant. An empty list means the report is well formed.
pub fn validate_report(report: &IncidentReport) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |field: &'static str, message: String| out.push(Violation { field, message });

    if report.crash_severity > MAX_SEVERITY {
        push(
            "crash_severity",
            format!("{} exceeds maximum level {MAX_SEVERITY}", report.crash_severity),
        );
    }
    if report.event_type == EventType::NoIncident {
        if let Some(t) = report.time_to_incident_frames {
            push(
                "time_to_incident_frames",
                format!("must be absent for no_incident, found {t}"),
            );
        }
        if report.crash_severity != 0 {
            push(
                "crash_severity",
                format!("must be 0 for no_incident, found {}", report.crash_severity),
            );
        }
    }
    let missing: Vec<&str> = EntityKind::ALL
        .iter()
        .filter(|k| !report.entity_counts.contains_key(k))
        .map(|k| k.key())
        .collect();
    if !missing.is_empty() {
        push("entity_counts", format!("missing keys: {}", missing.join(", ")));
    }
    if report.event_type != EventType::NoIncident {
        if report.caption_before.trim().is_empty() {
            push("caption_before", "empty".to_string());
        }
        if report.caption_after.trim().is_empty() {
            push("caption_after", "empty".to_string());
        }
    }
    out
}

/// Canonical single-line JSON document for a report, fields in fixed order.
pub fn serialize_report(report: &IncidentReport) -> String {
    serde_json::to_string(report).expect("report serialization is infallible")
}

#[derive(Debug, Error)]
pub enum ReportParseError {
    #[error("malformed report at line {line}, column {column}, field `{field}`: {message}")]
    Malformed {
        line: usize,
        column: usize,
        field: String,
        message: String,
    },
}

impl ReportParseError {
    pub fn field(&self) -> &str {
        match self {
            ReportParseError::Malformed { field, .. } => field,
        }
    }
}

/// Something tolerated while parsing, such as an unknown field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseWarning(pub String);

/// Parses a report document, returning warnings for tolerated oddities.
pub fn parse_report_with_warnings(
    doc: &str,
) -> Result<(IncidentReport, Vec<ParseWarning>), ReportParseError> {
    let mut warnings = Vec::new();
    let de = &mut serde_json::Deserializer::from_str(doc);
    let value: serde_json::Value = serde_path_to_error::deserialize(de).map_err(|e| {
        let inner = e.inner();
        ReportParseError::Malformed {
            line: inner.line(),
            column: inner.column(),
            field: e.path().to_string(),
            message: inner.to_string(),
        }
    })?;
    if let serde_json::Value::Object(map) = &value {
        for key in map.keys() {
            if !REPORT_FIELDS.contains(&key.as_str()) {
                warnings.push(ParseWarning(format!("ignoring unknown field `{key}`")));
            }
        }
    }
    // Second pass over the text so errors keep their line/column.
    let de = &mut serde_json::Deserializer::from_str(doc);
    let report: IncidentReport = serde_path_to_error::deserialize(de).map_err(|e| {
        let inner = e.inner();
        let path = e.path().to_string();
        let field = if path == "." {
            missing_field_name(&inner.to_string()).unwrap_or(path)
        } else {
            path
        };
        ReportParseError::Malformed {
            line: inner.line(),
            column: inner.column(),
            field,
            message: inner.to_string(),
        }
    })?;
    Ok((report, warnings))
}

/// Parses a report document, logging warnings.
pub fn parse_report(doc: &str) -> Result<IncidentReport, ReportParseError> {
    let (report, warnings) = parse_report_with_warnings(doc)?;
    for w in warnings {
        tracing::warn!(video_id = %report.video_id, "{}", w.0);
    }
    Ok(report)
}

fn missing_field_name(msg: &str) -> Option<String> {
    let rest = msg.strip_prefix("missing field `")?;
    Some(rest.split('`').next()?.to_string())
}

/// Reads a JSON-lines file of reports. Blank lines are skipped.
pub fn read_reports_jsonl(text: &str) -> Result<Vec<IncidentReport>, ReportParseError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            parse_report(l).map_err(|e| match e {
                ReportParseError::Malformed {
                    column,
                    field,
                    message,
                    ..
                } => ReportParseError::Malformed {
                    line: n + 1,
                    column,
                    field,
                    message,
                },
            })
        })
        .collect()
}

pub fn write_reports_jsonl(reports: &[IncidentReport]) -> String {
    let mut out = String::new();
    for r in reports {
        out.push_str(&serialize_report(r));
        out.push('\n');
    }
    out
}

/// Nominal frame rate of the challenge clips, used for frame/second conversion on export.
pub const NOMINAL_FPS: f64 = 30.0;

/// CSV export of a submission. Time-to-incident is written in frames and in seconds.
pub fn write_reports_csv(reports: &[IncidentReport], fps: f64) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "video_id",
        "event_type",
        "crash_severity",
        "ego_involved",
        "vehicles",
        "pedestrians",
        "cyclists_or_scooters",
        "animals",
        "time_to_incident_frames",
        "time_to_incident_seconds",
        "caption_before",
        "caption_after",
    ])?;
    for r in reports {
        let count = |k: EntityKind| r.entity_counts.get(&k).copied().unwrap_or(0).to_string();
        let (frames, secs) = match r.time_to_incident_frames {
            Some(f) => (f.to_string(), format!("{:.3}", f as f64 / fps)),
            None => (String::new(), String::new()),
        };
        w.write_record([
            r.video_id.clone(),
            r.event_type.to_string(),
            r.crash_severity.to_string(),
            r.ego_involved.to_string(),
            count(EntityKind::Vehicle),
            count(EntityKind::Pedestrian),
            count(EntityKind::CyclistOrScooter),
            count(EntityKind::Animal),
            frames,
            secs,
            r.caption_before.clone(),
            r.caption_after.clone(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

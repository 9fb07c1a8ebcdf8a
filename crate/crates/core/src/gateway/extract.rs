use serde_json::{Map, Value};
use thiserror::Error;

use crate::report::{EntityKind, MAX_SEVERITY};

/// Output schemas the pipeline asks models for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemaId {
    /// `{caption, hazards: [{category, description}]}`
    FrameCaption,
    /// `{incident_frame, rationale?}`
    IncidentFrame,
    /// Incident report fields; `video_id` and `provenance` optional.
    Report,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ExtractionError {
    #[error("no JSON object found in model output")]
    NoObject { raw: String },
    #[error("model output violates the {schema:?} schema: {message}")]
    Schema {
        schema: SchemaId,
        message: String,
        raw: String,
    },
}

impl ExtractionError {
    /// The model text that failed to parse, for logging.
    pub fn raw(&self) -> &str {
        match self {
            ExtractionError::NoObject { raw } | ExtractionError::Schema { raw, .. } => raw,
        }
    }
}

/// First well-formed JSON object in `text`, ignoring code fences and prose around it.
pub fn find_json_object(text: &str) -> Option<Map<String, Value>> {
    text.char_indices()
        .filter(|&(_, c)| c == '{')
        .find_map(|(pos, _)| {
            let mut stream = serde_json::Deserializer::from_str(&text[pos..]).into_iter::<Value>();
            match stream.next() {
                Some(Ok(Value::Object(map))) => Some(map),
                _ => None,
            }
        })
}

/// Locates the first JSON object in a model reply and validates it against `schema`.
pub fn extract_structured(text: &str, schema: SchemaId) -> Result<Value, ExtractionError> {
    let Some(map) = find_json_object(text) else {
        return Err(ExtractionError::NoObject {
            raw: text.to_string(),
        });
    };
    validate(schema, &map).map_err(|message| ExtractionError::Schema {
        schema,
        message,
        raw: text.to_string(),
    })?;
    Ok(Value::Object(map))
}

fn require<'a>(map: &'a Map<String, Value>, key: &str) -> Result<&'a Value, String> {
    map.get(key).ok_or_else(|| format!("missing `{key}`"))
}

fn require_str<'a>(map: &'a Map<String, Value>, key: &str) -> Result<&'a str, String> {
    require(map, key)?
        .as_str()
        .ok_or_else(|| format!("`{key}` must be a string"))
}

fn validate(schema: SchemaId, map: &Map<String, Value>) -> Result<(), String> {
    match schema {
        SchemaId::FrameCaption => {
            if require_str(map, "caption")?.trim().is_empty() {
                return Err("`caption` is empty".into());
            }
            match map.get("hazards") {
                None | Some(Value::Null) => {}
                Some(Value::Array(items)) => {
                    for (n, item) in items.iter().enumerate() {
                        let obj = item
                            .as_object()
                            .ok_or_else(|| format!("hazards[{n}] must be an object"))?;
                        require_str(obj, "category").map_err(|e| format!("hazards[{n}]: {e}"))?;
                        require_str(obj, "description")
                            .map_err(|e| format!("hazards[{n}]: {e}"))?;
                    }
                }
                Some(_) => return Err("`hazards` must be an array".into()),
            }
        }
        SchemaId::IncidentFrame => {
            if !require(map, "incident_frame")?.is_number() {
                return Err("`incident_frame` must be a number".into());
            }
            if let Some(r) = map.get("rationale") {
                if !(r.is_string() || r.is_null()) {
                    return Err("`rationale` must be a string".into());
                }
            }
        }
        SchemaId::Report => {
            let event = require_str(map, "event_type")?;
            if !matches!(event, "hazard" | "accident" | "no_incident") {
                return Err(format!("`event_type` {event:?} is not hazard/accident/no_incident"));
            }
            let sev = require(map, "crash_severity")?
                .as_u64()
                .ok_or("`crash_severity` must be a non-negative integer")?;
            if sev > MAX_SEVERITY as u64 {
                return Err(format!("`crash_severity` {sev} exceeds {MAX_SEVERITY}"));
            }
            if !require(map, "ego_involved")?.is_boolean() {
                return Err("`ego_involved` must be a boolean".into());
            }
            let counts = require(map, "entity_counts")?
                .as_object()
                .ok_or("`entity_counts` must be an object")?;
            for (k, v) in counts {
                if !EntityKind::ALL.iter().any(|e| e.key() == k) {
                    return Err(format!("unknown entity_counts key `{k}`"));
                }
                if v.as_u64().is_none_or(|n| n > u32::MAX as u64) {
                    return Err(format!("entity_counts.{k} must be a non-negative integer"));
                }
            }
            match map.get("time_to_incident_frames") {
                None | Some(Value::Null) => {}
                Some(v) if v.as_u64().is_some() => {}
                Some(_) => {
                    return Err("`time_to_incident_frames` must be a non-negative integer".into())
                }
            }
            require_str(map, "caption_before")?;
            require_str(map, "caption_after")?;
            for opt in ["video_id", "provenance"] {
                if map.get(opt).is_some_and(|v| !(v.is_string() || v.is_null())) {
                    return Err(format!("`{opt}` must be a string"));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn fenced_object_is_found() {
        let v = extract_structured(
            "Sure! ```json {\"incident_frame\": 120} ```",
            SchemaId::IncidentFrame,
        )
        .unwrap();
        assert_eq!(v, json!({"incident_frame": 120}));
    }

    #[test]
    fn bare_object() {
        let v = extract_structured(r#"{"incident_frame": 120}"#, SchemaId::IncidentFrame).unwrap();
        assert_eq!(v, json!({"incident_frame": 120}));
    }

    #[test]
    fn prose_only_is_an_error() {
        let e = extract_structured("I cannot determine this.", SchemaId::IncidentFrame)
            .unwrap_err();
        assert!(matches!(e, ExtractionError::NoObject { .. }));
        assert_eq!(e.raw(), "I cannot determine this.");
    }

    #[test]
    fn skips_broken_braces_before_the_object() {
        let v = extract_structured(
            "thinking {not json} then {\"incident_frame\": 7, \"rationale\": \"brake {lights}\"}",
            SchemaId::IncidentFrame,
        )
        .unwrap();
        assert_eq!(v["incident_frame"], 7);
        assert_eq!(v["rationale"], "brake {lights}");
    }

    #[test]
    fn schema_violations() {
        assert!(matches!(
            extract_structured(r#"{"incident_frame": "120"}"#, SchemaId::IncidentFrame),
            Err(ExtractionError::Schema { .. })
        ));
        assert!(matches!(
            extract_structured(r#"{"caption": "  "}"#, SchemaId::FrameCaption),
            Err(ExtractionError::Schema { .. })
        ));
        let bad_report = json!({
            "event_type": "crash", "crash_severity": 1, "ego_involved": false,
            "entity_counts": {}, "caption_before": "a", "caption_after": "b"
        });
        assert!(extract_structured(&bad_report.to_string(), SchemaId::Report).is_err());
    }

    #[test]
    fn report_schema_accepts_partial_counts() {
        let doc = json!({
            "event_type": "hazard", "crash_severity": 2, "ego_involved": false,
            "entity_counts": {"pedestrians": 1}, "caption_before": "a", "caption_after": "b"
        });
        assert!(extract_structured(&doc.to_string(), SchemaId::Report).is_ok());
    }
}

//! Stage 2 text handling: the observation document sent to the model, the
//! incident-frame parser and the fallback rule.

use serde_json::Value;

use crate::gateway::{extract_structured, SchemaId};
use crate::report::FrameObservation;

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Numbered list, one line per reference frame:
/// `1. frame=9 | caption=<text> | hazards=vehicle:<desc>;pedestrian:<desc>`.
pub fn render_observations(observations: &[FrameObservation]) -> String {
    observations
        .iter()
        .enumerate()
        .map(|(n, o)| {
            let hazards: Vec<String> = o
                .hazards
                .iter()
                .map(|h| format!("{}:{}", h.category.as_str(), one_line(&h.description)))
                .collect();
            format!(
                "{}. frame={} | caption={} | hazards={}",
                n + 1,
                o.frame_index,
                one_line(&o.caption),
                hazards.join(";")
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Maps any JSON number onto `[0, frame_count - 1]`: negatives go to 0,
/// fractions are rounded, anything past the end goes to the last frame.
pub fn clamp_frame(value: &Value, frame_count: u64) -> Option<u64> {
    let last = frame_count.checked_sub(1)?;
    if let Some(u) = value.as_u64() {
        return Some(u.min(last));
    }
    if value.as_i64().is_some() {
        return Some(0);
    }
    let f = value.as_f64()?;
    if !f.is_finite() || f <= 0.0 {
        return Some(0);
    }
    let r = f.round();
    Some(if r >= last as f64 { last } else { r as u64 })
}

/// Incident frame and rationale from a Stage 2 reply, or `None` when the
/// reply has no usable `{"incident_frame": <number>}` object.
pub fn parse_incident_frame(text: &str, frame_count: u64) -> Option<(u64, String)> {
    let doc = extract_structured(text, SchemaId::IncidentFrame).ok()?;
    let frame = clamp_frame(&doc["incident_frame"], frame_count)?;
    let rationale = doc
        .get("rationale")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    Some((frame, rationale))
}

/// Frame of the observation with the most hazards (earliest on ties), or of
/// the middle observation when no observation lists any hazard.
pub fn fallback_incident_frame(observations: &[FrameObservation]) -> Option<u64> {
    if observations.is_empty() {
        return None;
    }
    let best = observations
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| a.hazards.len().cmp(&b.hazards.len()).then(ib.cmp(ia)))
        .map(|(_, o)| o)?;
    if best.hazards.is_empty() {
        return Some(observations[(observations.len() - 1) / 2].frame_index);
    }
    Some(best.frame_index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::{HazardCategory, HazardNote};
    use serde_json::json;

    fn obs(frame: u64, hazards: usize) -> FrameObservation {
        FrameObservation {
            frame_index: frame,
            caption: format!("frame {frame}"),
            hazards: (0..hazards)
                .map(|n| HazardNote {
                    category: HazardCategory::Pedestrian,
                    description: format!("person {n}"),
                })
                .collect(),
        }
    }

    #[test]
    fn renders_numbered_lines() {
        let mut o = obs(9, 1);
        o.caption = "A car\nbrakes.".into();
        let text = render_observations(&[o, obs(19, 0)]);
        assert_eq!(
            text,
            "1. frame=9 | caption=A car brakes. | hazards=pedestrian:person 0\n\
             2. frame=19 | caption=frame 19 | hazards="
        );
    }

    #[test]
    fn parses_and_clamps() {
        assert_eq!(
            parse_incident_frame(r#"{"incident_frame": 120}"#, 300),
            Some((120, String::new()))
        );
        assert_eq!(parse_incident_frame(r#"{"incident_frame": 9999}"#, 300).unwrap().0, 299);
        assert_eq!(parse_incident_frame(r#"{"incident_frame": -4}"#, 300).unwrap().0, 0);
        assert_eq!(parse_incident_frame(r#"{"incident_frame": 12.6}"#, 300).unwrap().0, 13);
        assert_eq!(parse_incident_frame(r#"{"incident_frame": 1e300}"#, 300).unwrap().0, 299);
        assert_eq!(parse_incident_frame("no idea", 300), None);
        assert_eq!(parse_incident_frame(r#"{"incident_frame": "12"}"#, 300), None);
    }

    #[test]
    fn clamp_handles_every_number_kind() {
        assert_eq!(clamp_frame(&json!(u64::MAX), 10), Some(9));
        assert_eq!(clamp_frame(&json!(i64::MIN), 10), Some(0));
        assert_eq!(clamp_frame(&json!(-0.4), 10), Some(0));
        assert_eq!(clamp_frame(&json!(8.5), 10), Some(9));
        assert_eq!(clamp_frame(&json!(3), 0), None);
    }

    #[test]
    fn fallback_rule() {
        assert_eq!(fallback_incident_frame(&[obs(9, 0), obs(19, 2), obs(29, 1)]), Some(19));
        assert_eq!(fallback_incident_frame(&[obs(9, 2), obs(19, 2), obs(29, 1)]), Some(9));
        assert_eq!(fallback_incident_frame(&[obs(9, 0), obs(19, 0), obs(29, 0)]), Some(19));
        assert_eq!(fallback_incident_frame(&[obs(9, 0), obs(19, 0)]), Some(9));
        assert_eq!(fallback_incident_frame(&[]), None);
    }
}

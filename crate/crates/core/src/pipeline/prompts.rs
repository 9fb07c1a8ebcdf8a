//! Prompt templates with `{{variable}}` placeholders.
//!
//! A template directory holds one plain-text file per template, named after
//! the template (`stage1_user.txt` and so on). Every declared variable must
//! appear in its template and no undeclared placeholder may appear.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

static PLACEHOLDER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\{\{\s*([A-Za-z_][A-Za-z0-9_]*)\s*\}\}").unwrap());

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("prompt file {} does not exist", path.display())]
    Missing { path: PathBuf },
    #[error("reading prompt file {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("template `{template}` does not use declared variable `{{{{{variable}}}}}`")]
    MissingVariable {
        template: &'static str,
        variable: &'static str,
    },
    #[error("template `{template}` uses unknown variable `{{{{{variable}}}}}`")]
    UnknownVariable {
        template: &'static str,
        variable: String,
    },
}

/// Template names and the variables each one declares.
pub const TEMPLATE_VARIABLES: [(&str, &[&str]); 9] = [
    ("stage1_system", &[]),
    ("stage1_user", &["frame_index", "frame_count", "gaze_note"]),
    ("stage2_system", &[]),
    ("stage2_user", &["observations", "frame_count"]),
    ("stage3_system", &[]),
    (
        "stage3_user",
        &["frame_indices", "incident_frame", "k", "t", "frame_count"],
    ),
    ("ensemble_system", &[]),
    ("ensemble_user", &["candidates", "count"]),
    ("strict_instruction", &[]),
];

/// Prompt text for every model call the pipeline and the ensembler make.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StagePrompts {
    pub stage1_system: String,
    pub stage1_user: String,
    pub stage2_system: String,
    pub stage2_user: String,
    pub stage3_system: String,
    pub stage3_user: String,
    pub ensemble_system: String,
    pub ensemble_user: String,
    /// Appended to the user message when a reply has to be requested again.
    pub strict_instruction: String,
}

impl Default for StagePrompts {
    fn default() -> Self {
        Self {
            stage1_system: DEFAULT_STAGE1_SYSTEM.into(),
            stage1_user: DEFAULT_STAGE1_USER.into(),
            stage2_system: DEFAULT_STAGE2_SYSTEM.into(),
            stage2_user: DEFAULT_STAGE2_USER.into(),
            stage3_system: DEFAULT_STAGE3_SYSTEM.into(),
            stage3_user: DEFAULT_STAGE3_USER.into(),
            ensemble_system: DEFAULT_ENSEMBLE_SYSTEM.into(),
            ensemble_user: DEFAULT_ENSEMBLE_USER.into(),
            strict_instruction: DEFAULT_STRICT.into(),
        }
    }
}

impl StagePrompts {
    fn get(&self, name: &str) -> &str {
        match name {
            "stage1_system" => &self.stage1_system,
            "stage1_user" => &self.stage1_user,
            "stage2_system" => &self.stage2_system,
            "stage2_user" => &self.stage2_user,
            "stage3_system" => &self.stage3_system,
            "stage3_user" => &self.stage3_user,
            "ensemble_system" => &self.ensemble_system,
            "ensemble_user" => &self.ensemble_user,
            "strict_instruction" => &self.strict_instruction,
            other => panic!("unknown template {other}"),
        }
    }

    fn get_mut(&mut self, name: &str) -> &mut String {
        match name {
            "stage1_system" => &mut self.stage1_system,
            "stage1_user" => &mut self.stage1_user,
            "stage2_system" => &mut self.stage2_system,
            "stage2_user" => &mut self.stage2_user,
            "stage3_system" => &mut self.stage3_system,
            "stage3_user" => &mut self.stage3_user,
            "ensemble_system" => &mut self.ensemble_system,
            "ensemble_user" => &mut self.ensemble_user,
            "strict_instruction" => &mut self.strict_instruction,
            other => panic!("unknown template {other}"),
        }
    }

    /// Loads every template from `dir`. All files must be present.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut prompts = Self::default();
        for (name, _) in TEMPLATE_VARIABLES {
            let path = dir.join(format!("{name}.txt"));
            if !path.is_file() {
                return Err(PromptError::Missing { path });
            }
            let text =
                std::fs::read_to_string(&path).map_err(|source| PromptError::Io { path, source })?;
            *prompts.get_mut(name) = text;
        }
        prompts.check()?;
        Ok(prompts)
    }

    /// Writes every template to `dir` as `<name>.txt`.
    pub fn write_dir(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, _) in TEMPLATE_VARIABLES {
            std::fs::write(dir.join(format!("{name}.txt")), self.get(name))?;
        }
        Ok(())
    }

    pub fn check(&self) -> Result<(), PromptError> {
        for (name, declared) in TEMPLATE_VARIABLES {
            let text = self.get(name);
            let used: Vec<&str> = PLACEHOLDER
                .captures_iter(text)
                .map(|c| c.get(1).unwrap().as_str())
                .collect();
            if let Some(unknown) = used.iter().find(|u| !declared.contains(u)) {
                return Err(PromptError::UnknownVariable {
                    template: name,
                    variable: unknown.to_string(),
                });
            }
            if let Some(missing) = declared.iter().find(|d| !used.contains(d)) {
                return Err(PromptError::MissingVariable {
                    template: name,
                    variable: missing,
                });
            }
        }
        Ok(())
    }
}

/// Substitutes `{{name}}` placeholders. Placeholders without a value are left as they are.
pub fn render(template: &str, vars: &BTreeMap<&str, String>) -> String {
    PLACEHOLDER
        .replace_all(template, |c: &regex::Captures<'_>| {
            let name = c.get(1).unwrap().as_str();
            vars.get(name)
                .cloned()
                .unwrap_or_else(|| c.get(0).unwrap().as_str().to_string())
        })
        .into_owned()
}

const DEFAULT_STAGE1_SYSTEM: &str = "You describe dashcam frames for traffic incident analysis. \
Answer with a single JSON object and nothing else.";

const DEFAULT_STAGE1_USER: &str = r#"This is frame {{frame_index}} of a {{frame_count}}-frame dashcam video. {{gaze_note}}
Describe the scene in one or two sentences, then list every road user or object that could become part of an incident.
Reply as JSON:
{"caption": "<scene description>", "hazards": [{"category": "vehicle|pedestrian|cyclist_or_scooter|animal|debris_or_other", "description": "<what it is doing>"}]}"#;

const DEFAULT_STAGE2_SYSTEM: &str = "You locate the moment a traffic incident begins in a dashcam video, \
given captions of frames sampled from it. Answer with a single JSON object and nothing else.";

const DEFAULT_STAGE2_USER: &str = r#"The video has {{frame_count}} frames, numbered from 0. Sampled frames:
{{observations}}
Which frame index best marks the onset of the hazard or accident?
Reply as JSON: {"incident_frame": <integer>, "rationale": "<one sentence>"}"#;

const DEFAULT_STAGE3_SYSTEM: &str = "You write structured incident reports from dashcam footage. \
Answer with a single JSON object and nothing else.";

const DEFAULT_STAGE3_USER: &str = r#"The attached frames are {{frame_indices}} of a {{frame_count}}-frame dashcam video, in temporal order, sampled every {{k}} frames up to {{t}} steps around frame {{incident_frame}}, where an incident is suspected to begin.
Reply as JSON with exactly these fields:
{"event_type": "hazard|accident|no_incident",
 "crash_severity": <0-4, 0 meaning no danger>,
 "ego_involved": <true|false>,
 "entity_counts": {"vehicles": <n>, "pedestrians": <n>, "cyclists_or_scooters": <n>, "animals": <n>},
 "time_to_incident_frames": <frame index of incident onset, or null>,
 "caption_before": "<what happens before the incident>",
 "caption_after": "<cause and outcome of the incident>"}"#;

const DEFAULT_ENSEMBLE_SYSTEM: &str = "You merge several candidate incident reports about the same \
dashcam video into one coherent final report. Answer with a single JSON object and nothing else.";

const DEFAULT_ENSEMBLE_USER: &str = r#"{{count}} candidate reports:
{{candidates}}
Write one final report that keeps what the candidates agree on and reads as a single coherent account.
Reply as JSON with the fields event_type, crash_severity, ego_involved, entity_counts, time_to_incident_frames, caption_before, caption_after."#;

const DEFAULT_STRICT: &str = "Your previous reply could not be parsed. Reply with exactly one JSON object \
matching the requested fields. No prose, no code fences.";

//! Deterministic fixture-driven backend for offline runs and tests.
//!
//! Fixtures are JSON files in a directory. Each file holds one entry or an
//! array of entries:
//!
//! ```json
//! {"stage": "stage1", "video_id": "v1", "frame": 9, "ordinal": 0, "text": "..."}
//! {"stage": "stage2", "video_id": "v1", "error": {"transport": "connection reset"}}
//! ```
//!
//! `frame` and `ordinal` default to `null` and `0`. A request whose key has
//! no entry fails with [`GatewayError::MissingScript`].

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use async_trait::async_trait;
use parking_lot::Mutex;
use serde::Deserialize;
use thiserror::Error;

use super::{
    ChatBackend, ChatRequest, ChatResponse, EndpointConfig, FinishReason, GatewayError, RequestTag,
};

/// (stage, video_id, anchor frame, request ordinal).
pub type ScriptKey = RequestTag;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptedReply {
    Text(String),
    Transport(String),
    Provider { status: u16, message: String },
}

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("reading fixtures in {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("fixture {path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    stage: String,
    video_id: String,
    #[serde(default)]
    frame: Option<u64>,
    #[serde(default)]
    ordinal: u32,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    error: Option<EntryError>,
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum EntryError {
    Transport(String),
    Provider { status: u16, message: String },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum EntryFile {
    Many(Vec<Entry>),
    One(Entry),
}

#[derive(Debug, Default)]
pub struct ScriptedBackend {
    entries: Mutex<HashMap<ScriptKey, ScriptedReply>>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&self, key: ScriptKey, reply: ScriptedReply) {
        self.entries.lock().insert(key, reply);
    }

    pub fn insert_text(
        &self,
        stage: &str,
        video_id: &str,
        frame: Option<u64>,
        ordinal: u32,
        text: impl Into<String>,
    ) {
        self.insert(
            RequestTag {
                stage: stage.into(),
                video_id: video_id.into(),
                frame,
                ordinal,
            },
            ScriptedReply::Text(text.into()),
        );
    }

    pub fn len(&self) -> usize {
        self.entries.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Loads every `*.json` file under `dir` (non-recursive, sorted by name).
    /// A key defined twice is an error.
    pub fn load_dir(dir: &Path) -> Result<Self, ScriptError> {
        let io = |source| ScriptError::Io {
            path: dir.to_path_buf(),
            source,
        };
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        files.sort();
        let backend = Self::new();
        for path in files {
            let text = std::fs::read_to_string(&path).map_err(|source| ScriptError::Io {
                path: path.clone(),
                source,
            })?;
            let parsed: EntryFile =
                serde_json::from_str(&text).map_err(|e| ScriptError::Invalid {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
            let entries = match parsed {
                EntryFile::Many(v) => v,
                EntryFile::One(e) => vec![e],
            };
            let mut map = backend.entries.lock();
            for e in entries {
                let key = RequestTag {
                    stage: e.stage,
                    video_id: e.video_id,
                    frame: e.frame,
                    ordinal: e.ordinal,
                };
                let reply = match (e.text, e.error) {
                    (Some(t), None) => ScriptedReply::Text(t),
                    (None, Some(EntryError::Transport(m))) => ScriptedReply::Transport(m),
                    (None, Some(EntryError::Provider { status, message })) => {
                        ScriptedReply::Provider { status, message }
                    }
                    _ => {
                        return Err(ScriptError::Invalid {
                            path: path.clone(),
                            message: format!("entry {key} needs exactly one of `text` or `error`"),
                        })
                    }
                };
                if map.insert(key.clone(), reply).is_some() {
                    return Err(ScriptError::Invalid {
                        path: path.clone(),
                        message: format!("duplicate entry {key}"),
                    });
                }
            }
        }
        Ok(backend)
    }
}

#[async_trait]
impl ChatBackend for ScriptedBackend {
    async fn send(
        &self,
        _endpoint: &EndpointConfig,
        request: &ChatRequest,
    ) -> Result<ChatResponse, GatewayError> {
        let reply = self.entries.lock().get(&request.tag).cloned();
        match reply {
            Some(ScriptedReply::Text(text)) => Ok(ChatResponse {
                text,
                finish_reason: FinishReason::Stop,
                latency: Duration::from_nanos(1),
            }),
            Some(ScriptedReply::Transport(message)) => Err(GatewayError::Transport {
                attempts: 1,
                message,
            }),
            Some(ScriptedReply::Provider { status, message }) => {
                Err(GatewayError::Provider { status, message })
            }
            None => Err(GatewayError::MissingScript(request.tag.clone())),
        }
    }
}

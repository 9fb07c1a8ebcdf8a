//! On-disk layout under the store directory:
//!
//! ```text
//! sessions/<session_id>.json         session plan
//! sessions/<session_id>.votes.jsonl  append-only vote log
//! ```
//!
//! A vote is acknowledged only after its line, newline included, has been
//! written and synced. An unterminated last line is therefore an
//! unacknowledged write cut short by a crash; it is dropped on reload.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{ScoringError, SessionPlan, VoteRecord};

fn store_err(path: &Path, e: impl std::fmt::Display) -> ScoringError {
    ScoringError::Store {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone)]
pub struct SessionStore {
    root: PathBuf,
}

impl SessionStore {
    pub fn open(root: &Path) -> Result<Self, ScoringError> {
        let dir = root.join("sessions");
        std::fs::create_dir_all(&dir).map_err(|e| store_err(&dir, e))?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    fn plan_path(&self, id: &str) -> PathBuf {
        self.root.join("sessions").join(format!("{id}.json"))
    }

    pub fn log_path(&self, id: &str) -> PathBuf {
        self.root.join("sessions").join(format!("{id}.votes.jsonl"))
    }

    /// Persists a plan. Saving the same plan again is a no-op; a different
    /// plan under an existing id is an error.
    pub fn save_plan(&self, plan: &SessionPlan) -> Result<(), ScoringError> {
        let path = self.plan_path(&plan.session_id);
        if path.exists() {
            let existing = self.load_plan(&plan.session_id)?;
            if &existing != plan {
                return Err(store_err(&path, "a different plan exists under this session id"));
            }
            return Ok(());
        }
        let tmp = path.with_extension("json.tmp");
        let body = serde_json::to_vec_pretty(plan).map_err(|e| store_err(&path, e))?;
        let mut f = File::create(&tmp).map_err(|e| store_err(&tmp, e))?;
        f.write_all(&body).map_err(|e| store_err(&tmp, e))?;
        f.sync_all().map_err(|e| store_err(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| store_err(&path, e))?;
        Ok(())
    }

    pub fn load_plan(&self, id: &str) -> Result<SessionPlan, ScoringError> {
        let path = self.plan_path(id);
        let text = std::fs::read_to_string(&path).map_err(|e| store_err(&path, e))?;
        serde_json::from_str(&text).map_err(|e| store_err(&path, e))
    }

    /// Ids of all persisted sessions, sorted.
    pub fn session_ids(&self) -> Result<Vec<String>, ScoringError> {
        let dir = self.root.join("sessions");
        let mut ids: Vec<String> = std::fs::read_dir(&dir)
            .map_err(|e| store_err(&dir, e))?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().to_string_lossy().into_owned();
                let id = name.strip_suffix(".json")?;
                (!id.contains('.')).then(|| id.to_string())
            })
            .collect();
        ids.sort();
        Ok(ids)
    }

    pub fn open_log(&self, id: &str) -> Result<(VoteLog, Vec<VoteRecord>), ScoringError> {
        VoteLog::open(&self.log_path(id))
    }
}

/// Append-only JSON-lines vote log.
#[derive(Debug)]
pub struct VoteLog {
    path: PathBuf,
    file: File,
}

impl VoteLog {
    /// Opens or creates the log and returns the votes it holds.
    pub fn open(path: &Path) -> Result<(Self, Vec<VoteRecord>), ScoringError> {
        let bytes = match std::fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(store_err(path, e)),
        };
        let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
        let mut votes = Vec::new();
        for (n, line) in bytes[..complete].split(|&b| b == b'\n').enumerate() {
            if line.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            let vote: VoteRecord = serde_json::from_slice(line)
                .map_err(|e| store_err(path, format!("line {}: {e}", n + 1)))?;
            votes.push(vote);
        }
        if complete < bytes.len() {
            tracing::warn!(
                path = %path.display(),
                bytes = bytes.len() - complete,
                "dropping unterminated trailing vote line"
            );
            let f = OpenOptions::new()
                .write(true)
                .open(path)
                .map_err(|e| store_err(path, e))?;
            f.set_len(complete as u64).map_err(|e| store_err(path, e))?;
            f.sync_all().map_err(|e| store_err(path, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| store_err(path, e))?;
        Ok((
            Self {
                path: path.to_path_buf(),
                file,
            },
            votes,
        ))
    }

    pub fn append(&mut self, vote: &VoteRecord) -> Result<(), ScoringError> {
        let mut line = serde_json::to_vec(vote).map_err(|e| store_err(&self.path, e))?;
        line.push(b'\n');
        self.file
            .write_all(&line)
            .map_err(|e| store_err(&self.path, e))?;
        self.file.sync_data().map_err(|e| store_err(&self.path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::{Choice, Orientation};

    fn vote(pair: &str) -> VoteRecord {
        VoteRecord {
            pair_id: pair.into(),
            evaluator_id: "e1".into(),
            choice: Choice::A,
            orientation: Orientation::FirstLeft,
            preferred_run: Some("run-a".into()),
            timestamp_ms: 1,
        }
    }

    #[test]
    fn torn_tail_is_dropped_and_log_stays_appendable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.votes.jsonl");
        {
            let (mut log, votes) = VoteLog::open(&path).unwrap();
            assert!(votes.is_empty());
            log.append(&vote("p1")).unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(br#"{"pair_id":"p2","evalu"#).unwrap();
        drop(f);
        let (mut log, votes) = VoteLog::open(&path).unwrap();
        assert_eq!(votes, vec![vote("p1")]);
        log.append(&vote("p3")).unwrap();
        let (_, votes) = VoteLog::open(&path).unwrap();
        assert_eq!(votes, vec![vote("p1"), vote("p3")]);
    }

    #[test]
    fn corrupt_complete_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.votes.jsonl");
        std::fs::write(&path, "garbage\n").unwrap();
        assert!(VoteLog::open(&path).is_err());
    }
}

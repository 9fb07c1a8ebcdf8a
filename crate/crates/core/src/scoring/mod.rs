//! Blind A/B scoring of two method runs by human evaluators.
//!
//! A session pairs the two runs' reports video by video. Each evaluator
//! sees every pair with a left/right orientation drawn from a seeded hash
//! of (seed, pair, evaluator). Votes are recorded on screen as A (left),
//! B (right) or Tie and translated to the preferred run at write time.
//! Run ids, labels and report provenance never appear in what evaluators
//! receive.

mod aggregate;
mod server;
mod store;

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::report::{EntityKind, EventType, IncidentReport, NOMINAL_FPS};

pub use aggregate::{aggregate, sign_test_p, PairOutcome, RunStanding, SessionResults, SIGNIFICANCE_LEVEL};
pub use server::{router, ScoringService};
pub use store::{SessionStore, VoteLog};

/// Shortest run id or label accepted; shorter strings cannot be redacted
/// from report text without mangling it.
pub const MIN_SECRET_LEN: usize = 3;

const REDACTED: &str = "[redacted]";

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("session error: {0}")]
    Session(String),
    #[error("unknown evaluator")]
    UnknownEvaluator,
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("unknown pair {0}")]
    UnknownPair(String),
    #[error("pair {0} already has a vote from this evaluator")]
    DuplicateVote(String),
    #[error("vote store {path}: {message}")]
    Store { path: String, message: String },
}

/// One method's reports, keyed by video id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRun {
    pub run_id: String,
    /// Human-readable name; hidden from evaluators.
    pub label: String,
    pub reports: BTreeMap<String, IncidentReport>,
}

impl MethodRun {
    pub fn from_reports(
        run_id: impl Into<String>,
        label: impl Into<String>,
        reports: Vec<IncidentReport>,
    ) -> Self {
        Self {
            run_id: run_id.into(),
            label: label.into(),
            reports: reports
                .into_iter()
                .map(|r| (r.video_id.clone(), r))
                .collect(),
        }
    }
}

/// On-screen choice: A is the left report, B the right one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Choice {
    A,
    B,
    Tie,
}

/// Which run an evaluator sees on the left for a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    FirstLeft,
    SecondLeft,
}

impl Orientation {
    pub fn flipped(self) -> Self {
        match self {
            Orientation::FirstLeft => Orientation::SecondLeft,
            Orientation::SecondLeft => Orientation::FirstLeft,
        }
    }

    /// Index (0 or 1) of the run shown on the left.
    pub fn left_run(self) -> usize {
        match self {
            Orientation::FirstLeft => 0,
            Orientation::SecondLeft => 1,
        }
    }
}

/// Run index preferred by an on-screen choice, `None` for a tie.
pub fn translate(choice: Choice, orientation: Orientation) -> Option<usize> {
    let left = orientation.left_run();
    match choice {
        Choice::A => Some(left),
        Choice::B => Some(1 - left),
        Choice::Tie => None,
    }
}

/// Seeded coin flip per (pair, evaluator).
pub fn orientation(seed: u64, pair_id: &str, evaluator: &str) -> Orientation {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(pair_id.as_bytes());
    h.update([0]);
    h.update(evaluator.as_bytes());
    if h.finalize()[0] & 1 == 0 {
        Orientation::FirstLeft
    } else {
        Orientation::SecondLeft
    }
}

/// One durable vote. `preferred_run` is the run id the choice maps to, or
/// `None` for a tie.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub pair_id: String,
    pub evaluator_id: String,
    pub choice: Choice,
    pub orientation: Orientation,
    pub preferred_run: Option<String>,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunInfo {
    pub run_id: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedPair {
    pub pair_id: String,
    pub video_id: String,
    /// Blinded report text of the first and second run.
    pub texts: [String; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedVideo {
    pub video_id: String,
    /// Run that has a report for the video; the other run has none.
    pub only_in: String,
}

/// A session's persisted definition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionPlan {
    pub session_id: String,
    pub seed: u64,
    pub runs: [RunInfo; 2],
    pub roster: Vec<String>,
    pub pairs: Vec<PlannedPair>,
    pub excluded: Vec<ExcludedVideo>,
}

impl SessionPlan {
    pub fn pair(&self, pair_id: &str) -> Option<&PlannedPair> {
        self.pairs.iter().find(|p| p.pair_id == pair_id)
    }

    pub fn has_evaluator(&self, evaluator: &str) -> bool {
        self.roster.iter().any(|e| e == evaluator)
    }
}

/// Plain-text rendering of a report for evaluators, without provenance.
pub fn render_report(report: &IncidentReport) -> String {
    let mut s = String::new();
    let event = match report.event_type {
        EventType::Hazard => "Hazard",
        EventType::Accident => "Accident",
        EventType::NoIncident => "No incident",
    };
    let _ = writeln!(s, "Event: {event}");
    let _ = writeln!(s, "Crash severity: {} / {}", report.crash_severity, crate::report::MAX_SEVERITY);
    let _ = writeln!(
        s,
        "Ego vehicle involved: {}",
        if report.ego_involved { "yes" } else { "no" }
    );
    let names = [
        (EntityKind::Vehicle, "vehicles"),
        (EntityKind::Pedestrian, "pedestrians"),
        (EntityKind::CyclistOrScooter, "cyclists or scooters"),
        (EntityKind::Animal, "animals"),
    ];
    let counts: Vec<String> = names
        .iter()
        .map(|(k, name)| format!("{} {name}", report.entity_counts.get(k).copied().unwrap_or(0)))
        .collect();
    let _ = writeln!(s, "Others involved: {}", counts.join(", "));
    match report.time_to_incident_frames {
        Some(f) => {
            let _ = writeln!(s, "Incident onset: frame {f} ({:.2} s)", f as f64 / NOMINAL_FPS);
        }
        None => {
            let _ = writeln!(s, "Incident onset: none");
        }
    }
    let _ = writeln!(s, "Before: {}", report.caption_before.trim());
    let _ = write!(s, "After: {}", report.caption_after.trim());
    s
}

fn redact(text: &str, secrets: &[String]) -> String {
    let mut out = text.to_string();
    for secret in secrets {
        if !secret.is_empty() {
            out = out.replace(secret.as_str(), REDACTED);
        }
    }
    out
}

/// Strings that must never reach an evaluator, longest first.
fn secrets(runs: &[MethodRun; 2]) -> Vec<String> {
    let mut all: Vec<String> = runs
        .iter()
        .flat_map(|r| {
            [r.run_id.clone(), r.label.clone()]
                .into_iter()
                .chain(r.reports.values().map(|rep| rep.provenance.clone()))
        })
        .filter(|s| !s.trim().is_empty())
        .collect();
    all.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
    all.dedup();
    all
}

/// Builds the pair plan: one pair per video both runs cover, ordered by
/// video id. Videos covered by only one run are listed as excluded.
pub fn create_session(
    runs: [MethodRun; 2],
    roster: Vec<String>,
    seed: u64,
) -> Result<SessionPlan, ScoringError> {
    let err = |m: String| Err(ScoringError::Session(m));
    for r in &runs {
        if r.run_id.chars().count() < MIN_SECRET_LEN || r.label.chars().count() < MIN_SECRET_LEN {
            return err(format!(
                "run ids and labels need at least {MIN_SECRET_LEN} characters"
            ));
        }
    }
    if runs[0].run_id == runs[1].run_id {
        return err("the two runs must have different run ids".into());
    }
    let mut roster_seen = HashSet::new();
    let roster: Vec<String> = roster
        .into_iter()
        .map(|e| e.trim().to_string())
        .filter(|e| !e.is_empty())
        .filter(|e| roster_seen.insert(e.clone()))
        .collect();
    if roster.is_empty() {
        return err("evaluator roster is empty".into());
    }

    let hidden = secrets(&runs);
    let mut pairs = Vec::new();
    let mut excluded = Vec::new();
    for (video_id, first) in &runs[0].reports {
        match runs[1].reports.get(video_id) {
            Some(second) => {
                let texts = [
                    redact(&render_report(first), &hidden),
                    redact(&render_report(second), &hidden),
                ];
                pairs.push(PlannedPair {
                    pair_id: format!("p{}", pairs.len() + 1),
                    video_id: video_id.clone(),
                    texts,
                });
            }
            None => excluded.push(ExcludedVideo {
                video_id: video_id.clone(),
                only_in: runs[0].run_id.clone(),
            }),
        }
    }
    for video_id in runs[1].reports.keys() {
        if !runs[0].reports.contains_key(video_id) {
            excluded.push(ExcludedVideo {
                video_id: video_id.clone(),
                only_in: runs[1].run_id.clone(),
            });
        }
    }
    excluded.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    if pairs.is_empty() {
        return err("the runs share no videos".into());
    }

    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for r in &runs {
        h.update(r.run_id.as_bytes());
        h.update([0]);
        h.update(r.label.as_bytes());
        h.update([0]);
    }
    for e in &roster {
        h.update(e.as_bytes());
        h.update([0]);
    }
    for p in &pairs {
        for field in [&p.video_id, &p.texts[0], &p.texts[1]] {
            h.update(field.as_bytes());
            h.update([0]);
        }
    }
    let session_id = hex::encode(&h.finalize()[..8]);

    let [a, b] = runs;
    Ok(SessionPlan {
        session_id,
        seed,
        runs: [
            RunInfo {
                run_id: a.run_id,
                label: a.label,
            },
            RunInfo {
                run_id: b.run_id,
                label: b.label,
            },
        ],
        roster,
        pairs,
        excluded,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub done: usize,
    pub total: usize,
}

/// What an evaluator is shown for one pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairAssignment {
    pub pair_id: String,
    pub video_id: String,
    pub left_text: String,
    pub right_text: String,
    pub progress: Progress,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum NextPair {
    Pair(PairAssignment),
    Done { progress: Progress },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteAck {
    pub pair_id: String,
    pub choice: Choice,
    pub progress: Progress,
}

/// A session's plan with its votes, backed by an append-only log.
pub struct Session {
    pub plan: SessionPlan,
    votes: Vec<VoteRecord>,
    voted: HashSet<(String, String)>,
    log: Option<VoteLog>,
}

impl Session {
    /// In-memory session with no durable log.
    pub fn in_memory(plan: SessionPlan) -> Self {
        Self {
            plan,
            votes: Vec::new(),
            voted: HashSet::new(),
            log: None,
        }
    }

    pub fn with_log(plan: SessionPlan, log: VoteLog, votes: Vec<VoteRecord>) -> Self {
        let voted = votes
            .iter()
            .map(|v| (v.pair_id.clone(), v.evaluator_id.clone()))
            .collect();
        Self {
            plan,
            votes,
            voted,
            log: Some(log),
        }
    }

    pub fn votes(&self) -> &[VoteRecord] {
        &self.votes
    }

    fn progress(&self, evaluator: &str) -> Progress {
        let done = self
            .plan
            .pairs
            .iter()
            .filter(|p| self.voted.contains(&(p.pair_id.clone(), evaluator.to_string())))
            .count();
        Progress {
            done,
            total: self.plan.pairs.len(),
        }
    }

    /// Lowest-numbered pair the evaluator has not voted on.
    pub fn next_pair(&self, evaluator: &str) -> Result<NextPair, ScoringError> {
        if !self.plan.has_evaluator(evaluator) {
            return Err(ScoringError::UnknownEvaluator);
        }
        let progress = self.progress(evaluator);
        let next = self
            .plan
            .pairs
            .iter()
            .find(|p| !self.voted.contains(&(p.pair_id.clone(), evaluator.to_string())));
        Ok(match next {
            None => NextPair::Done { progress },
            Some(p) => {
                let left = orientation(self.plan.seed, &p.pair_id, evaluator).left_run();
                NextPair::Pair(PairAssignment {
                    pair_id: p.pair_id.clone(),
                    video_id: p.video_id.clone(),
                    left_text: p.texts[left].clone(),
                    right_text: p.texts[1 - left].clone(),
                    progress,
                })
            }
        })
    }

    /// Records a vote durably. The duplicate check and the append happen
    /// under the caller's exclusive borrow.
    pub fn submit_vote(
        &mut self,
        evaluator: &str,
        pair_id: &str,
        choice: Choice,
        timestamp_ms: u64,
    ) -> Result<VoteAck, ScoringError> {
        if !self.plan.has_evaluator(evaluator) {
            return Err(ScoringError::UnknownEvaluator);
        }
        if self.plan.pair(pair_id).is_none() {
            return Err(ScoringError::UnknownPair(pair_id.to_string()));
        }
        let key = (pair_id.to_string(), evaluator.to_string());
        if self.voted.contains(&key) {
            return Err(ScoringError::DuplicateVote(pair_id.to_string()));
        }
        let orientation = orientation(self.plan.seed, pair_id, evaluator);
        let record = VoteRecord {
            pair_id: pair_id.to_string(),
            evaluator_id: evaluator.to_string(),
            choice,
            orientation,
            preferred_run: translate(choice, orientation).map(|i| self.plan.runs[i].run_id.clone()),
            timestamp_ms,
        };
        if let Some(log) = self.log.as_mut() {
            log.append(&record)?;
        }
        self.voted.insert(key);
        self.votes.push(record);
        Ok(VoteAck {
            pair_id: pair_id.to_string(),
            choice,
            progress: self.progress(evaluator),
        })
    }

    pub fn results(&self) -> SessionResults {
        aggregate(&self.plan, &self.votes)
    }
}

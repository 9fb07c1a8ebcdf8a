//! Command-line entry points: `pipeline`, `ensemble`, `evaluate`, `serve`.
//!
//! Exit codes: 0 success, 1 a hard failure (listed on stderr), 2 a
//! configuration or startup error.

use std::collections::{BTreeMap, BTreeSet};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::ExperimentConfig;
use crate::ensemble::{EnsembleSource, Ensembler};
use crate::gateway::{ChatBackend, Gateway, HttpBackend, ScriptedBackend};
use crate::metrics::{score_corpus, Corpus, CorpusItem, ExternalScores, MetricName, MetricReport};
use crate::pipeline::{GridFailure, Pipeline, StagePrompts, StageTimings};
use crate::report::{
    read_reports_jsonl, write_reports_csv, write_reports_jsonl, DetectionResult, IncidentReport,
    NOMINAL_FPS,
};
use crate::scoring::{router, MethodRun, ScoringService};
use crate::video::{open_video, sample_reference_frames, Fps, VIDEO_EXTENSIONS};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Failure(_) => 1,
            CliError::Config(_) => 2,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "incident-report", version, about = "Dashcam incident reports from vision-language models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the three stages over every video in a directory.
    Pipeline(PipelineArgs),
    /// Merge each video's candidates into one final report.
    Ensemble(EnsembleArgs),
    /// Score a submission against reference reports.
    Evaluate(EvaluateArgs),
    /// Serve the blind A/B scoring API for two runs.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub videos: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub gaze_dir: Option<PathBuf>,
    /// Directory of scripted model responses; replaces the HTTP endpoints.
    #[arg(long)]
    pub scripted: Option<PathBuf>,
    /// Videos processed concurrently.
    #[arg(long, default_value_t = 4)]
    pub parallel: usize,
}

#[derive(Debug, Clone, Args)]
pub struct EnsembleArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Submission file (JSON lines); a CSV export is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Scripted responses; defaults to the directory recorded in the manifest.
    #[arg(long)]
    pub scripted: Option<PathBuf>,
    #[arg(long)]
    pub parallel: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub submission: PathBuf,
    /// Reference reports (JSON lines); several lines per video give several references.
    #[arg(long)]
    pub references: PathBuf,
    /// Externally computed scores: `{item_id: spice}` or `{"metrics": {...}}`.
    #[arg(long)]
    pub spice: Option<PathBuf>,
    /// Write the full metric report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    /// Vote store directory.
    #[arg(long)]
    pub store: PathBuf,
    /// `label=submission.jsonl`, given exactly twice.
    #[arg(long = "run", value_parser = parse_run_spec)]
    pub runs: Vec<(String, PathBuf)>,
    /// Evaluator ids, one per line.
    #[arg(long)]
    pub roster: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Bearer token for session creation and results; random when omitted.
    #[arg(long, env = "INCIDENT_REPORT_ADMIN_TOKEN")]
    pub admin_token: Option<String>,
    /// Directory with the evaluator UI bundle.
    #[arg(long)]
    pub ui: Option<PathBuf>,
}

fn parse_run_spec(s: &str) -> Result<(String, PathBuf), String> {
    let (label, path) = s
        .split_once('=')
        .ok_or_else(|| format!("expected label=path, got {s:?}"))?;
    if label.is_empty() || path.is_empty() {
        return Err(format!("expected label=path, got {s:?}"));
    }
    Ok((label.to_string(), PathBuf::from(path)))
}

/// Per-video record in a run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestVideo {
    pub video_id: String,
    pub path: PathBuf,
    pub frame_count: u64,
    pub fps: Fps,
    pub reference_frames: Vec<u64>,
    pub detection: DetectionResult,
    /// Candidate file, relative to the manifest's directory.
    pub candidates_path: PathBuf,
    pub candidates: Vec<String>,
    pub grid_failures: Vec<GridFailure>,
    /// Model calls made for this video, re-prompts included.
    pub model_calls: usize,
    pub reprompts: usize,
    pub timings: StageTimings,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoFailure {
    pub video_id: String,
    pub path: PathBuf,
    pub error: String,
}

/// Everything needed to re-run a pipeline invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub prompts: StagePrompts,
    pub videos_dir: PathBuf,
    pub gaze_dir: Option<PathBuf>,
    pub scripted: Option<PathBuf>,
    pub parallel: usize,
    pub videos: Vec<ManifestVideo>,
    pub failures: Vec<VideoFailure>,
    pub wall_clock_ms: u64,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

fn backend(scripted: Option<&Path>) -> Result<Arc<dyn ChatBackend>, CliError> {
    Ok(match scripted {
        Some(dir) => {
            let b = ScriptedBackend::load_dir(dir).map_err(config_err)?;
            tracing::info!(dir = %dir.display(), entries = b.len(), "using scripted responses");
            Arc::new(b)
        }
        None => Arc::new(HttpBackend::new()),
    })
}

fn list_videos(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| config_err(format!("reading video directory {}: {e}", dir.display())))?;
    let mut videos: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| VIDEO_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    videos.sort();
    let mut stems = BTreeSet::new();
    for v in &videos {
        let stem = v.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        if !stems.insert(stem.clone()) {
            return Err(config_err(format!("two videos share the id {stem:?} in {}", dir.display())));
        }
    }
    Ok(videos)
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::Failure(format!("creating {}: {e}", parent.display())))?;
    }
    std::fs::write(path, contents)
        .map_err(|e| CliError::Failure(format!("writing {}: {e}", path.display())))
}

/// Runs the pipeline over every video in `args.videos`, writing
/// `<out>/candidates/<video>.jsonl` and `<out>/manifest.json`.
pub async fn cmd_pipeline(args: &PipelineArgs) -> Result<RunManifest, CliError> {
    let started = Instant::now();
    let config = ExperimentConfig::load(&args.config).map_err(config_err)?;
    let prompts = config.load_prompts().map_err(config_err)?;
    let videos = list_videos(&args.videos)?;
    let gateway = Arc::new(Gateway::new(backend(args.scripted.as_deref())?));
    let pipeline = Arc::new(
        Pipeline::new(gateway.clone(), config.clone(), prompts.clone())
            .with_gaze_dir(args.gaze_dir.clone()),
    );

    let outcomes: Vec<_> = stream::iter(videos)
        .map(|path| {
            let pipeline = pipeline.clone();
            async move {
                let decoder = pipeline.config.decoder.clone();
                let p = path.clone();
                let video = tokio::task::spawn_blocking(move || open_video(&p, &decoder))
                    .await
                    .expect("video open task panicked");
                let outcome = match video {
                    Ok(v) => pipeline.run(&v).await.map(|o| (v, o)).map_err(|e| e.to_string()),
                    Err(e) => Err(e.to_string()),
                };
                (path, outcome)
            }
        })
        .buffer_unordered(args.parallel.max(1))
        .collect()
        .await;

    let calls = gateway.call_log();
    let mut manifest_videos = Vec::new();
    let mut failures = Vec::new();
    for (path, outcome) in outcomes {
        let video_id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        match outcome {
            Ok((video, out)) => {
                let rel = PathBuf::from("candidates").join(format!("{video_id}.jsonl"));
                write_file(&args.out.join(&rel), write_reports_jsonl(&out.candidates))?;
                manifest_videos.push(ManifestVideo {
                    video_id: out.video_id.clone(),
                    path: absolute(&path),
                    frame_count: out.frame_count,
                    fps: video.meta.fps,
                    reference_frames: sample_reference_frames(out.frame_count, config.stage1.k)
                        .unwrap_or_default(),
                    detection: out.detection,
                    candidates_path: rel,
                    candidates: out.candidates.iter().map(|c| c.provenance.clone()).collect(),
                    grid_failures: out.failures,
                    model_calls: calls.iter().filter(|c| c.tag.video_id == out.video_id).count(),
                    reprompts: calls
                        .iter()
                        .filter(|c| c.tag.video_id == out.video_id && c.tag.ordinal > 0)
                        .count(),
                    timings: out.timings,
                });
            }
            Err(error) => {
                tracing::error!(video = %path.display(), %error, "video failed");
                failures.push(VideoFailure {
                    video_id,
                    path: absolute(&path),
                    error,
                });
            }
        }
    }
    manifest_videos.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    failures.sort_by(|a, b| a.video_id.cmp(&b.video_id));

    let manifest = RunManifest {
        config,
        prompts,
        videos_dir: absolute(&args.videos),
        gaze_dir: args.gaze_dir.as_deref().map(absolute),
        scripted: args.scripted.as_deref().map(absolute),
        parallel: args.parallel,
        videos: manifest_videos,
        failures,
        wall_clock_ms: started.elapsed().as_millis() as u64,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&args.out.join(MANIFEST_FILE), json + "\n")?;

    if !manifest.failures.is_empty() {
        let list: Vec<String> = manifest
            .failures
            .iter()
            .map(|f| format!("  {}: {}", f.video_id, f.error))
            .collect();
        return Err(CliError::Failure(format!(
            "{} video(s) failed:\n{}",
            manifest.failures.len(),
            list.join("\n")
        )));
    }
    Ok(manifest)
}

/// Per-video ensembling summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub video_id: String,
    pub source: EnsembleSource,
    pub overrides: Vec<String>,
}

/// Ensembles every video of a manifest and writes the submission (JSON
/// lines sorted by video id) plus a CSV export next to it.
pub async fn cmd_ensemble(args: &EnsembleArgs) -> Result<Vec<EnsembleSummary>, CliError> {
    let text = std::fs::read_to_string(&args.manifest)
        .map_err(|e| config_err(format!("reading manifest {}: {e}", args.manifest.display())))?;
    let manifest: RunManifest = serde_json::from_str(&text)
        .map_err(|e| config_err(format!("parsing manifest {}: {e}", args.manifest.display())))?;
    if manifest.videos.is_empty() {
        return Err(CliError::Config(format!(
            "manifest {} lists no videos",
            args.manifest.display()
        )));
    }
    let base = args.manifest.parent().unwrap_or(Path::new("."));
    let scripted = args.scripted.clone().or(manifest.scripted.clone());
    let gateway = Gateway::new(backend(scripted.as_deref())?);
    let ensembler = Ensembler {
        gateway: &gateway,
        config: &manifest.config.ensemble,
        prompts: &manifest.prompts,
    };

    let mut inputs = Vec::new();
    let mut failures: Vec<String> = Vec::new();
    for v in &manifest.videos {
        let path = base.join(&v.candidates_path);
        match std::fs::read_to_string(&path)
            .map_err(|e| e.to_string())
            .and_then(|t| read_reports_jsonl(&t).map_err(|e| e.to_string()))
        {
            Ok(c) if c.is_empty() => failures.push(format!("{}: no candidates", v.video_id)),
            Ok(c) => inputs.push((v.video_id.clone(), c)),
            Err(e) => failures.push(format!("{}: reading {}: {e}", v.video_id, path.display())),
        }
    }
    for f in &manifest.failures {
        failures.push(format!("{}: pipeline failed: {}", f.video_id, f.error));
    }

    let parallel = args.parallel.unwrap_or(manifest.parallel).max(1);
    let ensembler = &ensembler;
    let results: Vec<_> = stream::iter(inputs)
        .map(|(video_id, candidates)| async move {
            (video_id, ensembler.ensemble(&candidates).await)
        })
        .buffer_unordered(parallel)
        .collect()
        .await;

    let mut finals: Vec<IncidentReport> = Vec::new();
    let mut summaries = Vec::new();
    for (video_id, result) in results {
        match result {
            Ok(outcome) => {
                summaries.push(EnsembleSummary {
                    video_id,
                    source: outcome.source,
                    overrides: outcome.overrides,
                });
                finals.push(outcome.report);
            }
            Err(e) => failures.push(format!("{video_id}: {e}")),
        }
    }
    finals.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    summaries.sort_by(|a, b| a.video_id.cmp(&b.video_id));

    write_file(&args.out, write_reports_jsonl(&finals))?;
    let csv = write_reports_csv(&finals, NOMINAL_FPS).map_err(|e| CliError::Failure(e.to_string()))?;
    write_file(&args.out.with_extension("csv"), csv)?;

    if !failures.is_empty() {
        failures.sort();
        return Err(CliError::Failure(format!(
            "no final report for {} video(s):\n  {}",
            failures.len(),
            failures.join("\n  ")
        )));
    }
    Ok(summaries)
}

/// Metric reports for the three caption corpora.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub before: MetricReport,
    pub after: MetricReport,
    /// `caption_before + " " + caption_after`; the leaderboard row.
    pub combined: MetricReport,
}

fn fmt_score(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
}

impl EvaluationReport {
    /// Plain-text table, one row per corpus.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<10} {:>8} {:>8} {:>8} {:>8}\n",
            "corpus", "SPICE", "METEOR", "CIDEr-D", "final"
        );
        for (name, r) in [("before", &self.before), ("after", &self.after), ("combined", &self.combined)] {
            out.push_str(&format!(
                "{:<10} {:>8} {:>8} {:>8} {:>8}\n",
                name,
                fmt_score(r.corpus(MetricName::Spice)),
                fmt_score(r.corpus(MetricName::Meteor)),
                fmt_score(r.corpus(MetricName::CiderD)),
                fmt_score(r.final_score),
            ));
        }
        out
    }
}

/// Builds the before/after/combined corpora, scores them and prints the table.
pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<EvaluationReport, CliError> {
    let read = |p: &Path, what: &str| -> Result<Vec<IncidentReport>, CliError> {
        let text = std::fs::read_to_string(p)
            .map_err(|e| config_err(format!("reading {what} {}: {e}", p.display())))?;
        read_reports_jsonl(&text).map_err(|e| config_err(format!("{what} {}: {e}", p.display())))
    };
    let submission = read(&args.submission, "submission")?;
    let references = read(&args.references, "references")?;

    let mut refs: BTreeMap<&str, Vec<&IncidentReport>> = BTreeMap::new();
    for r in &references {
        refs.entry(r.video_id.as_str()).or_default().push(r);
    }
    let mut seen = BTreeSet::new();
    for s in &submission {
        if !seen.insert(s.video_id.as_str()) {
            return Err(CliError::Failure(format!(
                "submission has more than one report for {}",
                s.video_id
            )));
        }
    }
    let sub_ids: BTreeSet<&str> = submission.iter().map(|s| s.video_id.as_str()).collect();
    let ref_ids: BTreeSet<&str> = refs.keys().copied().collect();
    let orphans: Vec<String> = sub_ids
        .difference(&ref_ids)
        .map(|id| format!("{id} (no reference)"))
        .chain(ref_ids.difference(&sub_ids).map(|id| format!("{id} (not in submission)")))
        .collect();
    if !orphans.is_empty() {
        return Err(CliError::Failure(format!(
            "submission and references disagree on {} video(s):\n  {}",
            orphans.len(),
            orphans.join("\n  ")
        )));
    }

    let corpus = |f: &dyn Fn(&IncidentReport) -> String| -> Result<Corpus, CliError> {
        let items = submission
            .iter()
            .map(|s| CorpusItem {
                item_id: s.video_id.clone(),
                candidate: f(s),
                references: refs[s.video_id.as_str()].iter().map(|r| f(r)).collect(),
            })
            .collect();
        Corpus::new(items).map_err(|e| CliError::Failure(e.to_string()))
    };
    let before = corpus(&|r| r.caption_before.clone())?;
    let after = corpus(&|r| r.caption_after.clone())?;
    let combined = corpus(&|r| format!("{} {}", r.caption_before, r.caption_after))?;

    let mut combined_report = score_corpus(&combined, None);
    if let Some(path) = &args.spice {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("reading {}: {e}", path.display())))?;
        let external = ExternalScores::parse(&text).map_err(config_err)?;
        let ids: Vec<String> = combined.items().iter().map(|i| i.item_id.clone()).collect();
        for (metric, values) in &external.per_metric {
            let missing: Vec<&String> = ids.iter().filter(|id| !values.contains_key(*id)).collect();
            if !missing.is_empty() {
                return Err(CliError::Failure(format!(
                    "{metric} sidecar lacks {} item(s), e.g. {}",
                    missing.len(),
                    missing[0]
                )));
            }
        }
        combined_report = external.apply(&combined_report, &ids);
    }
    let report = EvaluationReport {
        before: score_corpus(&before, None),
        after: score_corpus(&after, None),
        combined: combined_report,
    };
    print!("{}", report.table());
    if let Some(out) = &args.out {
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        write_file(out, json + "\n")?;
    }
    Ok(report)
}

fn random_token() -> String {
    let mut h = Sha256::new();
    let now = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .unwrap_or_default();
    h.update(now.as_nanos().to_le_bytes());
    h.update(std::process::id().to_le_bytes());
    h.update((&h as *const _ as usize).to_le_bytes());
    hex::encode(&h.finalize()[..16])
}

fn run_id_for(label: &str, contents: &str) -> String {
    let mut h = Sha256::new();
    h.update(label.as_bytes());
    h.update([0]);
    h.update(contents.as_bytes());
    format!("run-{}", hex::encode(&h.finalize()[..6]))
}

/// Loads the two runs, creates (or reopens) their session and serves the
/// API until SIGTERM or Ctrl-C.
pub async fn cmd_serve(args: &ServeArgs) -> Result<(), CliError> {
    if args.runs.len() != 2 {
        return Err(CliError::Config(format!(
            "--run must be given exactly twice, got {}",
            args.runs.len()
        )));
    }
    let mut runs = Vec::new();
    for (label, path) in &args.runs {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("reading run {label} ({}): {e}", path.display())))?;
        let reports = read_reports_jsonl(&text).map_err(config_err)?;
        runs.push(MethodRun::from_reports(run_id_for(label, &text), label.clone(), reports));
    }
    let roster_text = std::fs::read_to_string(&args.roster)
        .map_err(|e| config_err(format!("reading roster {}: {e}", args.roster.display())))?;
    let roster: Vec<String> = roster_text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect();

    let admin_token = args.admin_token.clone().unwrap_or_else(random_token);
    let service = Arc::new(ScoringService::open(&args.store, admin_token.clone()).map_err(config_err)?);
    let runs: [MethodRun; 2] = runs.try_into().expect("two runs");
    let created = service.create(runs, roster, args.seed).map_err(config_err)?;
    for ex in &created.excluded {
        tracing::warn!(video_id = %ex.video_id, only_in = %ex.only_in, "video excluded: missing from one run");
    }

    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .map_err(|e| config_err(format!("bad listen address: {e}")))?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| config_err(format!("cannot listen on {addr}: {e}")))?;
    let local = listener.local_addr().map_err(config_err)?;
    println!("listening on http://{local}");
    println!("session {} ({} pairs, {} excluded)", created.session_id, created.pairs, created.excluded.len());
    if args.admin_token.is_none() {
        println!("admin token {admin_token}");
    }

    let app = router(service, args.ui.as_deref());
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown_signal())
        .await
        .map_err(|e| CliError::Failure(format!("server error: {e}")))?;
    tracing::info!("shut down");
    Ok(())
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}

/// Runs a parsed command line and returns the process exit code.
pub async fn run(cli: Cli) -> u8 {
    let result = match &cli.command {
        Command::Pipeline(a) => cmd_pipeline(a).await.map(|m| {
            println!(
                "{} video(s), {} candidate(s), manifest {}",
                m.videos.len(),
                m.videos.iter().map(|v| v.candidates.len()).sum::<usize>(),
                a.out.join(MANIFEST_FILE).display()
            );
        }),
        Command::Ensemble(a) => cmd_ensemble(a).await.map(|s| {
            println!("{} final report(s) written to {}", s.len(), a.out.display());
        }),
        Command::Evaluate(a) => cmd_evaluate(a).map(|_| ()),
        Command::Serve(a) => cmd_serve(a).await,
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

//! The `incident-report` binary end to end on the scripted fixture corpus.

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use incident_report::cli::RunManifest;
use incident_report::pipeline::StagePrompts;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/e2e")
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_incident-report"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn pipeline(videos: &Path, config: &Path, out: &Path) -> Output {
    let scripted = fixtures().join("scripted");
    run(&["pipeline", "--videos", s(videos), "--config", s(config), "--out", s(out), "--scripted", s(&scripted), "--parallel", "2"])
}

fn manifest(out: &Path) -> RunManifest {
    serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn pipeline_then_ensemble_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let mut submissions = Vec::new();
    for round in 0..2 {
        let out = tmp.path().join(format!("run{round}"));
        let o = pipeline(&fixtures().join("videos"), &fixtures().join("config.toml"), &out);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let m = manifest(&out);
        assert_eq!(m.videos.len(), 3);
        assert_eq!(m.videos.iter().map(|v| v.candidates.len()).sum::<usize>(), 4 + 3 + 4);
        for v in &m.videos {
            assert_eq!(v.model_calls, v.reference_frames.len() + 1 + 4 + v.reprompts, "{}", v.video_id);
        }

        let sub = tmp.path().join(format!("sub{round}.jsonl"));
        let o = run(&["ensemble", "--manifest", s(&out.join("manifest.json")), "--out", s(&sub)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        submissions.push((std::fs::read(&sub).unwrap(), std::fs::read(sub.with_extension("csv")).unwrap()));
    }
    assert_eq!(submissions[0], submissions[1]);
    let text = String::from_utf8(submissions[0].0.clone()).unwrap();
    let ids: Vec<&str> = text.lines().map(|l| l.split('"').nth(3).unwrap()).collect();
    assert_eq!(ids, ["alpha", "bravo", "charlie"]);
    let csv = String::from_utf8(submissions[0].1.clone()).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("video_id,event_type,crash_severity"));
}

#[test]
fn single_candidate_video_passes_through() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("one.toml");
    let base = std::fs::read_to_string(fixtures().join("config.toml")).unwrap();
    std::fs::write(&cfg, base.replace("k = [2, 5]", "k = [2]").replace("t = [1, 2]", "t = [1]")).unwrap();
    let videos = tmp.path().join("videos");
    std::fs::create_dir(&videos).unwrap();
    std::fs::copy(fixtures().join("videos/alpha.y4m"), videos.join("alpha.y4m")).unwrap();
    let out = tmp.path().join("out");
    assert!(pipeline(&videos, &cfg, &out).status.success());
    let sub = tmp.path().join("sub.jsonl");
    let o = run(&["ensemble", "--manifest", s(&out.join("manifest.json")), "--out", s(&sub)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let final_report = std::fs::read_to_string(&sub).unwrap();
    let candidate = std::fs::read_to_string(out.join("candidates/alpha.jsonl")).unwrap();
    assert_eq!(final_report, candidate);
}

#[test]
fn missing_prompt_file_exits_2_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let prompts = tmp.path().join("prompts");
    StagePrompts::default().write_dir(&prompts).unwrap();
    std::fs::remove_file(prompts.join("stage2_user.txt")).unwrap();
    let cfg = tmp.path().join("cfg.toml");
    let base = std::fs::read_to_string(fixtures().join("config.toml")).unwrap();
    std::fs::write(&cfg, format!("{base}\n[prompts]\ndir = \"prompts\"\n")).unwrap();
    let o = pipeline(&fixtures().join("videos"), &cfg, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("stage2_user.txt"));
}

#[test]
fn bad_config_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.toml");
    std::fs::write(&cfg, "[stage3]\nk = []\n").unwrap();
    let o = pipeline(&fixtures().join("videos"), &cfg, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn colliding_video_ids_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let videos = tmp.path().join("videos");
    std::fs::create_dir(&videos).unwrap();
    std::fs::copy(fixtures().join("videos/alpha.y4m"), videos.join("alpha.y4m")).unwrap();
    std::fs::copy(fixtures().join("videos/alpha.y4m"), videos.join("alpha.mp4")).unwrap();
    let o = pipeline(&videos, &fixtures().join("config.toml"), &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("\"alpha\""));
}

#[test]
fn undecodable_video_exits_1_and_keeps_other_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let videos = tmp.path().join("videos");
    std::fs::create_dir(&videos).unwrap();
    std::fs::copy(fixtures().join("videos/alpha.y4m"), videos.join("alpha.y4m")).unwrap();
    std::fs::write(videos.join("broken.y4m"), b"YUV4MPEG2 W32 H24 F30:1 C420jpeg\nFRAME\nshort").unwrap();
    let out = tmp.path().join("out");
    let o = pipeline(&videos, &fixtures().join("config.toml"), &out);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("broken"));
    let m = manifest(&out);
    assert_eq!(m.videos.len(), 1);
    assert_eq!(m.failures.len(), 1);
    assert_eq!(m.failures[0].video_id, "broken");
    assert_eq!(std::fs::read_to_string(out.join("candidates/alpha.jsonl")).unwrap().lines().count(), 4);
}

#[test]
fn empty_manifest_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let videos = tmp.path().join("none");
    std::fs::create_dir(&videos).unwrap();
    let out = tmp.path().join("out");
    assert!(pipeline(&videos, &fixtures().join("config.toml"), &out).status.success());
    let o = run(&["ensemble", "--manifest", s(&out.join("manifest.json")), "--out", s(&tmp.path().join("sub.jsonl"))]);
    assert_eq!(o.status.code(), Some(2));
}

fn submission(tmp: &Path) -> PathBuf {
    let out = tmp.join("out");
    assert!(pipeline(&fixtures().join("videos"), &fixtures().join("config.toml"), &out).status.success());
    let sub = tmp.join("sub.jsonl");
    assert!(run(&["ensemble", "--manifest", s(&out.join("manifest.json")), "--out", s(&sub)]).status.success());
    sub
}

#[test]
fn evaluate_prints_final_only_with_all_three_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let sub = submission(tmp.path());
    let refs = fixtures().join("references.jsonl");

    let o = run(&["evaluate", "--submission", s(&sub), "--references", s(&refs)]);
    assert!(o.status.success());
    let table = String::from_utf8(o.stdout).unwrap();
    let combined = table.lines().find(|l| l.starts_with("combined")).unwrap();
    assert!(combined.trim_end().ends_with("n/a"), "{table}");

    let sidecar = fixtures().join("sidecar_row3.json");
    let report = tmp.path().join("metrics.json");
    let o = run(&["evaluate", "--submission", s(&sub), "--references", s(&refs), "--spice", s(&sidecar), "--out", s(&report)]);
    assert!(o.status.success());
    let table = String::from_utf8(o.stdout).unwrap();
    let combined = table.lines().find(|l| l.starts_with("combined")).unwrap();
    assert!(combined.trim_end().ends_with("0.1498"), "{table}");
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["combined"]["final_score"], 0.1498);
}

#[test]
fn evaluate_orphans_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let sub = submission(tmp.path());
    let refs = tmp.path().join("refs.jsonl");
    let text = std::fs::read_to_string(fixtures().join("references.jsonl")).unwrap();
    let kept: String = text.lines().filter(|l| !l.contains("\"charlie\"")).map(|l| format!("{l}\n")).collect();
    std::fs::write(&refs, kept).unwrap();
    let o = run(&["evaluate", "--submission", s(&sub), "--references", s(&refs)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("charlie"));
}

fn free_port() -> u16 {
    std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

#[test]
fn serve_port_busy_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let sub = submission(tmp.path());
    let holder = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = holder.local_addr().unwrap().port().to_string();
    let roster = fixtures().join("roster.txt");
    let o = run(&[
        "serve", "--store", s(&tmp.path().join("store")),
        "--run", &format!("grid={}", s(&sub)), "--run", &format!("other={}", s(&sub)),
        "--roster", s(&roster), "--port", &port, "--admin-token", "tok-123",
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[cfg(unix)]
#[test]
fn serve_answers_and_stops_cleanly_on_sigterm() {
    let tmp = tempfile::tempdir().unwrap();
    let sub = submission(tmp.path());
    let partial = tmp.path().join("partial.jsonl");
    let first_two: String = std::fs::read_to_string(&sub).unwrap().lines().take(2).map(|l| format!("{l}\n")).collect();
    std::fs::write(&partial, first_two).unwrap();
    let port = free_port();
    let roster = fixtures().join("roster.txt");
    let mut child = bin()
        .args([
            "serve", "--store", s(&tmp.path().join("store")),
            "--run", &format!("ensembled={}", s(&sub)), "--run", &format!("partial={}", s(&partial)),
            "--roster", s(&roster), "--port", &port.to_string(), "--admin-token", "tok-123",
        ])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();

    let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
    let listening = lines.next().unwrap().unwrap();
    assert!(listening.contains(&port.to_string()), "{listening}");
    let session_line = lines.next().unwrap().unwrap();
    let sid = session_line.split_whitespace().nth(1).unwrap().to_string();
    assert!(session_line.contains("1 excluded"), "{session_line}");

    let rt = tokio::runtime::Runtime::new().unwrap();
    let client = reqwest::Client::new();
    let base = format!("http://127.0.0.1:{port}");
    let next: serde_json::Value = rt.block_on(async {
        let deadline = Instant::now() + Duration::from_secs(10);
        loop {
            match client.get(format!("{base}/sessions/{sid}/next?evaluator=eval-ann")).send().await {
                Ok(r) => break r.json().await.unwrap(),
                Err(_) if Instant::now() < deadline => tokio::time::sleep(Duration::from_millis(50)).await,
                Err(e) => panic!("server never answered: {e}"),
            }
        }
    });
    assert_eq!(next["pair_id"], "p1");
    let body = next.to_string();
    for secret in ["ensembled", "partial", "ensemble(", "vlm-small"] {
        assert!(!body.contains(secret), "{secret} leaked: {body}");
    }
    let status = rt.block_on(async {
        client
            .get(format!("{base}/sessions/{sid}/results"))
            .bearer_auth("tok-123")
            .send()
            .await
            .unwrap()
            .status()
    });
    assert_eq!(status.as_u16(), 200);

    Command::new("kill").args(["-TERM", &child.id().to_string()]).status().unwrap();
    let status = child.wait().unwrap();
    assert_eq!(status.code(), Some(0));
    let mut stderr = String::new();
    std::io::Read::read_to_string(&mut child.stderr.take().unwrap(), &mut stderr).unwrap();
    assert!(stderr.contains("excluded"), "{stderr}");
}

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde_json::Value;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn fixture(rel: &str) -> String {
    fixtures().join(rel).display().to_string()
}

fn finequest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_finequest"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn json(o: &Output) -> Value {
    assert_eq!(code(o), 0, "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    assert_eq!(code(&finequest(&["--help"])), 0);
    assert_eq!(code(&finequest(&["--version"])), 0);
    assert_eq!(code(&finequest(&[])), 1);
    assert_eq!(code(&finequest(&["segment"])), 1);
    assert_eq!(code(&finequest(&["frobnicate"])), 1);
    let gym = fixture("eval/gym.json");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.json").display().to_string();
    assert_eq!(code(&finequest(&["distort", &gym, "--kind", "spatial", "--sigma", "2", "--out", &out])), 1);
    assert_eq!(code(&finequest(&["answer", &gym, "--question", "q", "--option", "a"])), 1);
}

#[test]
fn graph_commands() {
    let g = fixture("graph.json");
    assert_eq!(code(&finequest(&["graph", "validate", &g])), 0);
    let stats = json(&finequest(&["graph", "stats", &g]));
    assert_eq!(stats["elements"], 3);
    assert_eq!(stats["sports"], 2);
    assert_eq!(code(&finequest(&["graph", "validate", "/no/such/graph.json"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"format_version":"1.0","embedding_dim":0,"sports":[]}"#).unwrap();
    assert_eq!(code(&finequest(&["graph", "validate", bad.to_str().unwrap()])), 2);
}

#[test]
fn segment_tiles_the_video() {
    let o = finequest(&["segment", &fixture("eval/gym.json"), "--win-size", "4", "--z-range", "0.5", "1.0", "--clip-len-range", "3", "6"]);
    let props = json(&o);
    let props = props.as_array().unwrap();
    assert_eq!(props[0]["start_frame"], 0);
    assert_eq!(props.last().unwrap()["end_frame"], 34);
    for w in props.windows(2) {
        assert_eq!(w[0]["end_frame"], w[1]["start_frame"]);
    }
    assert_eq!(code(&finequest(&["segment", "/no/video.json"])), 2);
}

#[test]
fn segment_accepts_a_motion_signal() {
    // flat motion with two sharp dips; a flat window has zero spread, so each dip falls below the threshold
    let mut values = vec![1.0; 30];
    values[9] = 0.1;
    values[22] = 0.1;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("signal.json");
    std::fs::write(&path, serde_json::json!({"values": values, "fps": 25.0}).to_string()).unwrap();
    let o = finequest(&["segment", path.to_str().unwrap(), "--win-size", "4", "--clip-len-range", "3", "8"]);
    let spans: Vec<(u64, u64)> = json(&o)
        .as_array()
        .unwrap()
        .iter()
        .map(|p| (p["start_frame"].as_u64().unwrap(), p["end_frame"].as_u64().unwrap()))
        .collect();
    assert_eq!(spans, [(0, 9), (9, 22), (22, 31)]);

    std::fs::write(&path, r#"{"values": [1.0, -1.0], "fps": 25.0}"#).unwrap();
    assert_eq!(code(&finequest(&["segment", path.to_str().unwrap()])), 2);
}

#[test]
fn distort_writes_json_and_frames() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("warped.json");
    let o = finequest(&["--seed", "4", "distort", &fixture("eval/dive.json"), "--kind", "spatiotemporal", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.exists());
    let frames = dir.path().join("frames");
    let o = finequest(&["distort", out.to_str().unwrap(), "--kind", "temporal", "--temporal-variant", "reverse", "--out", frames.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_dir(&frames).unwrap().count(), 28);
}

#[test]
fn select_ranks_clips() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("clips.json");
    let paths = [fixture("eval/gym.json"), fixture("eval/dive.json")];
    std::fs::write(&manifest, serde_json::to_string(&paths).unwrap()).unwrap();
    let sel = json(&finequest(&["select", manifest.to_str().unwrap(), "--question", "Which dive?", "--n1", "1"]));
    assert_eq!(sel["scores"].as_array().unwrap().len(), 2);
    assert_eq!(sel["spans"].as_array().unwrap().len(), 1);
}

#[test]
fn match_reads_embedding_files() {
    let dir = tempfile::tempdir().unwrap();
    let cap = dir.path().join("cap.json");
    let clip = dir.path().join("clip.json");
    std::fs::write(&cap, "[1,0,0,0,0,0,0,0]").unwrap();
    std::fs::write(&clip, "[0,1,0,0,0,0,0,0]").unwrap();
    let g = fixture("graph.json");
    let m = json(&finequest(&["match", &g, "--caption-emb", cap.to_str().unwrap(), "--clip-emb", clip.to_str().unwrap(), "--n2", "2"]));
    assert_eq!(m.as_array().unwrap().len(), 2);
    let d = json(&finequest(&["match", &g, "--caption-emb", cap.to_str().unwrap(), "--clip-emb", clip.to_str().unwrap(), "--sport", "D"]));
    assert!(d.as_array().unwrap().iter().all(|r| r["node_id"].as_str().unwrap().starts_with("D-")));
    std::fs::write(&clip, "[0,1]").unwrap();
    assert_eq!(code(&finequest(&["match", &g, "--caption-emb", cap.to_str().unwrap(), "--clip-emb", clip.to_str().unwrap()])), 2);
}

#[test]
fn answer_routes_easy_and_hard_questions() {
    let v = fixture("eval/gym.json");
    let g = fixture("graph.json");
    let easy = json(&finequest(&["answer", &v, "--fps", "10", "--question", "What sport is this?", "--graph", &g]));
    assert_eq!(easy["mode"], "reactive");
    let hard = json(&finequest(&[
        "answer", &v, "--fps", "10", "--graph", &g,
        "--question", "How many sub-sets of movements are performed?",
        "--option", "one", "--option", "two", "--option", "three", "--option", "four",
    ]));
    assert_eq!(hard["mode"], "deliberative");
    assert_eq!(hard["trace"].as_array().unwrap().len(), 6);
    // no graph: the deliberative path stops at the match stage
    let o = finequest(&["answer", &v, "--question", "How many twists?"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn unreachable_backend_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("backends.json");
    std::fs::write(&cfg, r#"{"agent": {"endpoint": "http://127.0.0.1:9", "timeout_ms": 500}}"#).unwrap();
    let o = finequest(&["--backend-config", cfg.to_str().unwrap(), "answer", &fixture("eval/gym.json"), "--question", "What sport is this?"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn eval_writes_reports_and_rejects_bad_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let text = dir.path().join("report.txt");
    let args = [
        "eval", &fixture("eval/qa.jsonl"), "--fps", "10", "--graph", &fixture("graph.json"),
        "--report", report.to_str().unwrap(), "--report-text", text.to_str().unwrap(),
    ];
    let o = finequest(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["item_count"], 4);
    assert_eq!(String::from_utf8_lossy(&o.stdout), std::fs::read_to_string(&text).unwrap());
    let first = std::fs::read(&report).unwrap();
    assert_eq!(code(&finequest(&args)), 0);
    assert_eq!(std::fs::read(&report).unwrap(), first);

    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"id\": 1}\n").unwrap();
    let o = finequest(&["eval", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));
}

fn get(addr: &str, path: &str) -> Option<String> {
    let mut s = TcpStream::connect(addr).ok()?;
    write!(s, "GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").ok()?;
    let mut out = String::new();
    s.read_to_string(&mut out).ok()?;
    Some(out)
}

#[test]
fn serve_answers_health_checks() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let addr = format!("127.0.0.1:{port}");
    let mut child = Command::new(env!("CARGO_BIN_EXE_finequest"))
        .args(["serve", "--addr", &addr, "--backends-only", "--threads", "2"])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(10);
    let mut reply = None;
    while Instant::now() < deadline {
        if let Some(r) = get(&addr, "/health") {
            reply = Some(r);
            break;
        }
        thread::sleep(Duration::from_millis(50));
    }
    child.kill().ok();
    child.wait().ok();
    let reply = reply.expect("server came up");
    assert!(reply.starts_with("HTTP/1.1 200"), "{reply}");
    assert!(reply.contains("\"roles\""));
}

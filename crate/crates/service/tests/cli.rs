use std::io::{Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;

fn builder(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_builder")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = builder(args);
    assert!(out.status.success(), "builder {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn usage_errors_exit_with_two() {
    for args in [&["--frobnicate"][..], &["synth", "--n", "3", "--out", "x", "--bogus"], &["teleport"]] {
        let out = builder(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"), "{args:?}");
    }
    let out = builder(&["train", "--task", "chess", "--data", "d", "--out", "o"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("chess"));
    let dir = tempfile::tempdir().unwrap();
    let out = builder(&["synth", "--n", "3", "--mix", "1,2", "--out", p(&dir.path().join("x.jsonl"))]);
    assert_eq!(out.status.code(), Some(1));
    let out = builder(&["data-stats", "--data", "/nonexistent/corpus.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn data_stats_counts_labels_per_split() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.jsonl");
    ok(&["synth", "--n", "90", "--seed", "4", "--mix", "3,1,2", "--out", p(&data)]);
    let mut expected = std::collections::HashMap::new();
    for line in std::fs::read_to_string(&data).unwrap().lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        *expected.entry((v["split"].as_str().unwrap().to_string(), v["label"].as_str().unwrap().to_string())).or_insert(0u64) += 1;
    }
    let v: Value = serde_json::from_slice(&ok(&["data-stats", "--data", p(&data), "--json"]).stdout).unwrap();
    let mut total = 0;
    for split in ["train", "valid", "test"] {
        for label in ["execution", "ask", "others"] {
            let got = v["splits"][split][label].as_u64().unwrap();
            assert_eq!(got, expected.get(&(split.to_string(), label.to_string())).copied().unwrap_or(0), "{split}/{label}");
            total += got;
        }
    }
    assert_eq!(total, 90);
    let execution: u64 = ["train", "valid", "test"].iter().map(|s| v["splits"][s]["execution"].as_u64().unwrap()).sum();
    assert_eq!(execution, 45);

    let only = dir.path().join("e.jsonl");
    ok(&["synth", "--n", "10", "--execution-only", "--out", p(&only)]);
    let v: Value = serde_json::from_slice(&ok(&["data-stats", "--data", p(&only), "--json"]).stdout).unwrap();
    assert_eq!(v["splits"]["train"]["execution"], 10);
}

#[test]
fn eval_reproduces_the_training_log() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = d.join("d.jsonl");
    ok(&["synth", "--n", "60", "--seed", "12", "--out", p(&data)]);
    let config = d.join("c.json");
    std::fs::write(&config, r#"{"model": {"d_w": 16, "d_c": 8, "k": 2, "n_t": 1, "n_g": 1, "s": 24, "heads_text": 2, "heads_grid": 1, "dropout": 0.0}, "train": {"lr": 0.001, "batch_size": 4, "epochs": 4}}"#).unwrap();
    let (ckpt, log, preds) = (d.join("m.ckpt"), d.join("log.jsonl"), d.join("test.jsonl"));
    ok(&["train", "--task", "joint", "--data", p(&data), "--config", p(&config), "--out", p(&ckpt), "--log", p(&log), "--predictions", p(&preds), "--seed", "3"]);

    let epochs: Vec<Value> = std::fs::read_to_string(&log).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(epochs.len(), 4);
    let best = epochs.iter().map(|e| e["val_metric"].as_f64().unwrap()).fold(f64::NEG_INFINITY, f64::max);

    let dump = d.join("valid.jsonl");
    let live: Value = serde_json::from_slice(&ok(&["eval", "--ckpt", p(&ckpt), "--data", p(&data), "--split", "valid", "--dump", p(&dump), "--json"]).stdout).unwrap();
    assert_eq!(live["metric"].as_f64().unwrap(), best);
    let rescored: Value = serde_json::from_slice(&ok(&["eval", "--predictions", p(&dump), "--task", "joint", "--json"]).stdout).unwrap();
    assert_eq!(rescored, live);

    let test_live: Value = serde_json::from_slice(&ok(&["eval", "--ckpt", p(&ckpt), "--data", p(&data), "--json"]).stdout).unwrap();
    let test_rescored: Value = serde_json::from_slice(&ok(&["eval", "--predictions", p(&preds), "--task", "joint", "--json"]).stdout).unwrap();
    assert_eq!(test_live, test_rescored);

    // Unknown task names are usage errors.
    let out = builder(&["eval", "--predictions", p(&preds), "--task", "chess"]);
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8(ok(&["eval", "--ckpt", p(&ckpt), "--data", p(&data)]).stdout).unwrap();
    assert!(text.contains("gold\\pred"));
}

fn http_get(port: u16, path: &str) -> Option<String> {
    let mut s = TcpStream::connect(("127.0.0.1", port)).ok()?;
    s.set_read_timeout(Some(Duration::from_secs(5))).ok()?;
    write!(s, "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").ok()?;
    let mut body = String::new();
    s.read_to_string(&mut body).ok()?;
    Some(body)
}

#[test]
fn play_listens_on_the_port_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = d.join("d.jsonl");
    ok(&["synth", "--n", "30", "--seed", "2", "--mix", "1,0,0", "--out", p(&data)]);
    let config = d.join("c.json");
    std::fs::write(&config, r#"{"model": {"s": 24, "d_w": 8, "d_c": 5, "k": 1, "n_t": 1, "n_g": 1, "heads_text": 1, "heads_grid": 1}, "train": {"epochs": 1, "batch_size": 6}}"#).unwrap();
    let ckpt = d.join("m.ckpt");
    ok(&["train", "--task", "building", "--data", p(&data), "--config", p(&config), "--out", p(&ckpt)]);

    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut child = Command::new(env!("CARGO_BIN_EXE_builder"))
        .args(["play", "--ckpt", p(&ckpt)])
        .env("PORT", port.to_string())
        .env("RUST_LOG", "warn")
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(30);
    let mut reply = None;
    while Instant::now() < deadline {
        if let Some(r) = http_get(port, "/healthz") {
            reply = Some(r);
            break;
        }
        std::thread::sleep(Duration::from_millis(50));
    }
    let index = http_get(port, "/");
    child.kill().unwrap();
    child.wait().unwrap();
    let reply = reply.expect("server came up");
    assert!(reply.starts_with("HTTP/1.1 200"), "{reply}");
    assert!(index.unwrap().contains("/ws"));
}

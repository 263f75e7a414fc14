//! The `rfot` binary: exit codes, flag overrides and printed output.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn rfot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rfot"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn replays_the_shipped_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let config = fixtures().join("synthetic_run.toml");
    let o = rfot(&["--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let stdout = text(&o.stdout);
    assert!(stdout.starts_with("Dataset"));
    for name in ["IO", "CoT", "SC-CoT", "ToT", "RFoT", "Fine Tuning (LoRA)"] {
        assert!(stdout.contains(name), "missing {name}");
    }
    for f in ["results.csv", "results.txt", "traces.jsonl"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    assert_eq!(fs::read_dir(out.join("forests")).unwrap().count(), 10);
}

#[test]
fn flags_override_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let config = fixtures().join("synthetic_run.toml");
    let o = rfot(&[
        "--config",
        config.to_str().unwrap(),
        "--strategy",
        "io,cot",
        "--samples",
        "3",
        "--jobs",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 3, "{csv}");
    assert!(rows[0].contains(",IO,") && rows[0].ends_with(",3,"));
    assert!(rows[1].contains("Fine Tuning (LoRA)"));
    assert!(rows[2].contains(",CoT,"));
    assert_eq!(fs::read_to_string(out.join("traces.jsonl")).unwrap().lines().count(), 6);
}

#[test]
fn simulated_backend_without_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let survey = fixtures().join("synthetic_survey.jsonl");
    let o = rfot(&[
        "--dataset",
        survey.to_str().unwrap(),
        "--backend-url",
        "simulated://lexicon",
        "--strategy",
        "all",
        "--samples",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    assert_eq!(fs::read_dir(out.join("forests")).unwrap().count(), 2);
}

#[test]
fn configuration_errors_exit_1() {
    let survey = fixtures().join("synthetic_survey.jsonl");
    let survey = survey.to_str().unwrap();
    for args in [
        vec!["--backend-url", "simulated://lexicon"],
        vec!["--dataset", survey],
        vec!["--dataset", survey, "--backend-url", "http://127.0.0.1:9/v1/chat/completions"],
        vec!["--dataset", survey, "--backend-url", "simulated://lexicon", "--samples", "0"],
        vec!["--dataset", survey, "--cassette", "c.json", "--record"],
    ] {
        let o = rfot(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", text(&o.stderr));
        assert!(text(&o.stderr).starts_with("rfot: "));
    }
    let o = rfot(&["--strategy", "magic"]);
    assert_eq!(o.status.code(), Some(2), "clap usage errors exit 2");
}

#[test]
fn unreachable_backend_exits_2() {
    // a port that was free a moment ago
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let tmp = tempfile::tempdir().unwrap();
    let survey = fixtures().join("synthetic_survey.jsonl");
    let url = format!("http://127.0.0.1:{port}/v1/chat/completions");
    let o = rfot(&[
        "--dataset",
        survey.to_str().unwrap(),
        "--backend-url",
        &url,
        "--model",
        "m",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o.stderr));
    assert!(text(&o.stderr).contains("unreachable"));
}

#[test]
fn data_errors_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.jsonl");
    let o = rfot(&[
        "--dataset",
        missing.to_str().unwrap(),
        "--backend-url",
        "simulated://lexicon",
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", text(&o.stderr));

    let bad = tmp.path().join("bad.jsonl");
    fs::write(&bad, "{\"record_id\": \"x\"}\n").unwrap();
    let o = rfot(&["--dataset", bad.to_str().unwrap(), "--backend-url", "simulated://lexicon"]);
    assert_eq!(o.status.code(), Some(3), "{}", text(&o.stderr));
    assert!(text(&o.stderr).contains("line 1"));
}

fn read_body(stream: &mut TcpStream) -> Option<()> {
    let mut reader = BufReader::new(stream);
    let mut len = 0;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).ok()? == 0 {
            return None;
        }
        if line == "\r\n" {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                len = v.trim().parse().ok()?;
            }
        }
    }
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body).ok()
}

/// A chat endpoint that answers `3` to the first `healthy` requests and
/// HTTP 500 afterwards. Connections that send no request (reachability
/// probes) are not counted.
fn flaky_server(healthy: usize) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let served = Arc::new(AtomicUsize::new(0));
    let count = served.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            if read_body(&mut stream).is_none() {
                continue;
            }
            let n = count.fetch_add(1, Ordering::SeqCst);
            let (status, body) = if n < healthy {
                (200, r#"{"choices":[{"message":{"role":"assistant","content":"3"}}]}"#)
            } else {
                (500, r#"{"error":"overloaded"}"#)
            };
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            let _ = stream.write_all(reply.as_bytes());
        }
    });
    (url, served)
}

#[test]
fn failed_recording_leaves_a_resumable_cassette() {
    let tmp = tempfile::tempdir().unwrap();
    let survey = fixtures().join("synthetic_survey.jsonl");
    let cassette = tmp.path().join("live.json");
    let marker = tmp.path().join("live.json.partial");
    let record = |url: &str| {
        rfot(&[
            "--dataset",
            survey.to_str().unwrap(),
            "--strategy",
            "io",
            "--samples",
            "3",
            "--jobs",
            "1",
            "--backend-url",
            url,
            "--model",
            "m",
            "--cassette",
            cassette.to_str().unwrap(),
            "--record",
            "--out",
            tmp.path().join("out").to_str().unwrap(),
        ])
    };

    let (url, served) = flaky_server(2);
    let o = record(&url);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o.stderr));
    assert_eq!(served.load(Ordering::SeqCst), 3);
    assert!(marker.is_file());
    let saved: serde_json::Value = serde_json::from_str(&fs::read_to_string(&cassette).unwrap()).unwrap();
    assert_eq!(saved.as_object().unwrap().len(), 2);

    // the second attempt only asks for what is missing
    let (url, served) = flaky_server(usize::MAX);
    let o = record(&url);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    assert_eq!(served.load(Ordering::SeqCst), 1);
    assert!(!marker.exists());

    let o = rfot(&[
        "--dataset",
        survey.to_str().unwrap(),
        "--strategy",
        "io",
        "--samples",
        "3",
        "--cassette",
        cassette.to_str().unwrap(),
        "--out",
        tmp.path().join("replay").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
}

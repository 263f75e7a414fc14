//! The chat-completions client against a local mock server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use rfot::llm::{LlmBackend, LlmError, OpenAiCompatible, OpenAiConfig, PromptRequest, RetryPolicy};
use serde_json::Value;

#[derive(Clone)]
enum Reply {
    /// Close the connection without answering.
    Drop,
    Status(u16, String),
    /// Wait before answering with the given body.
    Slow(Duration, String),
}

struct Captured {
    head: String,
    body: String,
}

struct MockServer {
    url: String,
    requests: Arc<Mutex<Vec<Captured>>>,
}

fn read_request(stream: &mut TcpStream) -> Option<Captured> {
    let mut reader = BufReader::new(stream);
    let mut head = String::new();
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).ok()? == 0 {
            return None;
        }
        if line == "\r\n" {
            break;
        }
        head.push_str(&line);
    }
    let len = head
        .lines()
        .find_map(|l| {
            let (k, v) = l.split_once(':')?;
            k.eq_ignore_ascii_case("content-length").then(|| v.trim().parse::<usize>().ok())?
        })
        .unwrap_or(0);
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body).ok()?;
    Some(Captured {
        head,
        body: String::from_utf8(body).ok()?,
    })
}

fn respond(stream: &mut TcpStream, status: u16, body: &str) {
    let text = format!(
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    let _ = stream.write_all(text.as_bytes());
}

/// Serves `script` one reply per connection, then stops.
fn serve(script: Vec<Reply>) -> MockServer {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let requests = Arc::new(Mutex::new(Vec::new()));
    let seen = requests.clone();
    thread::spawn(move || {
        for reply in script {
            let Ok((mut stream, _)) = listener.accept() else { return };
            let Some(req) = read_request(&mut stream) else { continue };
            seen.lock().unwrap().push(req);
            match reply {
                Reply::Drop => drop(stream),
                Reply::Status(code, body) => respond(&mut stream, code, &body),
                Reply::Slow(wait, body) => {
                    thread::sleep(wait);
                    respond(&mut stream, 200, &body);
                }
            }
        }
    });
    MockServer { url, requests }
}

fn ok_body(text: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}

fn client(url: &str, key: Option<&str>, retries: u32) -> OpenAiCompatible {
    OpenAiCompatible::new(OpenAiConfig {
        url: url.into(),
        model: "test-model".into(),
        api_key: key.map(str::to_string),
        timeout_secs: 1,
    })
    .with_retry(RetryPolicy {
        max_retries: retries,
        initial_backoff: Duration::from_millis(10),
    })
}

fn request() -> PromptRequest {
    PromptRequest::new("be brief", "How happy?").temperature(0.0).max_tokens(8).seed_hint(3)
}

#[test]
fn wire_format() {
    let server = serve(vec![Reply::Status(200, ok_body("LABEL: 4"))]);
    let c = client(&server.url, Some("sk-test"), 0).complete(&request()).unwrap();
    assert_eq!(c.text, "LABEL: 4");
    assert!(c.latency >= 0.0);
    assert_eq!(c.backend_id, "openai-compatible:test-model");

    let reqs = server.requests.lock().unwrap();
    assert_eq!(reqs.len(), 1);
    assert!(reqs[0].head.starts_with("POST /v1/chat/completions "));
    assert!(reqs[0]
        .head
        .lines()
        .any(|l| l.to_ascii_lowercase().starts_with("authorization: bearer sk-test")));
    let body: Value = serde_json::from_str(&reqs[0].body).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["messages"][0]["content"], "be brief");
    assert_eq!(body["messages"][1]["role"], "user");
    assert_eq!(body["messages"][1]["content"], "How happy?");
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["max_tokens"], 8);
    assert_eq!(body["stream"], false);
}

#[test]
fn local_runner_response_shape() {
    let body = serde_json::json!({"message": {"role": "assistant", "content": "3"}}).to_string();
    let server = serve(vec![Reply::Status(200, body)]);
    let c = client(&server.url, None, 0).complete(&request()).unwrap();
    assert_eq!(c.text, "3");
    let reqs = server.requests.lock().unwrap();
    assert!(!reqs[0].head.to_ascii_lowercase().contains("authorization"));
}

#[test]
fn transport_errors_are_retried() {
    let server = serve(vec![Reply::Drop, Reply::Drop, Reply::Status(200, ok_body("fine"))]);
    let c = client(&server.url, None, 3).complete(&request()).unwrap();
    assert_eq!(c.text, "fine");
    assert_eq!(server.requests.lock().unwrap().len(), 3);
}

#[test]
fn retries_are_bounded() {
    let server = serve(vec![Reply::Drop; 3]);
    let err = client(&server.url, None, 2).complete(&request()).unwrap_err();
    assert!(err.is_retriable(), "{err:?}");
    assert_eq!(server.requests.lock().unwrap().len(), 3);
}

#[test]
fn http_errors_carry_status_and_are_not_retried() {
    let server = serve(vec![
        Reply::Status(503, "{\"error\":\"busy\"}".into()),
        Reply::Status(200, ok_body("late")),
    ]);
    let err = client(&server.url, None, 3).complete(&request()).unwrap_err();
    match err {
        LlmError::Status { status, body } => {
            assert_eq!(status, 503);
            assert!(body.contains("busy"));
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(server.requests.lock().unwrap().len(), 1);
}

#[test]
fn empty_completion_is_an_error() {
    let server = serve(vec![Reply::Status(200, ok_body("   "))]);
    let err = client(&server.url, None, 0).complete(&request()).unwrap_err();
    assert!(matches!(err, LlmError::EmptyCompletion), "{err:?}");
}

#[test]
fn slow_backend_times_out() {
    let server = serve(vec![Reply::Slow(Duration::from_secs(3), ok_body("too late"))]);
    let err = client(&server.url, None, 0).complete(&request()).unwrap_err();
    assert!(matches!(err, LlmError::Timeout(_)), "{err:?}");
    assert!(err.is_retriable());
}

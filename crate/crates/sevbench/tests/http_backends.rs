//! Embedding and chat clients against a scripted local HTTP server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};
use sevbench::embed::{EmbedError, EmbeddingClient, HttpEmbedder, RetryPolicy};
use sevbench::inference::{backend_for, classify, FailureReason, ModelConfig};
use sevbench_core::parse::ParseMode;
use sevbench_core::prompt::build_zero_shot;
use sevbench_core::{LogRecord, SeverityLevel};

struct Reply {
    status: u16,
    body: String,
    delay: Duration,
}

fn reply(status: u16, body: Value) -> Reply {
    Reply {
        status,
        body: body.to_string(),
        delay: Duration::ZERO,
    }
}

/// Serves `handler(request_json, call_number)` on a random port. Returns the
/// base URL and the call counter.
fn serve<F>(handler: F) -> (String, Arc<AtomicUsize>)
where
    F: Fn(&Value, usize) -> Reply + Send + Sync + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let calls = Arc::new(AtomicUsize::new(0));
    let counter = calls.clone();
    let handler = Arc::new(handler);
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let handler = handler.clone();
            let n = counter.fetch_add(1, Ordering::SeqCst);
            thread::spawn(move || {
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut length = 0;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                        break;
                    }
                    if let Some((k, v)) = line.split_once(':') {
                        if k.eq_ignore_ascii_case("content-length") {
                            length = v.trim().parse().unwrap_or(0);
                        }
                    }
                }
                let mut body = vec![0; length];
                reader.read_exact(&mut body).unwrap();
                let request: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
                let r = handler(&request, n);
                thread::sleep(r.delay);
                let _ = write!(
                    stream,
                    "HTTP/1.1 {} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                    r.status,
                    r.body.len(),
                    r.body
                );
            });
        }
    });
    (url, calls)
}

fn vectors(request: &Value, dim: usize) -> Value {
    let data: Vec<Value> = request["input"]
        .as_array()
        .unwrap()
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut v = vec![0.0f32; dim];
            v[t.as_str().unwrap().len() % dim] = 1.0;
            json!({"index": i, "embedding": v})
        })
        .collect();
    json!({"data": data})
}

fn client(url: &str, dim: usize) -> EmbeddingClient {
    let mut c = EmbeddingClient::new(Box::new(
        HttpEmbedder::new(url, "nomic-embed-text", dim, None, Duration::from_secs(5)).unwrap(),
    ));
    c.retry = RetryPolicy {
        max_attempts: 3,
        initial_backoff_ms: 1,
        max_backoff_ms: 5,
    };
    c
}

fn texts(n: usize) -> Vec<String> {
    (0..n).map(|i| "x".repeat(i + 1)).collect()
}

#[test]
fn well_behaved_backend_preserves_order() {
    let (url, _) = serve(|req, _| {
        assert_eq!(req["model"], "nomic-embed-text");
        reply(200, vectors(req, 768))
    });
    let mut c = client(&url, 768);
    c.batch_size = 4;
    c.parallelism = 3;
    let out = c.embed_texts(texts(11)).unwrap();
    assert_eq!(out.len(), 11);
    for (i, v) in out.iter().enumerate() {
        assert_eq!(v.dim(), 768);
        assert_eq!(v.values()[(i + 1) % 768], 1.0);
    }
}

#[test]
fn wrong_dimension_is_rejected() {
    let (url, _) = serve(|req, _| reply(200, vectors(req, 512)));
    let err = client(&url, 768).embed_texts(texts(3)).unwrap_err();
    assert!(matches!(
        err,
        EmbedError::DimensionMismatch {
            expected: 768,
            actual: 512,
            position: 0
        }
    ));
}

#[test]
fn short_response_is_a_partial_batch() {
    let (url, _) = serve(|req, _| {
        let mut full = vectors(req, 8);
        full["data"].as_array_mut().unwrap().pop();
        reply(200, full)
    });
    let err = client(&url, 8).embed_texts(texts(3)).unwrap_err();
    assert!(matches!(err, EmbedError::PartialBatch { expected: 3, got: 2 }));
}

#[test]
fn transient_errors_are_retried_then_give_up() {
    let (url, calls) = serve(|req, n| {
        if n == 0 {
            reply(503, json!({"error": "loading"}))
        } else {
            reply(200, vectors(req, 8))
        }
    });
    assert_eq!(client(&url, 8).embed_texts(texts(2)).unwrap().len(), 2);
    assert_eq!(calls.load(Ordering::SeqCst), 2);

    let (url, calls) = serve(|_, _| reply(500, json!({"error": "down"})));
    let err = client(&url, 8).embed_texts(texts(2)).unwrap_err();
    assert!(matches!(err, EmbedError::BackendUnavailable(_)));
    assert_eq!(calls.load(Ordering::SeqCst), 3);

    let (url, calls) = serve(|_, _| reply(400, json!({"error": "bad model"})));
    assert!(matches!(client(&url, 8).embed_texts(texts(2)), Err(EmbedError::Rejected(_))));
    assert_eq!(calls.load(Ordering::SeqCst), 1);
}

fn chat_cfg(url: &str) -> ModelConfig {
    ModelConfig {
        endpoint: url.to_string(),
        model: "qwen3-4b".into(),
        timeout_secs: 2.0,
        ..ModelConfig::default()
    }
}

fn record() -> LogRecord {
    LogRecord::new(1, "Started Session 4 of User root.").with_severity(SeverityLevel::INFO)
}

#[test]
fn chat_completion_round_trip() {
    let (url, _) = serve(|req, _| {
        assert_eq!(req["model"], "qwen3-4b");
        assert_eq!(req["temperature"], 0.0);
        assert_eq!(req["messages"][0]["role"], "system");
        assert!(req["messages"][1]["content"].as_str().unwrap().contains("Started Session 4"));
        reply(200, json!({"choices": [{"message": {"role": "assistant", "content": "6\n"}}]}))
    });
    let cfg = chat_cfg(&url);
    let backend = backend_for(&cfg, Some("secret".into())).unwrap();
    let prompt = build_zero_shot(&record().unlabeled());
    let r = classify(1.into(), &prompt, &cfg, backend.as_ref(), ParseMode::Strict, 0.0);
    assert_eq!(r.prediction(), Some(SeverityLevel::INFO));
    assert_eq!(r.raw_output.as_deref(), Some("6\n"));
    assert!(r.timings.generation_ms > 0.0);
}

#[test]
fn chat_errors_become_failures() {
    let prompt = build_zero_shot(&record().unlabeled());

    let (url, _) = serve(|_, _| Reply {
        status: 200,
        body: json!({"choices": [{"message": {"content": "6"}}]}).to_string(),
        delay: Duration::from_secs(4),
    });
    let cfg = ModelConfig {
        timeout_secs: 0.3,
        ..chat_cfg(&url)
    };
    let backend = backend_for(&cfg, None).unwrap();
    let r = classify(1.into(), &prompt, &cfg, backend.as_ref(), ParseMode::Strict, 0.0);
    assert_eq!(r.answer, Err(FailureReason::Timeout));
    assert_eq!(r.raw_output, None);

    let (url, _) = serve(|_, _| reply(500, json!({"error": "oom"})));
    let cfg = chat_cfg(&url);
    let backend = backend_for(&cfg, None).unwrap();
    let r = classify(1.into(), &prompt, &cfg, backend.as_ref(), ParseMode::Strict, 0.0);
    assert!(matches!(r.answer, Err(FailureReason::Transport(_))));

    let (url, _) = serve(|_, _| reply(200, json!({"choices": [{"message": {"content": "The severity is 6."}}]})));
    let cfg = chat_cfg(&url);
    let backend = backend_for(&cfg, None).unwrap();
    let r = classify(1.into(), &prompt, &cfg, backend.as_ref(), ParseMode::Strict, 0.0);
    assert!(matches!(r.answer, Err(FailureReason::Parse(_))));
    let r = classify(1.into(), &prompt, &cfg, backend.as_ref(), ParseMode::Lenient, 0.0);
    assert_eq!(r.prediction(), Some(SeverityLevel::INFO));
}

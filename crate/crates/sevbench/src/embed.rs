//! Embedding backends and the batching client in front of them.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sevbench_core::{mock_embed, DocumentText, EmbeddingVector, DEFAULT_DIM};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmbedError {
    #[error("embedding backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("embedding backend rejected the request: {0}")]
    Rejected(String),
    #[error("backend returned dimension {actual} at position {position}, expected {expected}")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        position: usize,
    },
    #[error("backend returned {got} vectors for {expected} inputs")]
    PartialBatch { expected: usize, got: usize },
    #[error("backend returned a non-finite value at position {0}")]
    NonFinite(usize),
    #[error("cannot embed an empty batch")]
    EmptyBatch,
}

impl EmbedError {
    fn is_transient(&self) -> bool {
        matches!(self, EmbedError::BackendUnavailable(_))
    }
}

pub trait EmbeddingBackend: Send + Sync {
    /// Declared output dimension.
    fn dim(&self) -> usize;

    fn describe(&self) -> String;

    /// One request for one batch, no retries.
    fn request(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError>;
}

/// Deterministic offline embedder.
#[derive(Debug, Clone, Copy)]
pub struct MockEmbedder {
    pub dim: usize,
}

impl Default for MockEmbedder {
    fn default() -> Self {
        Self { dim: DEFAULT_DIM }
    }
}

impl EmbeddingBackend for MockEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn describe(&self) -> String {
        format!("mock:{}", self.dim)
    }

    fn request(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        Ok(texts.iter().map(|t| mock_embed(t, self.dim).into_values()).collect())
    }
}

/// OpenAI-style `/embeddings` endpoint.
pub struct HttpEmbedder {
    url: String,
    model: String,
    dim: usize,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    embedding: Vec<f32>,
    #[serde(default)]
    index: Option<usize>,
}

pub(crate) fn endpoint_url(base: &str, path: &str) -> String {
    let base = base.trim_end_matches('/');
    if base.ends_with(path) {
        base.to_string()
    } else {
        format!("{base}{path}")
    }
}

impl HttpEmbedder {
    pub fn new(
        endpoint: &str,
        model: &str,
        dim: usize,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Result<Self, EmbedError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| EmbedError::BackendUnavailable(e.to_string()))?;
        Ok(Self {
            url: endpoint_url(endpoint, "/embeddings"),
            model: model.to_string(),
            dim,
            api_key,
            client,
        })
    }
}

impl EmbeddingBackend for HttpEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn describe(&self) -> String {
        format!("{}@{}", self.model, self.url)
    }

    fn request(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        let mut req = self
            .client
            .post(&self.url)
            .json(&json!({ "model": self.model, "input": texts }));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| EmbedError::BackendUnavailable(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(EmbedError::BackendUnavailable(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(EmbedError::Rejected(format!("HTTP {status}: {body}")));
        }
        let mut parsed: EmbeddingResponse = resp
            .json()
            .map_err(|e| EmbedError::Rejected(format!("malformed response: {e}")))?;
        if parsed.data.iter().all(|d| d.index.is_some()) {
            parsed.data.sort_by_key(|d| d.index);
        }
        Ok(parsed.data.into_iter().map(|d| d.embedding).collect())
    }
}

type Slot = Mutex<Option<Result<Vec<EmbeddingVector>, EmbedError>>>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 4,
            initial_backoff_ms: 200,
            max_backoff_ms: 5_000,
        }
    }
}

impl RetryPolicy {
    fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u64.checked_shl(attempt).unwrap_or(u64::MAX);
        Duration::from_millis(self.initial_backoff_ms.saturating_mul(factor).min(self.max_backoff_ms))
    }
}

/// Optional text prefixes for encoders that separate documents from
/// queries. Off by default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrefixPair {
    pub document: String,
    pub query: String,
}

pub struct EmbeddingClient {
    backend: Box<dyn EmbeddingBackend>,
    pub batch_size: usize,
    pub parallelism: usize,
    pub retry: RetryPolicy,
    pub prefixes: Option<PrefixPair>,
}

impl EmbeddingClient {
    pub fn new(backend: Box<dyn EmbeddingBackend>) -> Self {
        Self {
            backend,
            batch_size: 64,
            parallelism: 1,
            retry: RetryPolicy::default(),
            prefixes: None,
        }
    }

    pub fn mock(dim: usize) -> Self {
        Self::new(Box::new(MockEmbedder { dim }))
    }

    pub fn dim(&self) -> usize {
        self.backend.dim()
    }

    pub fn describe(&self) -> String {
        self.backend.describe()
    }

    pub fn embed_documents(&self, docs: &[DocumentText]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let prefix = self.prefixes.as_ref().map(|p| p.document.as_str());
        self.embed_texts(docs.iter().map(|d| with_prefix(prefix, &d.text)).collect())
    }

    pub fn embed_queries(&self, docs: &[DocumentText]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let prefix = self.prefixes.as_ref().map(|p| p.query.as_str());
        self.embed_texts(docs.iter().map(|d| with_prefix(prefix, &d.text)).collect())
    }

    /// Splits into batches, runs up to `parallelism` batches at once and
    /// reassembles results in input order.
    pub fn embed_texts(&self, texts: Vec<String>) -> Result<Vec<EmbeddingVector>, EmbedError> {
        if texts.is_empty() {
            return Err(EmbedError::EmptyBatch);
        }
        let chunks: Vec<&[String]> = texts.chunks(self.batch_size.max(1)).collect();
        let slots: Vec<Slot> =
            chunks.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = self.parallelism.clamp(1, chunks.len());
        thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(chunk) = chunks.get(i) else { break };
                    let result = self.embed_chunk(chunk, i * self.batch_size.max(1));
                    let failed = result.is_err();
                    *slots[i].lock().expect("slot lock") = Some(result);
                    if failed {
                        next.store(chunks.len(), Ordering::Relaxed);
                    }
                });
            }
        });
        let mut out = Vec::with_capacity(texts.len());
        for slot in slots {
            match slot.into_inner().expect("slot lock") {
                Some(result) => out.extend(result?),
                None => continue,
            }
        }
        if out.len() != texts.len() {
            return Err(EmbedError::PartialBatch {
                expected: texts.len(),
                got: out.len(),
            });
        }
        Ok(out)
    }

    fn embed_chunk(&self, chunk: &[String], offset: usize) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let mut attempt = 0;
        let raw = loop {
            match self.backend.request(chunk) {
                Ok(raw) => break raw,
                Err(e) if e.is_transient() && attempt + 1 < self.retry.max_attempts => {
                    thread::sleep(self.retry.backoff(attempt));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        };
        if raw.len() != chunk.len() {
            return Err(EmbedError::PartialBatch {
                expected: chunk.len(),
                got: raw.len(),
            });
        }
        let dim = self.backend.dim();
        raw.into_iter()
            .enumerate()
            .map(|(i, values)| {
                if values.len() != dim {
                    return Err(EmbedError::DimensionMismatch {
                        expected: dim,
                        actual: values.len(),
                        position: offset + i,
                    });
                }
                EmbeddingVector::new(values).map_err(|_| EmbedError::NonFinite(offset + i))
            })
            .collect()
    }
}

fn with_prefix(prefix: Option<&str>, text: &str) -> String {
    match prefix {
        Some(p) if !p.is_empty() => format!("{p}{text}"),
        _ => text.to_string(),
    }
}

/// One vector per document, in order, each of the backend's dimension.
pub fn embed_batch(texts: &[DocumentText], client: &EmbeddingClient) -> Result<Vec<EmbeddingVector>, EmbedError> {
    client.embed_documents(texts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicU32;

    struct Scripted {
        dim: usize,
        fail_first: u32,
        calls: AtomicU32,
        short: bool,
    }

    impl EmbeddingBackend for Scripted {
        fn dim(&self) -> usize {
            self.dim
        }
        fn describe(&self) -> String {
            "scripted".into()
        }
        fn request(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
            let call = self.calls.fetch_add(1, Ordering::SeqCst);
            if call < self.fail_first {
                return Err(EmbedError::BackendUnavailable("503".into()));
            }
            let n = if self.short { texts.len() - 1 } else { texts.len() };
            Ok(texts[..n].iter().map(|t| mock_embed(t, self.dim).into_values()).collect())
        }
    }

    fn doc(text: &str) -> DocumentText {
        DocumentText {
            text: text.into(),
            source_id: 0.into(),
            includes_label: false,
        }
    }

    fn fast_retry() -> RetryPolicy {
        RetryPolicy {
            max_attempts: 3,
            initial_backoff_ms: 1,
            max_backoff_ms: 2,
        }
    }

    #[test]
    fn order_is_preserved_across_parallel_batches() {
        let mut client = EmbeddingClient::mock(16);
        client.batch_size = 3;
        client.parallelism = 4;
        let docs: Vec<DocumentText> = (0..20).map(|i| doc(&format!("sentinel {i}"))).collect();
        let got = embed_batch(&docs, &client).unwrap();
        for (d, v) in docs.iter().zip(&got) {
            assert_eq!(v, &mock_embed(&d.text, 16));
        }
    }

    #[test]
    fn duplicates_embed_identically() {
        let client = EmbeddingClient::mock(DEFAULT_DIM);
        let got = embed_batch(&[doc("a"), doc("b"), doc("a")], &client).unwrap();
        assert_eq!(got.len(), 3);
        assert!(got.iter().all(|v| v.dim() == 768));
        assert_eq!(got[0], got[2]);
    }

    #[test]
    fn transient_failures_are_retried() {
        let mut client = EmbeddingClient::new(Box::new(Scripted {
            dim: 8,
            fail_first: 2,
            calls: AtomicU32::new(0),
            short: false,
        }));
        client.retry = fast_retry();
        assert_eq!(embed_batch(&[doc("x")], &client).unwrap().len(), 1);

        let mut client = EmbeddingClient::new(Box::new(Scripted {
            dim: 8,
            fail_first: 5,
            calls: AtomicU32::new(0),
            short: false,
        }));
        client.retry = fast_retry();
        assert!(matches!(
            embed_batch(&[doc("x")], &client),
            Err(EmbedError::BackendUnavailable(_))
        ));
    }

    #[test]
    fn short_and_empty_batches() {
        let client = EmbeddingClient::new(Box::new(Scripted {
            dim: 8,
            fail_first: 0,
            calls: AtomicU32::new(0),
            short: true,
        }));
        assert_eq!(
            embed_batch(&[doc("x"), doc("y")], &client),
            Err(EmbedError::PartialBatch { expected: 2, got: 1 })
        );
        assert_eq!(embed_batch(&[], &client), Err(EmbedError::EmptyBatch));
    }

    #[test]
    fn prefixes_apply_per_side() {
        let mut client = EmbeddingClient::mock(32);
        client.prefixes = Some(PrefixPair {
            document: "search_document: ".into(),
            query: "search_query: ".into(),
        });
        let d = client.embed_documents(&[doc("x")]).unwrap();
        let q = client.embed_queries(&[doc("x")]).unwrap();
        assert_eq!(d[0], mock_embed("search_document: x", 32));
        assert_eq!(q[0], mock_embed("search_query: x", 32));
    }

    #[test]
    fn urls() {
        assert_eq!(endpoint_url("http://h:1/v1/", "/embeddings"), "http://h:1/v1/embeddings");
        assert_eq!(endpoint_url("http://h:1/v1/embeddings", "/embeddings"), "http://h:1/v1/embeddings");
    }
}

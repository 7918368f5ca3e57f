//! Chat-completions client, built-in mock models, and timed classification.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sevbench_core::metrics::majority_label;
use sevbench_core::parse::{parse_severity, ParseFailure, ParseMode};
use sevbench_core::prompt::AssembledPrompt;
use sevbench_core::{RecordId, SeverityLevel};
use thiserror::Error;

use crate::embed::endpoint_url;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_output_tokens: u32,
    /// Extra token cap for think-mode models, sent as `reasoning_budget`.
    pub reasoning_budget: Option<u32>,
    pub timeout_secs: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:1234/v1".into(),
            model: "mock:fixed=6".into(),
            temperature: 0.0,
            top_p: 1.0,
            max_output_tokens: 8,
            reasoning_budget: None,
            timeout_secs: 600.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("temperature must be non-negative, got {0}")]
    Temperature(f64),
    #[error("max_output_tokens must be at least 1")]
    MaxTokens,
    #[error("top_p must lie in (0, 1], got {0}")]
    TopP(f64),
    #[error("timeout must be positive, got {0}")]
    Timeout(f64),
    #[error("unknown mock model {0:?} (expected mock:fixed=<text>, mock:sleep=<ms>[:<answer>] or mock:majority)")]
    UnknownMock(String),
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(ConfigError::Temperature(self.temperature));
        }
        if self.max_output_tokens == 0 {
            return Err(ConfigError::MaxTokens);
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(ConfigError::TopP(self.top_p));
        }
        if !self.timeout_secs.is_finite() || self.timeout_secs <= 0.0 {
            return Err(ConfigError::Timeout(self.timeout_secs));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransportError {
    #[error("request timed out")]
    EndpointTimeout,
    #[error("transport error: {0}")]
    Transport(String),
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, prompt: &AssembledPrompt, cfg: &ModelConfig) -> Result<String, TransportError>;
}

/// Any server exposing OpenAI-style `/chat/completions`.
pub struct HttpChatBackend {
    url: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpChatBackend {
    pub fn new(cfg: &ModelConfig, api_key: Option<String>) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout())
            .build()
            .map_err(|e| TransportError::Transport(e.to_string()))?;
        Ok(Self {
            url: endpoint_url(&cfg.endpoint, "/chat/completions"),
            api_key,
            client,
        })
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

pub fn chat_request_body(prompt: &AssembledPrompt, cfg: &ModelConfig) -> serde_json::Value {
    let mut body = json!({
        "model": cfg.model,
        "messages": [
            { "role": "system", "content": prompt.system_text },
            { "role": "user", "content": prompt.user_text },
        ],
        "temperature": cfg.temperature,
        "top_p": cfg.top_p,
        "max_tokens": cfg.max_output_tokens,
    });
    if let Some(budget) = cfg.reasoning_budget {
        body["reasoning_budget"] = json!(budget);
    }
    body
}

impl ChatBackend for HttpChatBackend {
    fn complete(&self, prompt: &AssembledPrompt, cfg: &ModelConfig) -> Result<String, TransportError> {
        let mut req = self.client.post(&self.url).json(&chat_request_body(prompt, cfg));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                TransportError::EndpointTimeout
            } else {
                TransportError::Transport(e.to_string())
            }
        })?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(TransportError::Transport(format!("HTTP {status}: {body}")));
        }
        let parsed: ChatResponse = resp.json().map_err(|e| {
            if e.is_timeout() {
                TransportError::EndpointTimeout
            } else {
                TransportError::Transport(format!("malformed response: {e}"))
            }
        })?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content.unwrap_or_default())
            .ok_or_else(|| TransportError::Transport("response has no choices".into()))
    }
}

/// Always answers with the same text.
pub struct FixedModel(pub String);

impl ChatBackend for FixedModel {
    fn complete(&self, _: &AssembledPrompt, _: &ModelConfig) -> Result<String, TransportError> {
        Ok(self.0.clone())
    }
}

/// Sleeps for a fixed delay, then answers.
pub struct SleepModel {
    pub delay: Duration,
    pub answer: String,
}

impl ChatBackend for SleepModel {
    fn complete(&self, _: &AssembledPrompt, _: &ModelConfig) -> Result<String, TransportError> {
        std::thread::sleep(self.delay);
        Ok(self.answer.clone())
    }
}

/// Answers with the modal label among the labels in the prompt's context
/// block (ties to the lowest level), or `?` when there are none.
pub struct MajorityModel;

/// Labels of the exemplar or neighbor block, in prompt order.
pub fn context_labels(prompt: &AssembledPrompt) -> Vec<SeverityLevel> {
    prompt
        .context_block()
        .lines()
        .filter_map(|line| {
            let digit = line
                .strip_prefix("severity: ")
                .or_else(|| line.rsplit_once(", 'severity': ").map(|(_, d)| d))?;
            SeverityLevel::parse_str(digit).ok().filter(|_| digit.len() == 1)
        })
        .collect()
}

impl ChatBackend for MajorityModel {
    fn complete(&self, prompt: &AssembledPrompt, _: &ModelConfig) -> Result<String, TransportError> {
        Ok(match majority_label(context_labels(prompt)) {
            Some(level) => level.to_string(),
            None => "?".into(),
        })
    }
}

/// Resolves `--model`: `mock:fixed=<text>`, `mock:sleep=<ms>[:<answer>]`,
/// `mock:majority`, or a served model name reached over HTTP.
pub fn backend_for(cfg: &ModelConfig, api_key: Option<String>) -> Result<Box<dyn ChatBackend>, Box<dyn std::error::Error + Send + Sync>> {
    let Some(spec) = cfg.model.strip_prefix("mock:") else {
        return Ok(Box::new(HttpChatBackend::new(cfg, api_key)?));
    };
    if spec == "majority" {
        return Ok(Box::new(MajorityModel));
    }
    if let Some(text) = spec.strip_prefix("fixed=") {
        return Ok(Box::new(FixedModel(text.to_string())));
    }
    if let Some(rest) = spec.strip_prefix("sleep=") {
        let (ms, answer) = rest.split_once(':').unwrap_or((rest, "6"));
        if let Ok(ms) = ms.parse::<u64>() {
            return Ok(Box::new(SleepModel {
                delay: Duration::from_millis(ms),
                answer: answer.to_string(),
            }));
        }
    }
    Err(Box::new(ConfigError::UnknownMock(cfg.model.clone())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum FailureReason {
    Parse(String),
    Timeout,
    Transport(String),
    Retrieval(String),
}

impl FailureReason {
    pub fn is_parse(&self) -> bool {
        matches!(self, FailureReason::Parse(_))
    }
}

impl From<ParseFailure> for FailureReason {
    fn from(f: ParseFailure) -> Self {
        FailureReason::Parse(f.to_string())
    }
}

impl From<TransportError> for FailureReason {
    fn from(e: TransportError) -> Self {
        match e {
            TransportError::EndpointTimeout => FailureReason::Timeout,
            TransportError::Transport(m) => FailureReason::Transport(m),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timings {
    pub retrieval_ms: f64,
    pub generation_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceResult {
    pub record_id: RecordId,
    pub raw_output: Option<String>,
    pub answer: Result<SeverityLevel, FailureReason>,
    pub timings: Timings,
    pub prompt_chars: usize,
    pub output_chars: usize,
}

impl InferenceResult {
    pub fn prediction(&self) -> Option<SeverityLevel> {
        self.answer.as_ref().ok().copied()
    }

    /// A failed retrieval: nothing was sent to the model.
    pub fn retrieval_failure(record_id: RecordId, reason: String, retrieval_ms: f64) -> Self {
        Self {
            record_id,
            raw_output: None,
            answer: Err(FailureReason::Retrieval(reason)),
            timings: Timings {
                retrieval_ms,
                generation_ms: 0.0,
                total_ms: retrieval_ms,
            },
            prompt_chars: 0,
            output_chars: 0,
        }
    }
}

/// Sends one prompt, timing the request alone; `retrieval_ms` is carried in
/// from the caller.
pub fn classify(
    record_id: RecordId,
    prompt: &AssembledPrompt,
    cfg: &ModelConfig,
    backend: &dyn ChatBackend,
    parse_mode: ParseMode,
    retrieval_ms: f64,
) -> InferenceResult {
    let started = Instant::now();
    let outcome = backend.complete(prompt, cfg);
    let generation_ms = started.elapsed().as_secs_f64() * 1000.0;
    let (raw_output, answer) = match outcome {
        Ok(raw) => {
            let answer = parse_severity(&raw, parse_mode).map_err(FailureReason::from);
            (Some(raw), answer)
        }
        Err(e) => (None, Err(FailureReason::from(e))),
    };
    InferenceResult {
        record_id,
        output_chars: raw_output.as_deref().map_or(0, |r| r.chars().count()),
        raw_output,
        answer,
        timings: Timings {
            retrieval_ms,
            generation_ms,
            total_ms: retrieval_ms + generation_ms,
        },
        prompt_chars: prompt.char_len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sevbench_core::prompt::build_zero_shot;
    use sevbench_core::LogRecord;

    fn prompt() -> AssembledPrompt {
        build_zero_shot(&LogRecord::new(1, "oops"))
    }

    fn cfg(model: &str) -> ModelConfig {
        ModelConfig {
            model: model.into(),
            ..ModelConfig::default()
        }
    }

    #[test]
    fn fixed_mock_is_parsed() {
        let c = cfg("mock:fixed=3");
        let backend = backend_for(&c, None).unwrap();
        let r = classify(1.into(), &prompt(), &c, backend.as_ref(), ParseMode::Strict, 0.0);
        assert_eq!(r.prediction(), SeverityLevel::new(3).ok());
        assert_eq!(r.raw_output.as_deref(), Some("3"));
        assert!(r.timings.total_ms >= r.timings.generation_ms);
    }

    #[test]
    fn verbose_answers_fail_strict_only() {
        let c = cfg("mock:fixed=The severity is 3.");
        let backend = backend_for(&c, None).unwrap();
        let strict = classify(1.into(), &prompt(), &c, backend.as_ref(), ParseMode::Strict, 0.0);
        assert!(matches!(strict.answer, Err(FailureReason::Parse(_))));
        let lenient = classify(1.into(), &prompt(), &c, backend.as_ref(), ParseMode::Lenient, 0.0);
        assert_eq!(lenient.prediction(), SeverityLevel::new(3).ok());
    }

    #[test]
    fn unknown_mock_is_rejected() {
        assert!(backend_for(&cfg("mock:nope"), None).is_err());
        assert!(backend_for(&cfg("mock:sleep=abc"), None).is_err());
    }

    #[test]
    fn endpoint_down_is_a_transport_failure() {
        // bind then drop to get a port nobody listens on
        let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let c = ModelConfig {
            endpoint: format!("http://127.0.0.1:{port}/v1"),
            model: "some-model".into(),
            timeout_secs: 2.0,
            ..ModelConfig::default()
        };
        let backend = backend_for(&c, None).unwrap();
        let r = classify(1.into(), &prompt(), &c, backend.as_ref(), ParseMode::Strict, 1.5);
        assert!(matches!(r.answer, Err(FailureReason::Transport(_))));
        assert_eq!(r.raw_output, None);
        assert_eq!(r.prediction(), None);
        assert_eq!(r.timings.retrieval_ms, 1.5);
    }

    #[test]
    fn request_body_shape() {
        let mut c = cfg("qwen3-4b");
        let body = chat_request_body(&prompt(), &c);
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], prompt().user_text);
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["top_p"], 1.0);
        assert!(body.get("reasoning_budget").is_none());
        c.reasoning_budget = Some(256);
        assert_eq!(chat_request_body(&prompt(), &c)["reasoning_budget"], 256);
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::default().validate().is_ok());
        let bad = ModelConfig { temperature: -0.1, ..ModelConfig::default() };
        assert_eq!(bad.validate(), Err(ConfigError::Temperature(-0.1)));
        let bad = ModelConfig { max_output_tokens: 0, ..ModelConfig::default() };
        assert_eq!(bad.validate(), Err(ConfigError::MaxTokens));
        for t in [0.0, -1.0, f64::INFINITY, f64::NAN] {
            let bad = ModelConfig { timeout_secs: t, ..ModelConfig::default() };
            assert!(matches!(bad.validate(), Err(ConfigError::Timeout(_))));
        }
        let bad = ModelConfig { temperature: f64::NAN, ..ModelConfig::default() };
        assert!(bad.validate().is_err());
    }
}

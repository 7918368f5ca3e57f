//! Experiment orchestration, scoring and report rendering.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sevbench_core::index::attach_snippets;
use sevbench_core::metrics::{ConfusionMatrix, LatencySummary};
use sevbench_core::parse::{parse_severity, ParseMode};
use sevbench_core::prompt::{self, build_few_shot, build_rag, build_zero_shot, AssembledPrompt};
use sevbench_core::{
    render_document, DatasetSplit, FlatIndex, LogRecord, PromptConfig, PromptError, PromptMode,
    RecordId, RetrievedNeighbor, SeverityLevel,
};
use thiserror::Error;

use crate::embed::{EmbedError, EmbeddingClient};
use crate::hashing::{records_hash, sha256_hex, template_hash};
use crate::index_file;
use crate::inference::{classify, ChatBackend, FailureReason, InferenceResult, ModelConfig, Timings};
use crate::manifest::{write_json_new, JsonId, ManifestError, RunManifest, StoredSplit};

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("split mismatch: {0}")]
    SplitMismatch(String),
    #[error("evaluation split is empty")]
    EmptyEvalSplit,
    #[error("rag mode needs an index and an embedder")]
    MissingIndex,
    #[error("ks must be a non-empty list of depths >= 1")]
    InvalidKs,
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// The records and identities an experiment runs against.
#[derive(Debug, Clone)]
pub struct EvalSplit {
    pub train: Vec<LogRecord>,
    pub eval_labeled: Vec<LogRecord>,
    pub eval_unlabeled: Vec<LogRecord>,
    pub train_sha256: String,
    pub eval_sha256: String,
    pub eval_ids: BTreeSet<RecordId>,
}

impl From<StoredSplit> for EvalSplit {
    fn from(s: StoredSplit) -> Self {
        Self {
            eval_ids: s.manifest.eval_id_set(),
            train_sha256: s.manifest.train_sha256,
            eval_sha256: s.manifest.eval_sha256,
            train: s.train,
            eval_labeled: s.eval_labeled,
            eval_unlabeled: s.eval_unlabeled,
        }
    }
}

impl From<&DatasetSplit> for EvalSplit {
    fn from(s: &DatasetSplit) -> Self {
        Self {
            train_sha256: records_hash(&s.train),
            eval_sha256: records_hash(&s.eval_labeled),
            eval_ids: s.eval_labeled.iter().map(|r| r.id.clone()).collect(),
            train: s.train.clone(),
            eval_labeled: s.eval_labeled.clone(),
            eval_unlabeled: s.eval_unlabeled.clone(),
        }
    }
}

/// Index plus the embedder that produced it.
pub struct Retriever<'a> {
    pub index: &'a FlatIndex,
    pub embedder: &'a EmbeddingClient,
}

impl Retriever<'_> {
    pub fn index_sha256(&self) -> String {
        sha256_hex(&index_file::encode(self.index))
    }

    fn retrieve<'t>(
        &self,
        record: &LogRecord,
        k: usize,
        train: &BTreeMap<&'t RecordId, &'t LogRecord>,
    ) -> Result<Vec<RetrievedNeighbor>, String> {
        let query = render_document(record, false).map_err(|e| e.to_string())?;
        let vector = self
            .embedder
            .embed_queries(std::slice::from_ref(&query))
            .map_err(|e: EmbedError| e.to_string())?
            .pop()
            .ok_or("embedder returned nothing")?;
        let hits = self.index.search(&vector, k).map_err(|e| e.to_string())?;
        attach_snippets(hits, |id| train.get(id).copied()).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub parse_mode: ParseMode,
    /// 1 runs strictly one request at a time. Anything higher marks
    /// latency as unreliable.
    pub parallelism: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            parse_mode: ParseMode::Strict,
            parallelism: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub severity: u8,
    pub support: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub mean_total_ms: f64,
    pub median_total_ms: f64,
    pub p95_total_ms: f64,
    pub mean_retrieval_ms: f64,
    pub mean_generation_ms: f64,
    pub seconds_per_log: f64,
    /// False when requests overlapped.
    pub reliable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model: String,
    pub mode: String,
    pub k: Option<usize>,
    pub template_version: String,
    pub template_sha256: String,
    pub parse_mode: String,
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Lenient re-parse of the same raw outputs, reported for strict runs.
    pub secondary_lenient_accuracy: Option<f64>,
    pub parse_failures: usize,
    pub request_failures: usize,
    pub confusion_matrix: [[usize; 8]; 8],
    pub failures_by_label: [usize; 8],
    pub per_class: Vec<ClassMetrics>,
    pub latency: LatencyReport,
    pub mean_prompt_chars: f64,
    pub exemplar_ids: Vec<JsonId>,
    pub split_train_sha256: String,
    pub split_eval_sha256: String,
    pub index_sha256: Option<String>,
    pub manifest_sha256: String,
    pub started_at: String,
    pub finished_at: String,
}

impl EvaluationReport {
    pub fn accuracy_percent(&self) -> String {
        format!("{:.2}%", self.accuracy * 100.0)
    }
}

pub struct ExperimentOutput {
    pub report: EvaluationReport,
    pub results: Vec<InferenceResult>,
    pub manifest: RunManifest,
}

/// One line of the per-record audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultLine {
    pub record_id: JsonId,
    pub label: u8,
    pub raw_output: Option<String>,
    pub parsed: Option<u8>,
    pub failure: Option<FailureReason>,
    pub timings: Timings,
    pub prompt_chars: usize,
    pub output_chars: usize,
}

fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Classifies every eval record exactly once under one prompt
/// configuration and scores the run.
pub fn run_experiment(
    split: &EvalSplit,
    backend: &dyn ChatBackend,
    model: &ModelConfig,
    pcfg: &PromptConfig,
    retriever: Option<&Retriever<'_>>,
    options: RunOptions,
) -> Result<ExperimentOutput, EvaluationError> {
    pcfg.validate()?;
    if split.eval_labeled.is_empty() {
        return Err(EvaluationError::EmptyEvalSplit);
    }
    if split.eval_labeled.len() != split.eval_unlabeled.len()
        || split
            .eval_labeled
            .iter()
            .zip(&split.eval_unlabeled)
            .any(|(l, u)| l.id != u.id || u.severity.is_some() || l.severity.is_none())
    {
        return Err(EvaluationError::SplitMismatch(
            "labeled and unlabeled eval subsets do not line up".into(),
        ));
    }
    let train_by_id: BTreeMap<&RecordId, &LogRecord> =
        split.train.iter().map(|r| (&r.id, r)).collect();

    let mut index_sha256 = None;
    match pcfg.mode {
        PromptMode::Rag => {
            let retriever = retriever.ok_or(EvaluationError::MissingIndex)?;
            let expected = crate::hashing::parse_hex32(&split.train_sha256);
            if expected != Some(retriever.index.metadata().source_hash) {
                return Err(EvaluationError::SplitMismatch(
                    "index was not built from this training split".into(),
                ));
            }
            index_sha256 = Some(retriever.index_sha256());
        }
        PromptMode::FewShot => {
            for ex in &pcfg.exemplars {
                if train_by_id.get(&ex.id) != Some(&ex) {
                    return Err(EvaluationError::SplitMismatch(format!(
                        "exemplar {} is not a record of this training split",
                        ex.id
                    )));
                }
            }
        }
        PromptMode::ZeroShot => {}
    }

    let exemplar_ids: Vec<JsonId> = pcfg.exemplars.iter().map(|r| JsonId::from(&r.id)).collect();
    let k = (pcfg.mode == PromptMode::Rag).then_some(pcfg.k);
    let mut manifest = RunManifest::new(
        "run",
        json!({
            "model": model,
            "mode": pcfg.mode.as_str(),
            "k": k,
            "template_version": pcfg.template_version,
            "parse_mode": options.parse_mode.as_str(),
            "parallelism": options.parallelism,
            "exemplar_ids": exemplar_ids,
            "embedder": retriever.map(|r| r.embedder.describe()),
        }),
    );
    manifest.input_hashes.insert("split_train".into(), split.train_sha256.clone());
    manifest.input_hashes.insert("split_eval".into(), split.eval_sha256.clone());
    manifest.input_hashes.insert("templates".into(), template_hash());
    if let Some(h) = &index_sha256 {
        manifest.input_hashes.insert("index".into(), h.clone());
    }

    let started_at = now_rfc3339();
    let process = |i: usize| -> InferenceResult {
        let record = &split.eval_unlabeled[i];
        let t0 = Instant::now();
        let assembled: Result<AssembledPrompt, FailureReason> = match pcfg.mode {
            PromptMode::ZeroShot => Ok(build_zero_shot(record)),
            PromptMode::FewShot => build_few_shot(record, &pcfg.exemplars, &split.eval_ids)
                .map_err(|e| FailureReason::Retrieval(e.to_string())),
            PromptMode::Rag => retriever
                .expect("checked above")
                .retrieve(record, pcfg.k, &train_by_id)
                .and_then(|n| build_rag(record, &n).map_err(|e| e.to_string()))
                .map_err(FailureReason::Retrieval),
        };
        let retrieval_ms = match pcfg.mode {
            PromptMode::Rag => t0.elapsed().as_secs_f64() * 1000.0,
            _ => 0.0,
        };
        match assembled {
            Ok(p) => classify(record.id.clone(), &p, model, backend, options.parse_mode, retrieval_ms),
            Err(FailureReason::Retrieval(reason)) => {
                InferenceResult::retrieval_failure(record.id.clone(), reason, retrieval_ms)
            }
            Err(_) => unreachable!("assembly only fails with retrieval reasons"),
        }
    };

    let n = split.eval_unlabeled.len();
    let results: Vec<InferenceResult> = if options.parallelism <= 1 {
        (0..n).map(process).collect()
    } else {
        let slots: Vec<Mutex<Option<InferenceResult>>> = (0..n).map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        std::thread::scope(|scope| {
            for _ in 0..options.parallelism.min(n) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= n {
                        break;
                    }
                    *slots[i].lock().expect("slot lock") = Some(process(i));
                });
            }
        });
        slots
            .into_iter()
            .map(|s| s.into_inner().expect("slot lock").expect("every slot filled"))
            .collect()
    };
    let finished_at = now_rfc3339();

    let labels: Vec<SeverityLevel> = split
        .eval_labeled
        .iter()
        .map(|r| r.severity.expect("checked above"))
        .collect();
    let report = score(
        &results,
        &labels,
        ScoreContext {
            model: &model.model,
            pcfg,
            parse_mode: options.parse_mode,
            reliable_latency: options.parallelism <= 1,
            split,
            index_sha256,
            manifest_sha256: manifest.hash(),
            exemplar_ids,
            started_at,
            finished_at,
        },
    );
    Ok(ExperimentOutput {
        report,
        results,
        manifest,
    })
}

struct ScoreContext<'a> {
    model: &'a str,
    pcfg: &'a PromptConfig,
    parse_mode: ParseMode,
    reliable_latency: bool,
    split: &'a EvalSplit,
    index_sha256: Option<String>,
    manifest_sha256: String,
    exemplar_ids: Vec<JsonId>,
    started_at: String,
    finished_at: String,
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len();
    if n == 0 {
        0.0
    } else {
        values.sum::<f64>() / n as f64
    }
}

fn score(results: &[InferenceResult], labels: &[SeverityLevel], ctx: ScoreContext<'_>) -> EvaluationReport {
    let predictions: Vec<Option<SeverityLevel>> = results.iter().map(InferenceResult::prediction).collect();
    let accuracy = sevbench_core::accuracy(&predictions, labels).expect("one result per label");
    let matrix = ConfusionMatrix::from_pairs(predictions.iter().copied().zip(labels.iter().copied()));

    let secondary_lenient_accuracy = (ctx.parse_mode == ParseMode::Strict).then(|| {
        let lenient: Vec<Option<SeverityLevel>> = results
            .iter()
            .map(|r| {
                r.raw_output
                    .as_deref()
                    .and_then(|raw| parse_severity(raw, ParseMode::Lenient).ok())
            })
            .collect();
        sevbench_core::accuracy(&lenient, labels).expect("same length").value()
    });

    let totals: Vec<f64> = results.iter().map(|r| r.timings.total_ms).collect();
    let summary = LatencySummary::from_samples(&totals).expect("non-empty run");
    let latency = LatencyReport {
        mean_total_ms: summary.mean,
        median_total_ms: summary.median,
        p95_total_ms: summary.p95,
        mean_retrieval_ms: mean(results.iter().map(|r| r.timings.retrieval_ms)),
        mean_generation_ms: mean(results.iter().map(|r| r.timings.generation_ms)),
        seconds_per_log: summary.mean / 1000.0,
        reliable: ctx.reliable_latency,
    };

    let per_class = SeverityLevel::all()
        .map(|l| ClassMetrics {
            severity: l.value(),
            support: labels.iter().filter(|&&y| y == l).count(),
            precision: matrix.precision(l),
            recall: matrix.recall(l),
        })
        .collect();

    let parse_failures = results
        .iter()
        .filter(|r| matches!(&r.answer, Err(f) if f.is_parse()))
        .count();
    EvaluationReport {
        model: ctx.model.to_string(),
        mode: ctx.pcfg.mode.as_str().into(),
        k: (ctx.pcfg.mode == PromptMode::Rag).then_some(ctx.pcfg.k),
        template_version: ctx.pcfg.template_version.clone(),
        template_sha256: template_hash(),
        parse_mode: ctx.parse_mode.as_str().into(),
        n: labels.len(),
        correct: accuracy.correct,
        accuracy: accuracy.value(),
        secondary_lenient_accuracy,
        parse_failures,
        request_failures: matrix.failure_total() - parse_failures,
        confusion_matrix: matrix.counts,
        failures_by_label: matrix.failures,
        per_class,
        latency,
        mean_prompt_chars: mean(results.iter().map(|r| r.prompt_chars as f64)),
        exemplar_ids: ctx.exemplar_ids,
        split_train_sha256: ctx.split.train_sha256.clone(),
        split_eval_sha256: ctx.split.eval_sha256.clone(),
        index_sha256: ctx.index_sha256,
        manifest_sha256: ctx.manifest_sha256,
        started_at: ctx.started_at,
        finished_at: ctx.finished_at,
    }
}

/// One RAG run per depth over the same eval sequence, index and templates.
pub fn sweep_k(
    split: &EvalSplit,
    backend: &dyn ChatBackend,
    model: &ModelConfig,
    ks: &[usize],
    retriever: &Retriever<'_>,
    options: RunOptions,
) -> Result<Vec<ExperimentOutput>, EvaluationError> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(EvaluationError::InvalidKs);
    }
    ks.iter()
        .map(|&k| {
            let pcfg = PromptConfig {
                k,
                ..PromptConfig::new(PromptMode::Rag)
            };
            run_experiment(split, backend, model, &pcfg, Some(retriever), options)
        })
        .collect()
}

pub fn result_lines(results: &[InferenceResult], labels: &[LogRecord]) -> Vec<ResultLine> {
    results
        .iter()
        .zip(labels)
        .map(|(r, l)| ResultLine {
            record_id: JsonId::from(&r.record_id),
            label: l.severity.map_or(u8::MAX, |s| s.value()),
            raw_output: r.raw_output.clone(),
            parsed: r.prediction().map(|s| s.value()),
            failure: r.answer.as_ref().err().cloned(),
            timings: r.timings,
            prompt_chars: r.prompt_chars,
            output_chars: r.output_chars,
        })
        .collect()
}

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const RESULTS_JSONL: &str = "results.jsonl";
pub const RUN_MANIFEST: &str = "manifest.json";

/// Writes the report (JSON and table), the per-record audit log and the
/// run manifest into `dir`.
pub fn write_outputs(dir: &Path, output: &ExperimentOutput, split: &EvalSplit) -> Result<(), EvaluationError> {
    fs::create_dir_all(dir)?;
    write_json_new(&dir.join(RUN_MANIFEST), &output.manifest)?;
    let mut lines = String::new();
    for line in result_lines(&output.results, &split.eval_labeled) {
        lines.push_str(&serde_json::to_string(&line).expect("result line serializes"));
        lines.push('\n');
    }
    fs::write(dir.join(RESULTS_JSONL), lines)?;
    let json = serde_json::to_string_pretty(&output.report).expect("report serializes");
    fs::write(dir.join(REPORT_JSON), json + "\n")?;
    fs::write(dir.join(REPORT_TXT), render_table(std::slice::from_ref(&output.report)))?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<EvaluationReport, ManifestError> {
    crate::manifest::read_json(path)
}

/// Accuracy and seconds-per-log table, one row per report.
pub fn render_table(reports: &[EvaluationReport]) -> String {
    let method = |r: &EvaluationReport| match r.k {
        Some(k) if k != prompt::DEFAULT_K => format!("{} (k={k})", r.mode),
        _ => r.mode.clone(),
    };
    let model_w = reports.iter().map(|r| r.model.len()).max().unwrap_or(0).max(5);
    let method_w = reports.iter().map(|r| method(r).len()).max().unwrap_or(0).max(6);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<model_w$}  {:<method_w$}  {:>8}  {:>21}  {:>6}  {:>8}  {:>8}",
        "Model", "Method", "Accuracy", "Average (seconds/log)", "N", "Failures", "Parse"
    );
    let _ = writeln!(out, "{}", "-".repeat(model_w + method_w + 8 + 21 + 6 + 8 + 8 + 12));
    for r in reports {
        let latency = if r.latency.reliable {
            format!("{:.4}", r.latency.seconds_per_log)
        } else {
            format!("{:.4}*", r.latency.seconds_per_log)
        };
        let _ = writeln!(
            out,
            "{:<model_w$}  {:<method_w$}  {:>8}  {:>21}  {:>6}  {:>8}  {:>8}",
            r.model,
            method(r),
            r.accuracy_percent(),
            latency,
            r.n,
            r.parse_failures + r.request_failures,
            r.parse_mode
        );
    }
    if reports.iter().any(|r| !r.latency.reliable) {
        out.push_str("* latency measured with overlapping requests; not comparable\n");
    }
    out
}

/// CSV series for accuracy-by-method and latency-by-method charts.
pub fn render_csv(reports: &[EvaluationReport]) -> (String, String) {
    let mut accuracy = String::from("model,mode,k,accuracy,n\n");
    let mut latency = String::from(
        "model,mode,k,seconds_per_log,mean_retrieval_ms,mean_generation_ms,p95_total_ms,reliable\n",
    );
    for r in reports {
        let k = r.k.map(|k| k.to_string()).unwrap_or_default();
        let _ = writeln!(accuracy, "{},{},{},{:.6},{}", csv_field(&r.model), r.mode, k, r.accuracy, r.n);
        let _ = writeln!(
            latency,
            "{},{},{},{:.6},{:.3},{:.3},{:.3},{}",
            csv_field(&r.model),
            r.mode,
            k,
            r.latency.seconds_per_log,
            r.latency.mean_retrieval_ms,
            r.latency.mean_generation_ms,
            r.latency.p95_total_ms,
            r.latency.reliable
        );
    }
    (accuracy, latency)
}

fn csv_field(text: &str) -> String {
    if text.contains([',', '"', '\n']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

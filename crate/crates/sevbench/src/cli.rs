//! `sevbench` command line: argument parsing, config resolution and the
//! subcommand drivers. Usage errors exit 2; module errors exit 1 with a JSON
//! object on stderr.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use sevbench_core::parse::ParseMode;
use sevbench_core::prompt::{select_exemplars, DEFAULT_EXEMPLARS};
use sevbench_core::{
    compute_distribution, dedup, render_document, sample_corpus, stratified_split, FlatIndex,
    IndexMetadata, LevelSet, PromptConfig, PromptMode, SamplingPolicy, SeverityLevel,
    DEFAULT_DIM,
};

use crate::config::{pick, ConfigFile};
use crate::embed::{EmbeddingClient, HttpEmbedder, PrefixPair};
use crate::evaluation::{
    read_report, render_csv, render_table, run_experiment, sweep_k, write_outputs, EvalSplit,
    EvaluationReport, ExperimentOutput, Retriever, RunOptions, REPORT_JSON,
};
use crate::hashing::{records_hash, sha256_hex, template_hash};
use crate::inference::{backend_for, ModelConfig};
use crate::ingest::{parse_journal_export, read_records, write_records};
use crate::manifest::{read_split, write_split, RunManifest, StoredSplit, MANIFEST_FILE};
use crate::index_file;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_RATIO: f64 = 0.8;

#[derive(Debug, Parser)]
#[command(name = "sevbench", version, about = "Syslog severity classification benchmark")]
pub struct Cli {
    /// TOML config file; flags and environment variables take precedence.
    #[arg(long, global = true, env = "SEVBENCH_CONFIG")]
    pub config: Option<PathBuf>,
    /// Print the resolved manifest and exit without touching any file.
    #[arg(long, global = true)]
    pub dry_run: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize a journal JSON export into canonical records.
    Ingest(IngestArgs),
    /// Draw the benchmark sample and drop duplicates.
    Sample(SampleArgs),
    /// Stratified train/eval split with a manifest.
    Split(SplitArgs),
    /// Embed the training split into a flat index, or show index stats.
    Index(IndexArgs),
    /// Classify the eval split under one prompting strategy.
    Run(RunArgs),
    /// RAG runs over several retrieval depths.
    SweepK(SweepArgs),
    /// Render saved reports.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Drop duplicate entries (all fields but id equal), first occurrence wins.
    #[arg(long)]
    pub dedup: bool,
    /// Where to write rejected entries as JSON lines.
    #[arg(long)]
    pub rejects: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 50_000)]
    pub target: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    pub retain: Vec<u8>,
    #[arg(long, value_delimiter = ',', default_value = "5,6,7")]
    pub even: Vec<u8>,
    /// Keep duplicates in the sample.
    #[arg(long)]
    pub no_dedup: bool,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["stats", "split"])))]
pub struct IndexArgs {
    /// Print dim, count and source hash of an existing index file.
    #[arg(long, value_name = "INDEX")]
    pub stats: Option<PathBuf>,
    /// Split directory whose training records get indexed.
    #[arg(long, requires = "output")]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub embed: EmbedArgs,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// Embedding model name, or `mock` for the built-in hashed embedder.
    #[arg(long, env = "SEVBENCH_EMBED_MODEL")]
    pub embed_model: Option<String>,
    #[arg(long, env = "SEVBENCH_EMBED_ENDPOINT")]
    pub embed_endpoint: Option<String>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub embed_batch_size: Option<usize>,
    #[arg(long)]
    pub embed_parallel: Option<usize>,
    #[arg(long)]
    pub embed_document_prefix: Option<String>,
    #[arg(long)]
    pub embed_query_prefix: Option<String>,
    #[arg(long, env = "SEVBENCH_EMBED_API_KEY", hide = true, hide_env_values = true)]
    pub embed_api_key: Option<String>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Served model name, or mock:fixed=<text>, mock:sleep=<ms>[:<answer>], mock:majority.
    #[arg(long, env = "SEVBENCH_MODEL")]
    pub model: Option<String>,
    /// OpenAI-compatible base URL, e.g. http://127.0.0.1:1234/v1.
    #[arg(long, env = "SEVBENCH_ENDPOINT")]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub top_p: Option<f64>,
    #[arg(long)]
    pub max_output_tokens: Option<u32>,
    #[arg(long)]
    pub reasoning_budget: Option<u32>,
    #[arg(long)]
    pub timeout_secs: Option<f64>,
    #[arg(long, env = "SEVBENCH_API_KEY", hide = true, hide_env_values = true)]
    pub api_key: Option<String>,
}

#[derive(Debug, Args)]
pub struct CommonRunArgs {
    /// Split directory written by `split`.
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long)]
    pub parse_mode: Option<ParseMode>,
    /// Concurrent requests. Anything above 1 flags latency as unreliable.
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    /// Directory for report.json, report.txt, results.jsonl and manifest.json.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub embed: EmbedArgs,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub mode: PromptMode,
    /// Retrieval depth for rag.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Number of few-shot exemplars drawn from the training split.
    #[arg(long)]
    pub exemplars: Option<usize>,
    #[arg(long)]
    pub exemplar_seed: Option<u64>,
    #[command(flatten)]
    pub common: CommonRunArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub ks: Vec<usize>,
    #[arg(long)]
    pub index: PathBuf,
    #[command(flatten)]
    pub common: CommonRunArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Table,
    Json,
    CsvAccuracy,
    CsvLatency,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// report.json files or run directories containing one.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
    pub format: ReportFormat,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
    pub usage: bool,
}

impl CliError {
    fn new(kind: &'static str, e: impl Display) -> Self {
        Self {
            kind,
            message: e.to_string(),
            usage: false,
        }
    }

    fn usage(message: impl Display) -> Self {
        Self {
            kind: "usage",
            message: message.to_string(),
            usage: true,
        }
    }

    pub fn to_json(&self) -> String {
        json!({"error": {"kind": self.kind, "message": self.message}}).to_string()
    }
}

macro_rules! error_kind {
    ($($ty:ty => $kind:literal),* $(,)?) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::new($kind, e)
            }
        })*
    };
}

error_kind! {
    std::io::Error => "io",
    crate::ingest::IngestError => "ingest",
    sevbench_core::DatasetError => "dataset",
    crate::manifest::ManifestError => "manifest",
    crate::index_file::IndexFileError => "index",
    sevbench_core::IndexError => "index",
    crate::embed::EmbedError => "embedding",
    crate::inference::ConfigError => "config",
    crate::config::ConfigFileError => "config",
    crate::evaluation::EvaluationError => "evaluation",
    sevbench_core::PromptError => "prompt",
    sevbench_core::RenderError => "render",
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn main_with(args: impl IntoIterator<Item = OsString>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = err.write_all(text.as_bytes());
                return 2;
            }
            let _ = out.write_all(text.as_bytes());
            return 0;
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{}", e.to_json());
            if e.usage {
                2
            } else {
                1
            }
        }
    }
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let ctx = Ctx {
        file,
        dry_run: cli.dry_run,
    };
    match &cli.command {
        Command::Ingest(a) => ctx.ingest(a, out),
        Command::Sample(a) => ctx.sample(a, out),
        Command::Split(a) => ctx.split(a, out),
        Command::Index(a) => ctx.index(a, out),
        Command::Run(a) => ctx.run(a, out),
        Command::SweepK(a) => ctx.sweep(a, out),
        Command::Report(a) => report(a, out),
    }
}

fn emit(out: &mut dyn Write, value: &Value) -> Result<(), CliError> {
    writeln!(out, "{}", serde_json::to_string_pretty(value).expect("json value serializes"))?;
    Ok(())
}

fn emit_manifest(out: &mut dyn Write, manifest: &RunManifest) -> Result<(), CliError> {
    writeln!(out, "{}", manifest.to_json())?;
    Ok(())
}

fn file_hash(path: &Path) -> Result<String, CliError> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| {
        CliError::new("io", format!("{}: {e}", path.display()))
    })?))
}

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

fn levels(values: &[u8]) -> Result<LevelSet, CliError> {
    values
        .iter()
        .map(|&v| SeverityLevel::new(v).map_err(CliError::usage))
        .collect()
}

fn distribution_json(counts: &[usize; SeverityLevel::COUNT]) -> Value {
    let map: BTreeMap<String, usize> = counts.iter().enumerate().map(|(i, c)| (i.to_string(), *c)).collect();
    json!(map)
}

struct Ctx {
    file: ConfigFile,
    dry_run: bool,
}

struct ResolvedEmbedder {
    client: EmbeddingClient,
    snapshot: Value,
}

impl Ctx {
    fn seed(&self, flag: Option<u64>) -> u64 {
        pick(flag, self.file.experiment.seed, DEFAULT_SEED)
    }

    fn model_config(&self, a: &ModelArgs) -> Result<ModelConfig, CliError> {
        let d = ModelConfig::default();
        let f = &self.file.model;
        let cfg = ModelConfig {
            endpoint: pick(a.endpoint.clone(), f.endpoint.clone(), d.endpoint),
            model: pick(a.model.clone(), f.model.clone(), d.model),
            temperature: pick(a.temperature, f.temperature, d.temperature),
            top_p: pick(a.top_p, f.top_p, d.top_p),
            max_output_tokens: pick(a.max_output_tokens, f.max_output_tokens, d.max_output_tokens),
            reasoning_budget: a.reasoning_budget.or(f.reasoning_budget),
            timeout_secs: pick(a.timeout_secs, f.timeout_secs, d.timeout_secs),
        };
        cfg.validate().map_err(CliError::usage)?;
        Ok(cfg)
    }

    fn embedder(&self, a: &EmbedArgs) -> Result<ResolvedEmbedder, CliError> {
        let f = &self.file.embedding;
        let model = pick(a.embed_model.clone(), f.model.clone(), "mock".into());
        let dim = pick(a.embed_dim, f.dim, DEFAULT_DIM);
        if dim == 0 {
            return Err(CliError::usage("embed dim must be at least 1"));
        }
        let endpoint = pick(a.embed_endpoint.clone(), f.endpoint.clone(), "http://127.0.0.1:1234/v1".into());
        let timeout = pick(None, f.timeout_secs, 120.0);
        if !timeout.is_finite() || timeout <= 0.0 {
            return Err(CliError::usage(format!("embedding timeout must be positive, got {timeout}")));
        }
        let mut client = if model == "mock" {
            EmbeddingClient::mock(dim)
        } else {
            let key = a.embed_api_key.clone().or_else(|| std::env::var("SEVBENCH_API_KEY").ok());
            EmbeddingClient::new(Box::new(HttpEmbedder::new(
                &endpoint,
                &model,
                dim,
                key,
                Duration::from_secs_f64(timeout),
            )?))
        };
        client.batch_size = pick(a.embed_batch_size, f.batch_size, client.batch_size).max(1);
        client.parallelism = pick(a.embed_parallel, f.parallelism, client.parallelism).max(1);
        let doc = a.embed_document_prefix.clone().or(f.document_prefix.clone());
        let query = a.embed_query_prefix.clone().or(f.query_prefix.clone());
        if doc.is_some() || query.is_some() {
            client.prefixes = Some(PrefixPair {
                document: doc.unwrap_or_default(),
                query: query.unwrap_or_default(),
            });
        }
        let snapshot = json!({
            "model": model,
            "endpoint": (model != "mock").then_some(endpoint),
            "dim": dim,
            "batch_size": client.batch_size,
            "parallelism": client.parallelism,
            "prefixes": client.prefixes.as_ref().map(|p| json!({"document": p.document, "query": p.query})),
        });
        Ok(ResolvedEmbedder { client, snapshot })
    }

    fn ingest(&self, a: &IngestArgs, out: &mut dyn Write) -> Result<(), CliError> {
        let mut manifest = RunManifest::new(
            "ingest",
            json!({"input": path_str(&a.input), "output": path_str(&a.output), "dedup": a.dedup}),
        );
        manifest.input_hashes.insert("input".into(), file_hash(&a.input)?);
        if self.dry_run {
            return emit_manifest(out, &manifest);
        }
        let bytes = fs::read(&a.input)?;
        let parsed = parse_journal_export(&bytes)?;
        let (records, dropped) = if a.dedup {
            let d = dedup(parsed.records);
            (d.kept, d.dropped)
        } else {
            (parsed.records, 0)
        };
        write_records(&a.output, &records)?;
        if let Some(path) = &a.rejects {
            let mut text = String::new();
            for m in &parsed.malformed {
                text.push_str(&serde_json::to_string(m).expect("serializes"));
                text.push('\n');
            }
            fs::write(path, text)?;
        }
        emit(
            out,
            &json!({
                "records": records.len(),
                "malformed": parsed.malformed.len(),
                "duplicates_dropped": dropped,
                "output": path_str(&a.output),
                "records_sha256": records_hash(&records),
                "manifest_sha256": manifest.hash(),
            }),
        )
    }

    fn sample(&self, a: &SampleArgs, out: &mut dyn Write) -> Result<(), CliError> {
        let policy = SamplingPolicy {
            total_target: a.target,
            fully_retained_levels: levels(&a.retain)?,
            evenly_sampled_levels: levels(&a.even)?,
            seed: self.seed(a.seed),
        };
        let mut manifest = RunManifest::new(
            "sample",
            json!({
                "input": path_str(&a.input),
                "output": path_str(&a.output),
                "total_target": policy.total_target,
                "fully_retained_levels": a.retain,
                "evenly_sampled_levels": a.even,
                "seed": policy.seed,
                "dedup": !a.no_dedup,
            }),
        );
        manifest.input_hashes.insert("input".into(), file_hash(&a.input)?);
        if self.dry_run {
            return emit_manifest(out, &manifest);
        }
        let records = read_records(&a.input)?;
        let sampled = sample_corpus(&records, &policy)?;
        let drawn = sampled.len();
        let (kept, dropped) = if a.no_dedup {
            (sampled, 0)
        } else {
            let d = dedup(sampled);
            (d.kept, d.dropped)
        };
        write_records(&a.output, &kept)?;
        let dist = compute_distribution(&kept)?;
        emit(
            out,
            &json!({
                "sampled": drawn,
                "duplicates_dropped": dropped,
                "records": kept.len(),
                "distribution": distribution_json(&dist.counts),
                "records_sha256": records_hash(&kept),
                "manifest_sha256": manifest.hash(),
            }),
        )
    }

    fn split(&self, a: &SplitArgs, out: &mut dyn Write) -> Result<(), CliError> {
        let ratio = pick(a.ratio, self.file.experiment.ratio, DEFAULT_RATIO);
        let seed = self.seed(a.seed);
        let mut manifest = RunManifest::new(
            "split",
            json!({"input": path_str(&a.input), "out_dir": path_str(&a.out_dir), "ratio": ratio, "seed": seed}),
        );
        manifest.input_hashes.insert("input".into(), file_hash(&a.input)?);
        if self.dry_run {
            return emit_manifest(out, &manifest);
        }
        let records = read_records(&a.input)?;
        let split = stratified_split(&records, ratio, seed)?;
        let written = write_split(&a.out_dir, &split, None)?;
        emit(
            out,
            &json!({
                "train": written.train_count,
                "eval": written.eval_count,
                "strata": written.strata,
                "train_sha256": written.train_sha256,
                "eval_sha256": written.eval_sha256,
                "manifest": path_str(&a.out_dir.join(MANIFEST_FILE)),
            }),
        )
    }

    fn index(&self, a: &IndexArgs, out: &mut dyn Write) -> Result<(), CliError> {
        if let Some(path) = &a.stats {
            let h = index_file::stats(path)?;
            return emit(
                out,
                &json!({
                    "version": h.version,
                    "dim": h.dim,
                    "count": h.count,
                    "built_at": h.metadata.built_at,
                    "source_sha256": hex::encode(h.metadata.source_hash),
                    "checksum": hex::encode(h.checksum),
                }),
            );
        }
        let (Some(split_dir), Some(output)) = (&a.split, &a.output) else {
            return Err(CliError::usage("index needs --split and --output, or --stats"));
        };
        let emb = self.embedder(&a.embed)?;
        let split = read_split(split_dir)?;
        let mut manifest = RunManifest::new(
            "index",
            json!({"split": path_str(split_dir), "output": path_str(output), "embedder": emb.snapshot}),
        );
        manifest.input_hashes.insert("split_train".into(), split.manifest.train_sha256.clone());
        if self.dry_run {
            return emit_manifest(out, &manifest);
        }
        let source_hash = crate::hashing::parse_hex32(&split.manifest.train_sha256)
            .ok_or_else(|| CliError::new("manifest", "split manifest has a malformed train hash"))?;
        let docs = split
            .train
            .iter()
            .map(|r| render_document(r, true))
            .collect::<Result<Vec<_>, _>>()?;
        let vectors = emb.client.embed_documents(&docs)?;
        let built_at = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        let index = FlatIndex::build(
            split.train.iter().map(|r| r.id.clone()).zip(vectors),
            IndexMetadata { built_at, source_hash },
        )?;
        index_file::save(&index, output)?;
        emit(
            out,
            &json!({
                "dim": index.dim(),
                "count": index.len(),
                "output": path_str(output),
                "index_sha256": file_hash(output)?,
                "source_sha256": split.manifest.train_sha256,
                "manifest_sha256": manifest.hash(),
            }),
        )
    }

    fn run_options(&self, c: &CommonRunArgs) -> Result<RunOptions, CliError> {
        let parse_mode = match c.parse_mode {
            Some(m) => m,
            None => match &self.file.experiment.parse_mode {
                Some(s) => s.parse().map_err(CliError::usage)?,
                None => ParseMode::Strict,
            },
        };
        if c.parallel == 0 {
            return Err(CliError::usage("--parallel must be at least 1"));
        }
        Ok(RunOptions {
            parse_mode,
            parallelism: c.parallel,
        })
    }

    fn dry_manifest(
        &self,
        command: &str,
        config: Value,
        split: &StoredSplit,
        index: Option<&Path>,
    ) -> Result<RunManifest, CliError> {
        let mut m = RunManifest::new(command, config);
        m.input_hashes.insert("split_train".into(), split.manifest.train_sha256.clone());
        m.input_hashes.insert("split_eval".into(), split.manifest.eval_sha256.clone());
        m.input_hashes.insert("templates".into(), template_hash());
        if let Some(path) = index {
            m.input_hashes.insert("index_file".into(), file_hash(path)?);
        }
        Ok(m)
    }

    fn run(&self, a: &RunArgs, out: &mut dyn Write) -> Result<(), CliError> {
        let c = &a.common;
        let model = self.model_config(&c.model)?;
        let options = self.run_options(c)?;
        let stored = read_split(&c.split)?;
        let mut pcfg = PromptConfig::new(a.mode);
        pcfg.k = pick(a.k, self.file.experiment.k, pcfg.k);
        let mut embed_snapshot = Value::Null;
        let mut index = None;
        let mut embedder = None;
        match a.mode {
            PromptMode::Rag => {
                let path = a.index.as_ref().ok_or_else(|| CliError::usage("--mode rag needs --index"))?;
                let emb = self.embedder(&c.embed)?;
                embed_snapshot = emb.snapshot;
                if !self.dry_run {
                    index = Some(index_file::load_expecting(path, emb.client.dim())?);
                }
                embedder = Some(emb.client);
            }
            PromptMode::FewShot => {
                let count = pick(a.exemplars, self.file.experiment.exemplars, DEFAULT_EXEMPLARS);
                let seed = self.seed(a.exemplar_seed);
                pcfg.exemplars = select_exemplars(&stored.train, count, seed)?;
            }
            PromptMode::ZeroShot => {}
        }
        if self.dry_run {
            let manifest = self.dry_manifest(
                "run",
                json!({
                    "split": path_str(&c.split),
                    "index": a.index.as_deref().map(path_str),
                    "model": model,
                    "mode": a.mode.as_str(),
                    "k": (a.mode == PromptMode::Rag).then_some(pcfg.k),
                    "template_version": pcfg.template_version,
                    "parse_mode": options.parse_mode.as_str(),
                    "parallelism": options.parallelism,
                    "exemplar_ids": pcfg.exemplars.iter().map(|r| crate::manifest::JsonId::from(&r.id)).collect::<Vec<_>>(),
                    "embedder": embed_snapshot,
                    "out_dir": c.out_dir.as_deref().map(path_str),
                }),
                &stored,
                a.index.as_deref(),
            )?;
            return emit_manifest(out, &manifest);
        }
        let backend = backend_for(&model, c.model.api_key.clone()).map_err(|e| CliError::new("config", e))?;
        let split = EvalSplit::from(stored);
        let retriever = match (&index, &embedder) {
            (Some(index), Some(embedder)) => Some(Retriever { index, embedder }),
            _ => None,
        };
        let output = run_experiment(&split, backend.as_ref(), &model, &pcfg, retriever.as_ref(), options)?;
        finish(out, c.out_dir.as_deref(), &[output], &split, false)
    }

    fn sweep(&self, a: &SweepArgs, out: &mut dyn Write) -> Result<(), CliError> {
        let c = &a.common;
        if a.ks.contains(&0) {
            return Err(CliError::usage("--ks entries must be at least 1"));
        }
        let model = self.model_config(&c.model)?;
        let options = self.run_options(c)?;
        let stored = read_split(&c.split)?;
        let emb = self.embedder(&c.embed)?;
        if self.dry_run {
            let manifest = self.dry_manifest(
                "sweep-k",
                json!({
                    "split": path_str(&c.split),
                    "index": path_str(&a.index),
                    "model": model,
                    "mode": PromptMode::Rag.as_str(),
                    "ks": a.ks,
                    "parse_mode": options.parse_mode.as_str(),
                    "parallelism": options.parallelism,
                    "embedder": emb.snapshot,
                    "out_dir": c.out_dir.as_deref().map(path_str),
                }),
                &stored,
                Some(&a.index),
            )?;
            return emit_manifest(out, &manifest);
        }
        let index = index_file::load_expecting(&a.index, emb.client.dim())?;
        let backend = backend_for(&model, c.model.api_key.clone()).map_err(|e| CliError::new("config", e))?;
        let split = EvalSplit::from(stored);
        let retriever = Retriever {
            index: &index,
            embedder: &emb.client,
        };
        let outputs = sweep_k(&split, backend.as_ref(), &model, &a.ks, &retriever, options)?;
        finish(out, c.out_dir.as_deref(), &outputs, &split, true)
    }
}

fn finish(
    out: &mut dyn Write,
    dir: Option<&Path>,
    outputs: &[ExperimentOutput],
    split: &EvalSplit,
    per_k: bool,
) -> Result<(), CliError> {
    if let Some(dir) = dir {
        for o in outputs {
            let target = match (per_k, o.report.k) {
                (true, Some(k)) => dir.join(format!("k{k}")),
                _ => dir.to_path_buf(),
            };
            write_outputs(&target, o, split)?;
        }
    }
    let reports: Vec<EvaluationReport> = outputs.iter().map(|o| o.report.clone()).collect();
    write!(out, "{}", render_table(&reports))?;
    Ok(())
}

fn report(a: &ReportArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let reports = a
        .inputs
        .iter()
        .map(|p| {
            let path = if p.is_dir() { p.join(REPORT_JSON) } else { p.clone() };
            read_report(&path)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let text = match a.format {
        ReportFormat::Table => render_table(&reports),
        ReportFormat::Json => serde_json::to_string_pretty(&reports).expect("reports serialize") + "\n",
        ReportFormat::CsvAccuracy => render_csv(&reports).0,
        ReportFormat::CsvLatency => render_csv(&reports).1,
    };
    out.write_all(text.as_bytes())?;
    Ok(())
}

//! Allocation-only core of the syslog severity benchmark.
//!
//! Everything in here is pure: record normalization and deduplication,
//! corpus sampling and stratified splitting, key-value document rendering,
//! the offline hashed embedder, the exact flat L2 index, prompt assembly,
//! answer parsing and scoring. IO, HTTP and file formats live in the
//! `sevbench` crate.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod dataset;
pub mod dedup;
pub mod embedding;
pub mod index;
pub mod metrics;
pub mod parse;
pub mod prompt;
pub mod record;
pub mod render;
pub mod rng;
pub mod severity;

pub use dataset::{
    compute_distribution, sample_corpus, stratified_split, strip_labels, DatasetError,
    DatasetSplit, DistributionReport, LevelSet, SamplingPolicy, StratumCounts,
};
pub use dedup::{dedup, DedupOutcome};
pub use embedding::{mock_embed, EmbeddingError, EmbeddingVector, DEFAULT_DIM};
pub use index::{attach_snippets, FlatIndex, Hit, IndexError, IndexMetadata, RetrievedNeighbor};
pub use metrics::{accuracy, majority_label, Accuracy, ConfusionMatrix, LatencySummary, MetricsError, Prediction};
pub use parse::{parse_severity, ParseFailure, ParseMode};
pub use prompt::{
    build_few_shot, build_rag, build_zero_shot, select_exemplars, AssembledPrompt, PromptConfig,
    PromptError, PromptMode,
};
pub use record::{EntryError, FieldValue, LogRecord, RawEntry, RecordId, Timestamp};
pub use render::{render_document, DocumentText, RenderError};
pub use severity::{SeverityLevel, SeverityError};

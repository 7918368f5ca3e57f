//! Split and run manifests.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sevbench_core::dataset::LevelSet;
use sevbench_core::{rng, DatasetSplit, LogRecord, RecordId, SamplingPolicy, SeverityLevel};
use thiserror::Error;

use crate::hashing::{records_hash, sha256_hex};
use crate::ingest::{read_records, write_records, IngestError};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const TRAIN_FILE: &str = "train.jsonl";
pub const EVAL_FILE: &str = "eval.jsonl";
pub const EVAL_UNLABELED_FILE: &str = "eval_unlabeled.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{0}: content hash does not match the split manifest")]
    HashMismatch(PathBuf),
    #[error("manifest {0} already exists and manifests are never overwritten")]
    AlreadyExists(PathBuf),
    #[error("manifest {path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Records(#[from] IngestError),
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// JSON form of a record id: a number or a string, as exported.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum JsonId {
    Int(i64),
    Str(String),
}

impl From<&RecordId> for JsonId {
    fn from(id: &RecordId) -> Self {
        match id {
            RecordId::Int(v) => JsonId::Int(*v),
            RecordId::Str(s) => JsonId::Str(s.clone()),
        }
    }
}

impl From<JsonId> for RecordId {
    fn from(id: JsonId) -> Self {
        match id {
            JsonId::Int(v) => RecordId::Int(v),
            JsonId::Str(s) => RecordId::Str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySnapshot {
    pub total_target: usize,
    pub fully_retained_levels: Vec<u8>,
    pub evenly_sampled_levels: Vec<u8>,
    pub seed: u64,
}

impl From<&SamplingPolicy> for PolicySnapshot {
    fn from(p: &SamplingPolicy) -> Self {
        let values = |set: &LevelSet| set.iter().map(|l| l.value()).collect();
        Self {
            total_target: p.total_target,
            fully_retained_levels: values(&p.fully_retained_levels),
            evenly_sampled_levels: values(&p.evenly_sampled_levels),
            seed: p.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumEntry {
    pub severity: u8,
    pub train: usize,
    pub eval: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub tool_version: String,
    pub rng_algorithm: String,
    pub seed: u64,
    pub ratio: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sampling_policy: Option<PolicySnapshot>,
    pub train_count: usize,
    pub eval_count: usize,
    pub strata: Vec<StratumEntry>,
    pub train_sha256: String,
    pub eval_sha256: String,
    pub eval_unlabeled_sha256: String,
    pub eval_ids: Vec<JsonId>,
}

impl SplitManifest {
    pub fn describe(split: &DatasetSplit, policy: Option<&SamplingPolicy>) -> Self {
        Self {
            tool_version: TOOL_VERSION.into(),
            rng_algorithm: rng::ALGORITHM.into(),
            seed: split.seed,
            ratio: split.ratio,
            sampling_policy: policy.map(PolicySnapshot::from),
            train_count: split.train.len(),
            eval_count: split.eval_labeled.len(),
            strata: SeverityLevel::all()
                .map(|l| StratumEntry {
                    severity: l.value(),
                    train: split.strata[l.index()].train,
                    eval: split.strata[l.index()].eval,
                })
                .collect(),
            train_sha256: records_hash(&split.train),
            eval_sha256: records_hash(&split.eval_labeled),
            eval_unlabeled_sha256: records_hash(&split.eval_unlabeled),
            eval_ids: split.eval_labeled.iter().map(|r| JsonId::from(&r.id)).collect(),
        }
    }

    pub fn eval_id_set(&self) -> std::collections::BTreeSet<RecordId> {
        self.eval_ids.iter().cloned().map(RecordId::from).collect()
    }
}

/// A split read back from disk with every subset verified against its
/// manifest hash.
#[derive(Debug, Clone)]
pub struct StoredSplit {
    pub manifest: SplitManifest,
    pub train: Vec<LogRecord>,
    pub eval_labeled: Vec<LogRecord>,
    pub eval_unlabeled: Vec<LogRecord>,
}

pub fn write_split(
    dir: &Path,
    split: &DatasetSplit,
    policy: Option<&SamplingPolicy>,
) -> Result<SplitManifest, ManifestError> {
    fs::create_dir_all(dir)?;
    let manifest = SplitManifest::describe(split, policy);
    write_json_new(&dir.join(MANIFEST_FILE), &manifest)?;
    write_records(&dir.join(TRAIN_FILE), &split.train)?;
    write_records(&dir.join(EVAL_FILE), &split.eval_labeled)?;
    write_records(&dir.join(EVAL_UNLABELED_FILE), &split.eval_unlabeled)?;
    Ok(manifest)
}

pub fn read_split(dir: &Path) -> Result<StoredSplit, ManifestError> {
    let manifest: SplitManifest = read_json(&dir.join(MANIFEST_FILE))?;
    let load = |name: &str, expected: &str| -> Result<Vec<LogRecord>, ManifestError> {
        let path = dir.join(name);
        let records = read_records(&path)?;
        if records_hash(&records) != expected {
            return Err(ManifestError::HashMismatch(path));
        }
        Ok(records)
    };
    Ok(StoredSplit {
        train: load(TRAIN_FILE, &manifest.train_sha256)?,
        eval_labeled: load(EVAL_FILE, &manifest.eval_sha256)?,
        eval_unlabeled: load(EVAL_UNLABELED_FILE, &manifest.eval_unlabeled_sha256)?,
        manifest,
    })
}

/// Snapshot of everything that produced a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub input_hashes: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            tool_version: TOOL_VERSION.into(),
            command: command.into(),
            config,
            input_hashes: BTreeMap::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.to_json().as_bytes())
    }
}

/// Writes pretty JSON to a path that must not exist yet.
pub fn write_json_new<T: Serialize>(path: &Path, value: &T) -> Result<(), ManifestError> {
    let mut file = match fs::OpenOptions::new().write(true).create_new(true).open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
            return Err(ManifestError::AlreadyExists(path.to_path_buf()))
        }
        Err(e) => return Err(e.into()),
    };
    let text = serde_json::to_string_pretty(value).expect("manifest serializes");
    file.write_all(text.as_bytes())?;
    file.write_all(b"\n")?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ManifestError> {
    let text = fs::read_to_string(path).map_err(|source| ManifestError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ManifestError::Json {
        path: path.to_path_buf(),
        source,
    })
}

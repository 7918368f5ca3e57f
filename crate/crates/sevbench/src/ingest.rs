//! Journal export parsing and the canonical one-record-per-line file.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sevbench_core::{EntryError, FieldValue, LogRecord, RawEntry, RecordId};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("input contains no entries")]
    EmptyInput,
    #[error("input is not a valid JSON array: {0}")]
    Array(serde_json::Error),
    #[error("{path}: line {line}: {reason}")]
    Canonical {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("{path}: {source}")]
    Read { path: String, source: io::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A rejected entry and the 1-based line (or array element) it came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MalformedEntry {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct IngestOutcome {
    pub records: Vec<LogRecord>,
    pub malformed: Vec<MalformedEntry>,
}

/// Accepts newline-delimited JSON objects or a single JSON array of
/// objects. Bad entries are collected, never fatal.
pub fn parse_journal_export(input: &[u8]) -> Result<IngestOutcome, IngestError> {
    let first = input.iter().find(|b| !b.is_ascii_whitespace());
    match first {
        None => Err(IngestError::EmptyInput),
        Some(b'[') => parse_array(input),
        Some(_) => parse_lines(input),
    }
}

fn parse_array(input: &[u8]) -> Result<IngestOutcome, IngestError> {
    let values: Vec<Value> = serde_json::from_slice(input).map_err(IngestError::Array)?;
    if values.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    let mut outcome = IngestOutcome::default();
    for (i, value) in values.into_iter().enumerate() {
        outcome.push(i + 1, entry_from_value(value));
    }
    Ok(outcome)
}

fn parse_lines(input: &[u8]) -> Result<IngestOutcome, IngestError> {
    let mut outcome = IngestOutcome::default();
    let mut seen = false;
    for (i, raw) in input.split(|&b| b == b'\n').enumerate() {
        if raw.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        seen = true;
        let entry = std::str::from_utf8(raw)
            .map_err(|e| format!("invalid UTF-8: {e}"))
            .and_then(|line| serde_json::from_str::<Value>(line).map_err(|e| format!("invalid JSON: {e}")))
            .and_then(entry_from_value);
        outcome.push(i + 1, entry);
    }
    if !seen {
        return Err(IngestError::EmptyInput);
    }
    Ok(outcome)
}

impl IngestOutcome {
    fn push(&mut self, line: usize, entry: Result<RawEntry, String>) {
        let normalized = entry.and_then(|e| e.normalize(line).map_err(|e: EntryError| e.to_string()));
        match normalized {
            Ok(record) => self.records.push(record),
            Err(reason) => self.malformed.push(MalformedEntry { line, reason }),
        }
    }
}

fn field(value: Value) -> FieldValue {
    match value {
        Value::Null => FieldValue::Null,
        Value::Bool(b) => FieldValue::Bool(b),
        Value::Number(n) => match n.as_i64() {
            Some(i) => FieldValue::Int(i),
            None => FieldValue::Float(n.as_f64().unwrap_or(f64::NAN)),
        },
        Value::String(s) => FieldValue::Str(s),
        Value::Array(items) => {
            let bytes: Option<Vec<u8>> = items
                .iter()
                .map(|v| v.as_u64().and_then(|b| u8::try_from(b).ok()))
                .collect();
            match bytes {
                Some(bytes) => FieldValue::Bytes(bytes),
                None => FieldValue::Other(Value::Array(items).to_string()),
            }
        }
        other @ Value::Object(_) => FieldValue::Other(other.to_string()),
    }
}

fn entry_from_value(value: Value) -> Result<RawEntry, String> {
    let Value::Object(mut map) = value else {
        return Err("entry is not a JSON object".into());
    };
    let mut take = |key: &str| map.remove(key).map(field);
    Ok(RawEntry {
        id: take("id"),
        hostname: take("hostname"),
        ip: take("ip"),
        comm: take("comm"),
        cmdline: take("cmdline"),
        exe: take("exe"),
        message: take("message"),
        selinux_context: take("selinux_context"),
        systemd_unit: take("systemd_unit"),
        systemd_slice: take("systemd_slice"),
        realtime_datetime: take("realtime_datetime"),
        priority: take("priority"),
    })
}

#[derive(Serialize)]
#[serde(untagged)]
enum CanonicalId<'a> {
    Int(i64),
    Str(&'a str),
}

#[derive(Serialize)]
struct CanonicalRecord<'a> {
    id: CanonicalId<'a>,
    #[serde(skip_serializing_if = "Option::is_none")]
    hostname: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ip: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    comm: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cmdline: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    exe: Option<&'a str>,
    message: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    selinux_context: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    systemd_unit: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    systemd_slice: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    realtime_datetime: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    priority: Option<u8>,
}

/// One canonical JSON object, fields in journal order, integer priority.
pub fn to_canonical_json(record: &LogRecord) -> String {
    let canonical = CanonicalRecord {
        id: match &record.id {
            RecordId::Int(v) => CanonicalId::Int(*v),
            RecordId::Str(s) => CanonicalId::Str(s),
        },
        hostname: record.hostname.as_deref(),
        ip: record.ip.as_deref(),
        comm: record.comm.as_deref(),
        cmdline: record.cmdline.as_deref(),
        exe: record.exe.as_deref(),
        message: &record.message,
        selinux_context: record.selinux_context.as_deref(),
        systemd_unit: record.systemd_unit.as_deref(),
        systemd_slice: record.systemd_slice.as_deref(),
        realtime_datetime: record.realtime_datetime.map(|t| t.to_string()),
        priority: record.severity.map(|s| s.value()),
    };
    serde_json::to_string(&canonical).expect("canonical record serializes")
}

/// The bytes of a canonical record file; the unit content hashes are taken
/// over.
pub fn records_to_bytes(records: &[LogRecord]) -> Vec<u8> {
    let mut out = Vec::with_capacity(records.len() * 256);
    for record in records {
        out.extend_from_slice(to_canonical_json(record).as_bytes());
        out.push(b'\n');
    }
    out
}

pub fn write_records(path: &Path, records: &[LogRecord]) -> io::Result<()> {
    let mut file = io::BufWriter::new(fs::File::create(path)?);
    file.write_all(&records_to_bytes(records))?;
    file.flush()
}

/// Reads a canonical record file. Unlike raw exports, any bad line is an
/// error here. An empty file yields no records.
pub fn read_records(path: &Path) -> Result<Vec<LogRecord>, IngestError> {
    let bytes = fs::read(path).map_err(|source| IngestError::Read {
        path: path.display().to_string(),
        source,
    })?;
    match parse_journal_export(&bytes) {
        Err(IngestError::EmptyInput) => Ok(Vec::new()),
        Err(e) => Err(e),
        Ok(outcome) => match outcome.malformed.into_iter().next() {
            Some(bad) => Err(IngestError::Canonical {
                path: path.display().to_string(),
                line: bad.line,
                reason: bad.reason,
            }),
            None => Ok(outcome.records),
        },
    }
}

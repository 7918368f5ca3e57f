use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::record::LogRecord;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DedupOutcome {
    pub kept: Vec<LogRecord>,
    pub dropped: usize,
}

/// Duplicate identity: every field except `id`, timestamp included.
///
/// Each field is length-prefixed so distinct field splits cannot collide.
pub fn duplicate_key(record: &LogRecord) -> String {
    let mut key = String::new();
    for (_, value) in record.text_fields() {
        push_field(&mut key, value);
    }
    let ts = record.realtime_datetime.map(|t| t.unix_micros());
    match ts {
        Some(micros) => {
            let _ = write!(key, "t{micros};");
        }
        None => key.push_str("t-;"),
    }
    match record.severity {
        Some(level) => {
            let _ = write!(key, "s{level};");
        }
        None => key.push_str("s-;"),
    }
    key
}

fn push_field(key: &mut String, value: Option<&str>) {
    match value {
        Some(text) => {
            let _ = write!(key, "{}:", text.len());
            key.push_str(text);
        }
        None => key.push('-'),
    }
    key.push(';');
}

/// Keeps the first occurrence of each duplicate key, in input order.
pub fn dedup(records: impl IntoIterator<Item = LogRecord>) -> DedupOutcome {
    let mut seen = BTreeSet::new();
    let mut kept = Vec::new();
    let mut dropped = 0;
    for record in records {
        if seen.insert(duplicate_key(&record)) {
            kept.push(record);
        } else {
            dropped += 1;
        }
    }
    DedupOutcome { kept, dropped }
}

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::net::IpAddr;

use chrono::{DateTime, NaiveDateTime, Timelike};
use thiserror::Error;

use crate::severity::{SeverityError, SeverityLevel};

/// Record identifier, kept in the form it was exported with.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RecordId {
    Int(i64),
    Str(String),
}

impl fmt::Display for RecordId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RecordId::Int(v) => write!(f, "{v}"),
            RecordId::Str(s) => f.write_str(s),
        }
    }
}

impl From<i64> for RecordId {
    fn from(v: i64) -> Self {
        RecordId::Int(v)
    }
}

impl From<&str> for RecordId {
    fn from(v: &str) -> Self {
        RecordId::Str(v.to_string())
    }
}

/// Wall-clock instant of a journal entry at microsecond precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(NaiveDateTime);

const CANONICAL_FORMAT: &str = "%Y-%m-%d %H:%M:%S%.6f";
const ACCEPTED_FORMATS: [&str; 4] = [
    "%Y-%m-%d %H:%M:%S%.f",
    "%Y-%m-%dT%H:%M:%S%.f",
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M:%S",
];

impl Timestamp {
    /// Parses `2025-02-14 11:38:10.852717` (a `T` separator and a trailing
    /// `Z` are tolerated). Sub-microsecond digits are truncated.
    pub fn parse(text: &str) -> Option<Self> {
        let text = text.trim();
        let text = text.strip_suffix('Z').unwrap_or(text);
        ACCEPTED_FORMATS
            .iter()
            .find_map(|fmt| NaiveDateTime::parse_from_str(text, fmt).ok())
            .and_then(Self::truncated)
    }

    /// journald `__REALTIME_TIMESTAMP` style: microseconds since the epoch.
    pub fn from_unix_micros(micros: i64) -> Option<Self> {
        DateTime::from_timestamp_micros(micros).map(|dt| Self(dt.naive_utc()))
    }

    fn truncated(dt: NaiveDateTime) -> Option<Self> {
        let nanos = dt.nanosecond() / 1_000 * 1_000;
        dt.with_nanosecond(nanos).map(Self)
    }

    pub fn unix_micros(&self) -> i64 {
        self.0.and_utc().timestamp_micros()
    }

    pub fn naive(&self) -> NaiveDateTime {
        self.0
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.format(CANONICAL_FORMAT))
    }
}

/// One normalized journal entry.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LogRecord {
    pub id: RecordId,
    pub hostname: Option<String>,
    pub ip: Option<String>,
    pub comm: Option<String>,
    pub cmdline: Option<String>,
    pub exe: Option<String>,
    pub message: String,
    pub selinux_context: Option<String>,
    pub systemd_unit: Option<String>,
    pub systemd_slice: Option<String>,
    pub realtime_datetime: Option<Timestamp>,
    pub severity: Option<SeverityLevel>,
}

impl LogRecord {
    /// A record carrying only an id and a message.
    pub fn new(id: impl Into<RecordId>, message: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            hostname: None,
            ip: None,
            comm: None,
            cmdline: None,
            exe: None,
            message: message.into(),
            selinux_context: None,
            systemd_unit: None,
            systemd_slice: None,
            realtime_datetime: None,
            severity: None,
        }
    }

    pub fn with_severity(mut self, severity: SeverityLevel) -> Self {
        self.severity = Some(severity);
        self
    }

    pub fn is_labeled(&self) -> bool {
        self.severity.is_some()
    }

    pub fn unlabeled(&self) -> Self {
        Self {
            severity: None,
            ..self.clone()
        }
    }

    /// The present text-valued fields other than `id`, in canonical order.
    pub fn text_fields(&self) -> [(&'static str, Option<&str>); 9] {
        [
            ("hostname", self.hostname.as_deref()),
            ("ip", self.ip.as_deref()),
            ("comm", self.comm.as_deref()),
            ("cmdline", self.cmdline.as_deref()),
            ("exe", self.exe.as_deref()),
            ("message", Some(self.message.as_str())),
            ("selinux_context", self.selinux_context.as_deref()),
            ("systemd_unit", self.systemd_unit.as_deref()),
            ("systemd_slice", self.systemd_slice.as_deref()),
        ]
    }
}

/// A loosely typed field value as it arrives from an export.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldValue {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    /// journald exports non-UTF-8 payloads as arrays of byte values.
    Bytes(Vec<u8>),
    Other(String),
}

/// An export entry before validation. Field names follow the journal export.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawEntry {
    pub id: Option<FieldValue>,
    pub hostname: Option<FieldValue>,
    pub ip: Option<FieldValue>,
    pub comm: Option<FieldValue>,
    pub cmdline: Option<FieldValue>,
    pub exe: Option<FieldValue>,
    pub message: Option<FieldValue>,
    pub selinux_context: Option<FieldValue>,
    pub systemd_unit: Option<FieldValue>,
    pub systemd_slice: Option<FieldValue>,
    pub realtime_datetime: Option<FieldValue>,
    pub priority: Option<FieldValue>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EntryError {
    #[error("entry has no message")]
    MissingMessage,
    #[error("message is empty after normalization")]
    EmptyMessage,
    #[error("invalid priority: {0}")]
    Severity(#[from] SeverityError),
    #[error("unparseable realtime_datetime {0:?}")]
    Timestamp(String),
    #[error("invalid ip address {0:?}")]
    Ip(String),
    #[error("field {field} has unsupported value {value}")]
    FieldType { field: &'static str, value: String },
}

impl RawEntry {
    /// Validates and canonicalizes the entry. `position` is the 1-based
    /// line (or array element) number; it names entries exported without
    /// an `id`.
    pub fn normalize(self, position: usize) -> Result<LogRecord, EntryError> {
        let id = match self.id {
            None | Some(FieldValue::Null) => RecordId::Str(format!("line-{position}")),
            Some(FieldValue::Int(v)) => RecordId::Int(v),
            Some(FieldValue::Float(v)) if libm::trunc(v) == v && v.abs() < 9.0e15 => {
                RecordId::Int(v as i64)
            }
            Some(FieldValue::Str(s)) => RecordId::Str(s),
            Some(other) => return Err(type_error("id", &other)),
        };

        let message = match self.message {
            None | Some(FieldValue::Null) => return Err(EntryError::MissingMessage),
            Some(value) => text_value("message", value)?,
        };
        let message = message.trim_end().to_string();
        if message.trim().is_empty() {
            return Err(EntryError::EmptyMessage);
        }

        let ip = optional_text("ip", self.ip)?;
        if let Some(addr) = &ip {
            if addr.parse::<IpAddr>().is_err() {
                return Err(EntryError::Ip(addr.clone()));
            }
        }

        let realtime_datetime = match self.realtime_datetime {
            None | Some(FieldValue::Null) => None,
            Some(FieldValue::Str(s)) => {
                Some(Timestamp::parse(&s).ok_or(EntryError::Timestamp(s))?)
            }
            Some(FieldValue::Int(micros)) => Some(
                Timestamp::from_unix_micros(micros)
                    .ok_or_else(|| EntryError::Timestamp(micros.to_string()))?,
            ),
            Some(other) => return Err(EntryError::Timestamp(describe(&other))),
        };

        let severity = match self.priority {
            None | Some(FieldValue::Null) => None,
            Some(FieldValue::Int(v)) => Some(SeverityLevel::from_i64(v)?),
            Some(FieldValue::Float(v)) => Some(SeverityLevel::from_f64(v)?),
            Some(FieldValue::Str(s)) => Some(SeverityLevel::parse_str(&s)?),
            Some(other) => return Err(type_error("priority", &other)),
        };

        Ok(LogRecord {
            id,
            hostname: optional_text("hostname", self.hostname)?,
            ip,
            comm: optional_text("comm", self.comm)?,
            cmdline: optional_text("cmdline", self.cmdline)?,
            exe: optional_text("exe", self.exe)?,
            message,
            selinux_context: optional_text("selinux_context", self.selinux_context)?,
            systemd_unit: optional_text("systemd_unit", self.systemd_unit)?,
            systemd_slice: optional_text("systemd_slice", self.systemd_slice)?,
            realtime_datetime,
            severity,
        })
    }
}

fn describe(value: &FieldValue) -> String {
    match value {
        FieldValue::Null => "null".into(),
        FieldValue::Bool(b) => b.to_string(),
        FieldValue::Int(v) => v.to_string(),
        FieldValue::Float(v) => v.to_string(),
        FieldValue::Str(s) => format!("{s:?}"),
        FieldValue::Bytes(b) => format!("<{} bytes>", b.len()),
        FieldValue::Other(s) => s.clone(),
    }
}

fn type_error(field: &'static str, value: &FieldValue) -> EntryError {
    EntryError::FieldType {
        field,
        value: describe(value),
    }
}

fn text_value(field: &'static str, value: FieldValue) -> Result<String, EntryError> {
    match value {
        FieldValue::Str(s) => Ok(s),
        FieldValue::Int(v) => Ok(v.to_string()),
        FieldValue::Bytes(bytes) => Ok(String::from_utf8_lossy(&bytes).into_owned()),
        other => Err(type_error(field, &other)),
    }
}

fn optional_text(
    field: &'static str,
    value: Option<FieldValue>,
) -> Result<Option<String>, EntryError> {
    match value {
        None | Some(FieldValue::Null) => Ok(None),
        Some(v) => text_value(field, v).map(Some),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &str) -> Option<FieldValue> {
        Some(FieldValue::Str(v.into()))
    }

    pub(crate) fn sample_entry() -> RawEntry {
        RawEntry {
            id: Some(FieldValue::Int(57010)),
            hostname: s("ray-worker4"),
            ip: s("10.192.20.11"),
            comm: s("cat"),
            cmdline: s("/bin/cat"),
            exe: s("/usr/bin/cat"),
            message: s("-rw-r--r-- 2 root root 0 Oct 26 2021 usr/lib/kbd/keymaps/legacy/mac/all/mac-de_CH.map.gz"),
            selinux_context: s("unconfined_u:unconfined_r:rpm_script_t:s0-s0:c0.c1023"),
            systemd_unit: s("session-1.scope"),
            systemd_slice: s("user-0.slice"),
            realtime_datetime: s("2025-02-14 11:38:10.852717"),
            priority: Some(FieldValue::Float(7.0)),
        }
    }

    #[test]
    fn normalizes_sample_entry() {
        let record = sample_entry().normalize(1).unwrap();
        assert_eq!(record.id, RecordId::Int(57010));
        assert_eq!(record.severity, Some(SeverityLevel::DEBUG));
        assert_eq!(record.hostname.as_deref(), Some("ray-worker4"));
        assert_eq!(
            record.realtime_datetime.unwrap().to_string(),
            "2025-02-14 11:38:10.852717"
        );
    }

    #[test]
    fn missing_priority_is_absent() {
        let mut entry = sample_entry();
        entry.priority = None;
        assert_eq!(entry.normalize(1).unwrap().severity, None);
    }

    #[test]
    fn out_of_range_priority_is_rejected() {
        let mut entry = sample_entry();
        entry.priority = s("9");
        assert_eq!(
            entry.normalize(1),
            Err(EntryError::Severity(SeverityError::OutOfRange(9)))
        );
    }

    #[test]
    fn string_float_priority() {
        let mut entry = sample_entry();
        entry.priority = s("4.0");
        assert_eq!(entry.normalize(1).unwrap().severity, Some(SeverityLevel::WARNING));
        let mut entry = sample_entry();
        entry.priority = s("4.5");
        assert!(entry.normalize(1).is_err());
    }

    #[test]
    fn message_rules() {
        let mut entry = sample_entry();
        entry.message = None;
        assert_eq!(entry.normalize(1), Err(EntryError::MissingMessage));
        let mut entry = sample_entry();
        entry.message = s("  \n");
        assert_eq!(entry.normalize(1), Err(EntryError::EmptyMessage));
        let mut entry = sample_entry();
        entry.message = s("disk full\n");
        assert_eq!(entry.normalize(1).unwrap().message, "disk full");
        let mut entry = sample_entry();
        entry.message = Some(FieldValue::Bytes(b"raw \xffbytes".to_vec()));
        assert_eq!(entry.normalize(1).unwrap().message, "raw \u{fffd}bytes");
    }

    #[test]
    fn unparseable_timestamp_is_rejected() {
        let mut entry = sample_entry();
        entry.realtime_datetime = s("yesterday");
        assert!(matches!(entry.normalize(1), Err(EntryError::Timestamp(_))));
        let mut entry = sample_entry();
        entry.realtime_datetime = s("2025-02-30 10:00:00");
        assert!(matches!(entry.normalize(1), Err(EntryError::Timestamp(_))));
    }

    #[test]
    fn timestamp_forms() {
        let a = Timestamp::parse("2025-02-14T11:38:10.852717Z").unwrap();
        let b = Timestamp::parse("2025-02-14 11:38:10.852717999").unwrap();
        assert_eq!(a, b);
        let micros = a.unix_micros();
        assert_eq!(Timestamp::from_unix_micros(micros), Some(a));
        assert_eq!(
            Timestamp::parse("2025-02-14 11:38:10").unwrap().to_string(),
            "2025-02-14 11:38:10.000000"
        );
    }

    #[test]
    fn missing_optional_fields_stay_absent() {
        let entry = RawEntry {
            message: s("hello"),
            ..RawEntry::default()
        };
        let record = entry.normalize(12).unwrap();
        assert_eq!(record.id, RecordId::Str("line-12".into()));
        assert_eq!(record.hostname, None);
        assert_eq!(record.realtime_datetime, None);
    }

    #[test]
    fn bad_ip_is_rejected() {
        let mut entry = sample_entry();
        entry.ip = s("10.192.20");
        assert!(matches!(entry.normalize(1), Err(EntryError::Ip(_))));
    }
}

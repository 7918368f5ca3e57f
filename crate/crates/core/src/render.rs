//! Key-value document rendering shared by the index, the prompts and the
//! query side of retrieval.

use alloc::string::{String, ToString};
use core::fmt::Write;

use thiserror::Error;

use crate::record::{LogRecord, RecordId};
use crate::severity::SeverityLevel;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("record {0} has no severity label to render")]
    MissingLabel(RecordId),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DocumentText {
    pub text: String,
    pub source_id: RecordId,
    pub includes_label: bool,
}

/// Renders a record as a single-quoted dictionary literal over its present
/// fields in canonical order, e.g.
/// `{'id': 57010, 'hostname': 'ray-worker4', …, 'realtime_datetime': '…'}`.
/// With `include_label`, `, 'severity': 7` is appended after the closing
/// brace, so the unlabeled rendering is always a prefix of the labeled one.
/// Output never contains a raw newline.
pub fn render_document(record: &LogRecord, include_label: bool) -> Result<DocumentText, RenderError> {
    let label = match (include_label, record.severity) {
        (false, _) => None,
        (true, Some(level)) => Some(level),
        (true, None) => return Err(RenderError::MissingLabel(record.id.clone())),
    };
    let mut text = String::with_capacity(256);
    text.push_str("{'id': ");
    match &record.id {
        RecordId::Int(v) => {
            let _ = write!(text, "{v}");
        }
        RecordId::Str(s) => push_quoted(&mut text, s),
    }
    for (key, value) in record.text_fields() {
        if let Some(value) = value {
            push_entry(&mut text, key, value);
        }
    }
    if let Some(ts) = record.realtime_datetime {
        push_entry(&mut text, "realtime_datetime", &ts.to_string());
    }
    text.push('}');
    if let Some(level) = label {
        text.push_str(&severity_suffix(level));
    }
    Ok(DocumentText {
        text,
        source_id: record.id.clone(),
        includes_label: label.is_some(),
    })
}

pub fn severity_suffix(level: SeverityLevel) -> String {
    alloc::format!(", 'severity': {level}")
}

fn push_entry(out: &mut String, key: &str, value: &str) {
    out.push_str(", '");
    out.push_str(key);
    out.push_str("': ");
    push_quoted(out, value);
}

fn push_quoted(out: &mut String, value: &str) {
    out.push('\'');
    for c in value.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\'' => out.push_str("\\'"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 || c == '\u{7f}' => {
                let _ = write!(out, "\\x{:02x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('\'');
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::Timestamp;

    pub(crate) fn sample_entry() -> LogRecord {
        LogRecord {
            id: RecordId::Int(57010),
            hostname: Some("ray-worker4".into()),
            ip: Some("10.192.20.11".into()),
            comm: Some("cat".into()),
            cmdline: Some("/bin/cat".into()),
            exe: Some("/usr/bin/cat".into()),
            message: "-rw-r--r-- 2 root root 0 Oct 26 2021 usr/lib/kbd/keymaps/legacy/mac/all/mac-de_CH.map.gz".into(),
            selinux_context: Some("unconfined_u:unconfined_r:rpm_script_t:s0-s0:c0.c1023".into()),
            systemd_unit: Some("session-1.scope".into()),
            systemd_slice: Some("user-0.slice".into()),
            realtime_datetime: Timestamp::parse("2025-02-14 11:38:10.852717"),
            severity: Some(SeverityLevel::DEBUG),
        }
    }

    #[test]
    fn sample_entry_rendering() {
        let doc = render_document(&sample_entry(), true).unwrap();
        assert_eq!(
            doc.text,
            "{'id': 57010, 'hostname': 'ray-worker4', 'ip': '10.192.20.11', 'comm': 'cat', \
             'cmdline': '/bin/cat', 'exe': '/usr/bin/cat', 'message': '-rw-r--r-- 2 root root 0 Oct 26 \
             2021 usr/lib/kbd/keymaps/legacy/mac/all/mac-de_CH.map.gz', 'selinux_context': \
             'unconfined_u:unconfined_r:rpm_script_t:s0-s0:c0.c1023', 'systemd_unit': 'session-1.scope', \
             'systemd_slice': 'user-0.slice', 'realtime_datetime': '2025-02-14 11:38:10.852717'}, \
             'severity': 7"
        );
        assert!(doc.includes_label);
        let bare = render_document(&sample_entry(), false).unwrap();
        assert_eq!(alloc::format!("{}, 'severity': 7", bare.text), doc.text);
        assert!(!bare.includes_label);
    }

    #[test]
    fn message_only() {
        let doc = render_document(&LogRecord::new("a1", "hi"), false).unwrap();
        assert_eq!(doc.text, "{'id': 'a1', 'message': 'hi'}");
    }

    #[test]
    fn missing_label() {
        assert_eq!(
            render_document(&LogRecord::new(1, "x"), true),
            Err(RenderError::MissingLabel(1.into()))
        );
    }

    #[test]
    fn escaping() {
        let doc = render_document(&LogRecord::new(1, "it's a \\ path\nnext\t\u{1b}"), false).unwrap();
        assert_eq!(doc.text, "{'id': 1, 'message': 'it\\'s a \\\\ path\\nnext\\t\\x1b'}");
    }

    #[test]
    fn numeric_and_string_ids_differ() {
        let a = render_document(&LogRecord::new(5, "x"), false).unwrap();
        let b = render_document(&LogRecord::new("5", "x"), false).unwrap();
        assert_ne!(a.text, b.text);
    }
}

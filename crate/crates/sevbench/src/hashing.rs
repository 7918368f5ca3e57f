use sha2::{Digest, Sha256};
use sevbench_core::prompt::template_files;
use sevbench_core::LogRecord;

use crate::ingest::records_to_bytes;

pub fn sha256(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(sha256(bytes))
}

/// Hash of the canonical record file for `records`.
pub fn records_hash(records: &[LogRecord]) -> String {
    sha256_hex(&records_to_bytes(records))
}

/// Hash over every template file, name and content, in fixed order.
pub fn template_hash() -> String {
    let mut hasher = Sha256::new();
    for (name, content) in template_files() {
        hasher.update(name.as_bytes());
        hasher.update([0]);
        hasher.update(content.as_bytes());
        hasher.update([0]);
    }
    hex::encode(hasher.finalize())
}

pub fn parse_hex32(text: &str) -> Option<[u8; 32]> {
    let bytes = hex::decode(text).ok()?;
    bytes.try_into().ok()
}

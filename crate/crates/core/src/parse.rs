//! Scoring-side parsing of model answers.

use thiserror::Error;

use crate::severity::SeverityLevel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Exactly one character `0`-`7`, trailing whitespace allowed.
    #[default]
    Strict,
    /// Drop a leading `<think>…</think>` block, then take the last
    /// standalone digit `0`-`7`.
    Lenient,
}

impl ParseMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ParseMode::Strict => "strict",
            ParseMode::Lenient => "lenient",
        }
    }
}

impl core::str::FromStr for ParseMode {
    type Err = alloc::string::String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(ParseMode::Strict),
            "lenient" => Ok(ParseMode::Lenient),
            other => Err(alloc::format!("unknown parse mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ParseFailure {
    #[error("empty output")]
    Empty,
    #[error("output is not a single digit")]
    NotSingleDigit,
    #[error("digit {0} is outside 0-7")]
    OutOfRange(char),
    #[error("think block is never closed")]
    UnterminatedThink,
    #[error("no standalone digit 0-7 in output")]
    NoDigit,
}

const THINK_OPEN: &str = "<think>";
const THINK_CLOSE: &str = "</think>";

pub fn parse_severity(raw: &str, mode: ParseMode) -> Result<SeverityLevel, ParseFailure> {
    match mode {
        ParseMode::Strict => parse_strict(raw),
        ParseMode::Lenient => parse_lenient(raw),
    }
}

fn parse_strict(raw: &str) -> Result<SeverityLevel, ParseFailure> {
    let trimmed = raw.trim_end();
    let mut chars = trimmed.chars();
    match (chars.next(), chars.next()) {
        (None, _) => Err(ParseFailure::Empty),
        (Some(c @ '0'..='7'), None) => Ok(digit(c)),
        (Some(c @ ('8' | '9')), None) => Err(ParseFailure::OutOfRange(c)),
        _ => Err(ParseFailure::NotSingleDigit),
    }
}

fn parse_lenient(raw: &str) -> Result<SeverityLevel, ParseFailure> {
    let start = raw.trim_start();
    let residue = match start.strip_prefix(THINK_OPEN) {
        Some(rest) => match rest.find(THINK_CLOSE) {
            Some(end) => &rest[end + THINK_CLOSE.len()..],
            None => return Err(ParseFailure::UnterminatedThink),
        },
        None => raw,
    };
    if residue.trim().is_empty() {
        return Err(if raw.trim().is_empty() {
            ParseFailure::Empty
        } else {
            ParseFailure::NoDigit
        });
    }
    last_standalone_digit(residue).ok_or(ParseFailure::NoDigit)
}

fn digit(c: char) -> SeverityLevel {
    SeverityLevel::new(c as u8 - b'0').expect("digit in 0-7")
}

/// A standalone digit is a one-character digit run not touching letters,
/// underscores or a decimal point that continues into another digit.
fn last_standalone_digit(text: &str) -> Option<SeverityLevel> {
    let bytes = text.as_bytes();
    let is_word = |b: u8| b.is_ascii_alphanumeric() || b == b'_' || b >= 0x80;
    let is_sep = |b: u8| b == b'.' || b == b',';
    (0..bytes.len()).rev().find_map(|i| {
        let c = bytes[i];
        if !(b'0'..=b'7').contains(&c) {
            return None;
        }
        let before = i.checked_sub(1).map(|j| bytes[j]);
        let after = bytes.get(i + 1).copied();
        if before.is_some_and(is_word) || after.is_some_and(is_word) {
            return None;
        }
        let glued_before = before.is_some_and(is_sep)
            && i >= 2
            && bytes[i - 2].is_ascii_digit();
        let glued_after = after.is_some_and(is_sep)
            && bytes.get(i + 2).is_some_and(|b| b.is_ascii_digit());
        if glued_before || glued_after {
            return None;
        }
        Some(digit(c as char))
    })
}

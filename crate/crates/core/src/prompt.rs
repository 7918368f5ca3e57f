//! Zero-shot, few-shot and retrieval-augmented prompt assembly.
//!
//! All three modes share one system text; they differ only in the context
//! block placed before the query rendering in the user text.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use thiserror::Error;

use crate::index::RetrievedNeighbor;
use crate::record::{LogRecord, RecordId};
use crate::render::render_document;
use crate::rng::{streams, SeededRng};
use crate::severity::SeverityLevel;

pub const TEMPLATE_VERSION: &str = "v1";

pub const SYSTEM_TEMPLATE: &str = include_str!("../templates/v1/system.txt");
pub const FEW_SHOT_HEADER: &str = include_str!("../templates/v1/few_shot_header.txt");
pub const RAG_HEADER: &str = include_str!("../templates/v1/rag_header.txt");
pub const QUERY_HEADER: &str = include_str!("../templates/v1/query_header.txt");

/// Must appear verbatim in the system text.
pub const OUTPUT_RULE: &str =
    "Respond with only a single digit from 0 to 7, with no explanation, punctuation, or whitespace.";

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_EXEMPLARS: usize = 5;

/// Every template file, in a fixed order, for content hashing.
pub fn template_files() -> [(&'static str, &'static str); 4] {
    [
        ("system.txt", SYSTEM_TEMPLATE),
        ("few_shot_header.txt", FEW_SHOT_HEADER),
        ("rag_header.txt", RAG_HEADER),
        ("query_header.txt", QUERY_HEADER),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PromptMode {
    ZeroShot,
    FewShot,
    Rag,
}

impl PromptMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptMode::ZeroShot => "zero-shot",
            PromptMode::FewShot => "few-shot",
            PromptMode::Rag => "rag",
        }
    }
}

impl core::str::FromStr for PromptMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero-shot" | "zero_shot" => Ok(PromptMode::ZeroShot),
            "few-shot" | "few_shot" => Ok(PromptMode::FewShot),
            "rag" => Ok(PromptMode::Rag),
            other => Err(alloc::format!("unknown prompt mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("few-shot prompting needs at least one exemplar")]
    NoExemplars,
    #[error("exemplar {0} belongs to the evaluation split")]
    ExemplarFromEvalSplit(RecordId),
    #[error("exemplar {0} has no severity label")]
    UnlabeledExemplar(RecordId),
    #[error("retrieval returned no neighbors")]
    EmptyNeighbors,
    #[error("neighbor {position} is closer than the one before it")]
    NeighborsNotSorted { position: usize },
    #[error("retrieval depth k must be at least 1")]
    InvalidK,
    #[error("training split cannot supply {wanted} exemplars covering the required severities")]
    InsufficientCoverage { wanted: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptConfig {
    pub mode: PromptMode,
    /// Labeled training records, few-shot only.
    pub exemplars: Vec<LogRecord>,
    /// Retrieval depth, RAG only.
    pub k: usize,
    pub template_version: String,
}

impl PromptConfig {
    pub fn new(mode: PromptMode) -> Self {
        Self {
            mode,
            exemplars: Vec::new(),
            k: DEFAULT_K,
            template_version: TEMPLATE_VERSION.into(),
        }
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        match self.mode {
            PromptMode::ZeroShot => Ok(()),
            PromptMode::FewShot if self.exemplars.is_empty() => Err(PromptError::NoExemplars),
            PromptMode::FewShot => Ok(()),
            PromptMode::Rag if self.k == 0 => Err(PromptError::InvalidK),
            PromptMode::Rag => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssembledPrompt {
    pub system_text: String,
    pub user_text: String,
    pub mode: PromptMode,
    pub token_estimate: usize,
}

impl AssembledPrompt {
    fn new(mode: PromptMode, user_text: String) -> Self {
        let system_text = system_text();
        let chars = system_text.chars().count() + user_text.chars().count();
        Self {
            token_estimate: chars.div_ceil(4),
            system_text,
            user_text,
            mode,
        }
    }

    pub fn char_len(&self) -> usize {
        self.system_text.chars().count() + self.user_text.chars().count()
    }

    /// The user text before the query header: the exemplar or neighbor
    /// block. Empty for zero-shot prompts.
    pub fn context_block(&self) -> &str {
        let header = QUERY_HEADER.trim_end();
        match self.user_text.rfind(&alloc::format!("\n{header}\n")) {
            Some(pos) => &self.user_text[..pos],
            None => "",
        }
    }
}

pub fn system_text() -> String {
    SYSTEM_TEMPLATE.trim_end().into()
}

fn query_rendering(record: &LogRecord) -> String {
    render_document(record, false)
        .expect("unlabeled rendering cannot fail")
        .text
}

fn push_query(user: &mut String, record: &LogRecord) {
    user.push('\n');
    user.push_str(QUERY_HEADER.trim_end());
    user.push('\n');
    user.push_str(&query_rendering(record));
}

/// User text is the unlabeled rendering of the record and nothing else.
pub fn build_zero_shot(record: &LogRecord) -> AssembledPrompt {
    AssembledPrompt::new(PromptMode::ZeroShot, query_rendering(record))
}

/// Exemplars appear in the given order, each as its unlabeled rendering
/// followed by a `severity: n` line. `eval_ids` guards against leakage.
pub fn build_few_shot(
    record: &LogRecord,
    exemplars: &[LogRecord],
    eval_ids: &BTreeSet<RecordId>,
) -> Result<AssembledPrompt, PromptError> {
    if exemplars.is_empty() {
        return Err(PromptError::NoExemplars);
    }
    let mut user = String::new();
    user.push_str(FEW_SHOT_HEADER.trim_end());
    user.push('\n');
    for (n, exemplar) in exemplars.iter().enumerate() {
        if eval_ids.contains(&exemplar.id) {
            return Err(PromptError::ExemplarFromEvalSplit(exemplar.id.clone()));
        }
        let label = exemplar
            .severity
            .ok_or_else(|| PromptError::UnlabeledExemplar(exemplar.id.clone()))?;
        let _ = write!(
            user,
            "\nExample {}:\n{}\nseverity: {}\n",
            n + 1,
            query_rendering(exemplar),
            label
        );
    }
    push_query(&mut user, record);
    Ok(AssembledPrompt::new(PromptMode::FewShot, user))
}

/// Neighbor snippets (labeled renderings) one per line in retrieval order,
/// nearest first, then the query.
pub fn build_rag(record: &LogRecord, neighbors: &[RetrievedNeighbor]) -> Result<AssembledPrompt, PromptError> {
    if neighbors.is_empty() {
        return Err(PromptError::EmptyNeighbors);
    }
    if let Some(pos) = neighbors
        .windows(2)
        .position(|w| w[1].distance < w[0].distance)
    {
        return Err(PromptError::NeighborsNotSorted { position: pos + 1 });
    }
    let mut user = String::new();
    user.push_str(RAG_HEADER.trim_end());
    user.push_str("\n\n");
    for neighbor in neighbors {
        user.push_str(&neighbor.snippet.text);
        user.push('\n');
    }
    push_query(&mut user, record);
    Ok(AssembledPrompt::new(PromptMode::Rag, user))
}

fn in_levels(record: &LogRecord, levels: &[u8]) -> bool {
    record
        .severity
        .is_some_and(|s| levels.contains(&s.value()))
}

/// Seeded draw of `count` training exemplars covering at least
/// `min(4, count)` distinct severities, with one from levels 1-3 and (when
/// `count >= 2`) one from levels 6-7. Returned in draw order.
pub fn select_exemplars(
    train: &[LogRecord],
    count: usize,
    seed: u64,
) -> Result<Vec<LogRecord>, PromptError> {
    if count == 0 {
        return Err(PromptError::NoExemplars);
    }
    let insufficient = PromptError::InsufficientCoverage { wanted: count };
    let mut order: Vec<usize> = (0..train.len())
        .filter(|&i| train[i].severity.is_some())
        .collect();
    SeededRng::new(seed, streams::EXEMPLARS).shuffle(&mut order);

    let mut chosen: Vec<usize> = Vec::with_capacity(count);
    let pick = |chosen: &mut Vec<usize>, accept: &dyn Fn(&LogRecord) -> bool| -> bool {
        match order
            .iter()
            .position(|&i| !chosen.contains(&i) && accept(&train[i]))
        {
            Some(rank) => {
                chosen.push(order[rank]);
                true
            }
            None => false,
        }
    };

    if !pick(&mut chosen, &|r| in_levels(r, &[1, 2, 3])) {
        return Err(insufficient);
    }
    if count >= 2 && !pick(&mut chosen, &|r| in_levels(r, &[6, 7])) {
        return Err(insufficient);
    }
    let distinct = |chosen: &Vec<usize>| -> BTreeSet<SeverityLevel> {
        chosen.iter().filter_map(|&i| train[i].severity).collect()
    };
    while distinct(&chosen).len() < count.min(4) && chosen.len() < count {
        let have = distinct(&chosen);
        if !pick(&mut chosen, &|r| r.severity.is_some_and(|s| !have.contains(&s))) {
            return Err(insufficient);
        }
    }
    if distinct(&chosen).len() < count.min(4) {
        return Err(insufficient);
    }
    while chosen.len() < count {
        if !pick(&mut chosen, &|_| true) {
            return Err(insufficient);
        }
    }
    let rank_of = |i: usize| order.iter().position(|&o| o == i).unwrap_or(usize::MAX);
    chosen.sort_by_key(|&i| rank_of(i));
    Ok(chosen.into_iter().map(|i| train[i].clone()).collect())
}

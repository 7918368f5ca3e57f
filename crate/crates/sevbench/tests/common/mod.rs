#![allow(dead_code)]

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use sevbench::ingest::parse_journal_export;
use sevbench_core::index::attach_snippets;
use sevbench_core::prompt::{build_few_shot, build_rag, build_zero_shot, select_exemplars, AssembledPrompt};
use sevbench_core::{
    dedup, mock_embed, render_document, stratified_split, DatasetSplit, FlatIndex, IndexMetadata,
    LogRecord, RecordId,
};

pub const SAMPLE_ENTRY: &str = r#"{"id": 57010, "hostname": "ray-worker4", "ip": "10.192.20.11", "comm": "cat", "cmdline": "/bin/cat", "exe": "/usr/bin/cat", "message": "-rw-r--r-- 2 root root 0 Oct 26 2021 usr/lib/kbd/keymaps/legacy/mac/all/mac-de_CH.map.gz", "selinux_context": "unconfined_u:unconfined_r:rpm_script_t:s0-s0:c0.c1023", "systemd_unit": "session-1.scope", "systemd_slice": "user-0.slice", "realtime_datetime": "2025-02-14 11:38:10.852717", "priority": 7.0}"#;

pub const GOLDEN_DIM: usize = 768;
pub const GOLDEN_SEED: u64 = 42;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn sample_entry() -> LogRecord {
    parse_journal_export(SAMPLE_ENTRY.as_bytes()).unwrap().records.remove(0)
}

/// The small journal fixture, deduplicated and split 80/20.
pub fn small_split() -> DatasetSplit {
    let raw = std::fs::read(fixture("journal_small.jsonl")).unwrap();
    let records = dedup(parse_journal_export(&raw).unwrap().records).kept;
    stratified_split(&records, 0.8, GOLDEN_SEED).unwrap()
}

pub fn mock_index(train: &[LogRecord], dim: usize) -> FlatIndex {
    FlatIndex::build(
        train.iter().map(|r| {
            let doc = render_document(r, true).unwrap();
            (r.id.clone(), mock_embed(&doc.text, dim))
        }),
        IndexMetadata::default(),
    )
    .unwrap()
}

pub fn rag_prompt(query: &LogRecord, train: &[LogRecord], index: &FlatIndex, k: usize) -> AssembledPrompt {
    let q = render_document(query, false).unwrap();
    let hits = index.search(&mock_embed(&q.text, index.dim()), k).unwrap();
    let neighbors = attach_snippets(hits, |id: &RecordId| train.iter().find(|r| &r.id == id)).unwrap();
    build_rag(query, &neighbors).unwrap()
}

/// The three pinned prompts: zero-shot, few-shot with five exemplars, and
/// RAG at k = 5, all for the unlabeled pinned sample record.
pub fn golden_prompts() -> Vec<(&'static str, AssembledPrompt)> {
    let split = small_split();
    let query = sample_entry().unlabeled();
    let exemplars = select_exemplars(&split.train, 5, GOLDEN_SEED).unwrap();
    let eval_ids = split.eval_labeled.iter().map(|r| r.id.clone()).collect();
    let index = mock_index(&split.train, GOLDEN_DIM);
    vec![
        ("zero_shot.txt", build_zero_shot(&query)),
        ("few_shot_5.txt", build_few_shot(&query, &exemplars, &eval_ids).unwrap()),
        ("rag_k5.txt", rag_prompt(&query, &split.train, &index, 5)),
    ]
}

pub fn golden_text(prompt: &AssembledPrompt) -> String {
    format!("[system]\n{}\n[user]\n{}\n", prompt.system_text, prompt.user_text)
}

pub struct CliRun {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn cli(args: &[&str]) -> CliRun {
    let argv: Vec<OsString> = std::iter::once("sevbench").chain(args.iter().copied()).map(OsString::from).collect();
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = sevbench::cli::main_with(argv, &mut out, &mut err);
    CliRun {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

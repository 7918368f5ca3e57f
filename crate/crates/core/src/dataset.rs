//! Corpus sampling, severity distribution, stratified splitting and label
//! stripping.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::record::{LogRecord, RecordId};
use crate::rng::{streams, SeededRng};
use crate::severity::SeverityLevel;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatasetError {
    #[error("input is empty")]
    EmptyInput,
    #[error("record {0} carries no severity label")]
    UnlabeledRecord(RecordId),
    #[error("split ratio {0} must lie strictly between 0 and 1")]
    InvalidRatio(f64),
    #[error("invalid sampling policy: {0}")]
    InvalidPolicy(String),
    #[error("sampling budget of {needed} exceeds the {available} records available")]
    InsufficientSupply { needed: usize, available: usize },
}

/// A set of severity levels stored as a bitmask.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct LevelSet(u8);

impl LevelSet {
    pub const fn empty() -> Self {
        Self(0)
    }

    pub fn insert(&mut self, level: SeverityLevel) {
        self.0 |= 1 << level.value();
    }

    pub fn contains(&self, level: SeverityLevel) -> bool {
        self.0 & (1 << level.value()) != 0
    }

    pub fn is_disjoint(&self, other: &LevelSet) -> bool {
        self.0 & other.0 == 0
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    /// Members in ascending severity value.
    pub fn iter(&self) -> impl Iterator<Item = SeverityLevel> + '_ {
        SeverityLevel::all().filter(|l| self.contains(*l))
    }
}

impl FromIterator<SeverityLevel> for LevelSet {
    fn from_iter<I: IntoIterator<Item = SeverityLevel>>(iter: I) -> Self {
        let mut set = LevelSet::empty();
        for level in iter {
            set.insert(level);
        }
        set
    }
}

impl fmt::Debug for LevelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter().map(|l| l.value())).finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplingPolicy {
    pub total_target: usize,
    pub fully_retained_levels: LevelSet,
    pub evenly_sampled_levels: LevelSet,
    pub seed: u64,
}

impl SamplingPolicy {
    /// 50,000 records: levels 1-4 kept in full, the rest drawn evenly from
    /// levels 5-7.
    pub fn benchmark_default(seed: u64) -> Self {
        Self {
            total_target: 50_000,
            fully_retained_levels: [1u8, 2, 3, 4]
                .into_iter()
                .map(|v| SeverityLevel::new(v).unwrap())
                .collect(),
            evenly_sampled_levels: [5u8, 6, 7]
                .into_iter()
                .map(|v| SeverityLevel::new(v).unwrap())
                .collect(),
            seed,
        }
    }
}

/// Per-level counts over a labeled corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DistributionReport {
    pub counts: [usize; SeverityLevel::COUNT],
    pub total: usize,
}

impl DistributionReport {
    pub fn count(&self, level: SeverityLevel) -> usize {
        self.counts[level.index()]
    }

    /// Percentage of the total, 0 for an empty report.
    pub fn percentage(&self, level: SeverityLevel) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * self.count(level) as f64 / self.total as f64
        }
    }
}

pub fn compute_distribution<'a>(
    records: impl IntoIterator<Item = &'a LogRecord>,
) -> Result<DistributionReport, DatasetError> {
    let mut report = DistributionReport::default();
    for record in records {
        let level = label_of(record)?;
        report.counts[level.index()] += 1;
        report.total += 1;
    }
    Ok(report)
}

fn label_of(record: &LogRecord) -> Result<SeverityLevel, DatasetError> {
    record
        .severity
        .ok_or_else(|| DatasetError::UnlabeledRecord(record.id.clone()))
}

/// Splits `budget` as evenly as possible across levels with the given
/// supplies. Levels short of their share give it all away and the excess is
/// re-spread over the rest; indivisible remainders go to the lowest levels
/// first. Returns `None` when total supply is below the budget.
pub fn even_quotas(budget: usize, supplies: &[usize]) -> Option<Vec<usize>> {
    if supplies.iter().sum::<usize>() < budget {
        return None;
    }
    let mut quotas = alloc::vec![0usize; supplies.len()];
    let mut fixed = alloc::vec![false; supplies.len()];
    let mut remaining = budget;
    loop {
        let active: Vec<usize> = (0..supplies.len()).filter(|&i| !fixed[i]).collect();
        if active.is_empty() {
            break;
        }
        let base = remaining / active.len();
        let extra = remaining % active.len();
        let mut short = false;
        for (rank, &i) in active.iter().enumerate() {
            let share = base + usize::from(rank < extra);
            if supplies[i] < share {
                quotas[i] = supplies[i];
                fixed[i] = true;
                remaining -= supplies[i];
                short = true;
            }
        }
        if !short {
            for (rank, &i) in active.iter().enumerate() {
                quotas[i] = base + usize::from(rank < extra);
            }
            break;
        }
    }
    Some(quotas)
}

/// Keeps every record of a fully retained level and fills the remaining
/// budget evenly from the evenly sampled levels. Output keeps input order.
pub fn sample_corpus(
    records: &[LogRecord],
    policy: &SamplingPolicy,
) -> Result<Vec<LogRecord>, DatasetError> {
    if !policy
        .fully_retained_levels
        .is_disjoint(&policy.evenly_sampled_levels)
    {
        return Err(DatasetError::InvalidPolicy(
            "retained and evenly sampled levels overlap".into(),
        ));
    }
    let mut by_level: [Vec<usize>; SeverityLevel::COUNT] = Default::default();
    for (pos, record) in records.iter().enumerate() {
        by_level[label_of(record)?.index()].push(pos);
    }

    let mut selected: Vec<usize> = policy
        .fully_retained_levels
        .iter()
        .flat_map(|l| by_level[l.index()].iter().copied())
        .collect();
    if selected.len() > policy.total_target {
        return Err(DatasetError::InvalidPolicy(alloc::format!(
            "total target {} is below the {} fully retained records",
            policy.total_target,
            selected.len()
        )));
    }
    let budget = policy.total_target - selected.len();

    let even: Vec<SeverityLevel> = policy.evenly_sampled_levels.iter().collect();
    let supplies: Vec<usize> = even.iter().map(|l| by_level[l.index()].len()).collect();
    let quotas = even_quotas(budget, &supplies).ok_or(DatasetError::InsufficientSupply {
        needed: budget,
        available: supplies.iter().sum(),
    })?;

    let mut rng = SeededRng::new(policy.seed, streams::SAMPLE);
    for (level, quota) in even.iter().zip(quotas) {
        let mut pool = by_level[level.index()].clone();
        rng.shuffle(&mut pool);
        selected.extend_from_slice(&pool[..quota]);
    }
    selected.sort_unstable();
    Ok(selected.into_iter().map(|i| records[i].clone()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StratumCounts {
    pub train: usize,
    pub eval: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<LogRecord>,
    pub eval_labeled: Vec<LogRecord>,
    pub eval_unlabeled: Vec<LogRecord>,
    pub strata: [StratumCounts; SeverityLevel::COUNT],
    pub ratio: f64,
    pub seed: u64,
}

// Guards floor() against products like 0.8 * 10 landing a hair under 8.
const RATIO_EPSILON: f64 = 1e-9;

/// Train-side allocation per stratum: the overall train size is
/// `floor(ratio * N)`; each stratum gets `floor(ratio * n)` and the shortfall
/// goes one record at a time to the largest fractional remainders (ties to
/// the lower severity value). Every stratum lands on the floor or ceiling of
/// its exact share.
pub fn train_allocation(sizes: &[usize; SeverityLevel::COUNT], ratio: f64) -> [usize; SeverityLevel::COUNT] {
    let total: usize = sizes.iter().sum();
    let target = libm::floor(ratio * total as f64 + RATIO_EPSILON) as usize;
    let mut quotas = [0usize; SeverityLevel::COUNT];
    let mut fractions = [0f64; SeverityLevel::COUNT];
    for (i, &n) in sizes.iter().enumerate() {
        let exact = ratio * n as f64;
        let floor = libm::floor(exact + RATIO_EPSILON);
        quotas[i] = floor as usize;
        fractions[i] = (exact - floor).max(0.0);
    }
    let mut order: Vec<usize> = (0..SeverityLevel::COUNT)
        .filter(|&i| quotas[i] < sizes[i])
        .collect();
    order.sort_by(|&a, &b| fractions[b].total_cmp(&fractions[a]).then(a.cmp(&b)));
    let assigned: usize = quotas.iter().sum();
    for &i in order.iter().take(target.saturating_sub(assigned)) {
        quotas[i] += 1;
    }
    quotas
}

/// Per-stratum seeded shuffle followed by a per-stratum cut. Both sides
/// keep input order.
pub fn stratified_split(
    records: &[LogRecord],
    ratio: f64,
    seed: u64,
) -> Result<DatasetSplit, DatasetError> {
    if records.is_empty() {
        return Err(DatasetError::EmptyInput);
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DatasetError::InvalidRatio(ratio));
    }
    let mut by_level: [Vec<usize>; SeverityLevel::COUNT] = Default::default();
    for (pos, record) in records.iter().enumerate() {
        by_level[label_of(record)?.index()].push(pos);
    }
    let sizes = by_level.each_ref().map(Vec::len);
    let quotas = train_allocation(&sizes, ratio);

    let mut rng = SeededRng::new(seed, streams::SPLIT);
    let mut in_train = alloc::vec![false; records.len()];
    let mut strata = [StratumCounts::default(); SeverityLevel::COUNT];
    for (level, pool) in by_level.iter_mut().enumerate() {
        rng.shuffle(pool);
        for &pos in &pool[..quotas[level]] {
            in_train[pos] = true;
        }
        strata[level] = StratumCounts {
            train: quotas[level],
            eval: pool.len() - quotas[level],
        };
    }

    let (train, eval_labeled): (Vec<_>, Vec<_>) = records
        .iter()
        .zip(&in_train)
        .partition(|(_, &train)| train);
    let train: Vec<LogRecord> = train.into_iter().map(|(r, _)| r.clone()).collect();
    let eval_labeled: Vec<LogRecord> = eval_labeled.into_iter().map(|(r, _)| r.clone()).collect();
    let eval_unlabeled = strip_labels(&eval_labeled);
    Ok(DatasetSplit {
        train,
        eval_labeled,
        eval_unlabeled,
        strata,
        ratio,
        seed,
    })
}

pub fn strip_labels(records: &[LogRecord]) -> Vec<LogRecord> {
    records.iter().map(LogRecord::unlabeled).collect()
}

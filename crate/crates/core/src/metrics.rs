//! Accuracy, confusion matrix and latency summaries.

use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::severity::SeverityLevel;

/// A scored prediction; `None` is a failed or unparseable answer.
pub type Prediction = Option<SeverityLevel>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("{predictions} predictions for {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("no predictions to score")]
    Empty,
}

/// Exact fraction of correct predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Accuracy {
    pub correct: usize,
    pub total: usize,
}

impl Accuracy {
    pub fn value(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    /// Rounded to four decimal places.
    pub fn rounded(&self) -> f64 {
        libm::round(self.value() * 10_000.0) / 10_000.0
    }
}

impl fmt::Display for Accuracy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4}", self.value())
    }
}

/// Failed predictions count as mismatches and stay in the denominator.
pub fn accuracy(predictions: &[Prediction], labels: &[SeverityLevel]) -> Result<Accuracy, MetricsError> {
    if predictions.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(MetricsError::Empty);
    }
    let correct = predictions
        .iter()
        .zip(labels)
        .filter(|(p, y)| **p == Some(**y))
        .count();
    Ok(Accuracy {
        correct,
        total: labels.len(),
    })
}

const N: usize = SeverityLevel::COUNT;

/// Rows are true labels, columns predictions. Failed predictions are kept
/// per true label outside the matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub counts: [[usize; N]; N],
    pub failures: [usize; N],
}

impl ConfusionMatrix {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Prediction, SeverityLevel)>) -> Self {
        let mut m = Self::default();
        for (pred, label) in pairs {
            match pred {
                Some(p) => m.counts[label.index()][p.index()] += 1,
                None => m.failures[label.index()] += 1,
            }
        }
        m
    }

    pub fn parsed_total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn failure_total(&self) -> usize {
        self.failures.iter().sum()
    }

    pub fn correct(&self) -> usize {
        (0..N).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, label: SeverityLevel) -> usize {
        self.counts[label.index()].iter().sum()
    }

    pub fn column_sum(&self, predicted: SeverityLevel) -> usize {
        self.counts.iter().map(|row| row[predicted.index()]).sum()
    }

    /// `None` when the level was never predicted.
    pub fn precision(&self, level: SeverityLevel) -> Option<f64> {
        let predicted = self.column_sum(level);
        (predicted > 0).then(|| self.counts[level.index()][level.index()] as f64 / predicted as f64)
    }

    /// Failed answers for a true label count against its recall. `None`
    /// when the label never occurs.
    pub fn recall(&self, level: SeverityLevel) -> Option<f64> {
        let actual = self.row_sum(level) + self.failures[level.index()];
        (actual > 0).then(|| self.counts[level.index()][level.index()] as f64 / actual as f64)
    }
}

/// Modal label; ties go to the most severe (lowest) level.
pub fn majority_label(labels: impl IntoIterator<Item = SeverityLevel>) -> Option<SeverityLevel> {
    let mut votes = [0usize; N];
    for label in labels {
        votes[label.index()] += 1;
    }
    let best = *votes.iter().max()?;
    if best == 0 {
        return None;
    }
    SeverityLevel::all().find(|l| votes[l.index()] == best)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencySummary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    /// Nearest-rank 95th percentile.
    pub p95: f64,
    pub min: f64,
    pub max: f64,
}

impl LatencySummary {
    pub fn from_samples(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut sorted: Vec<f64> = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        };
        let rank = libm::ceil(0.95 * n as f64) as usize;
        Some(Self {
            count: n,
            mean: sorted.iter().sum::<f64>() / n as f64,
            median,
            p95: sorted[rank.clamp(1, n) - 1],
            min: sorted[0],
            max: sorted[n - 1],
        })
    }
}

//! Confusion accounting and Monte Carlo aggregation of detection and
//! severity performance.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::DriftVerdict;
use crate::severity::{SeverityCategory, SeverityOutcome};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("batch-misalignment: verdict for batch {batch_index} but only {labels} truth labels")]
    BatchMisalignment { batch_index: usize, labels: usize },
    #[error("empty aggregation pool")]
    EmptyPool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn record_category(&mut self, category: SeverityCategory) {
        match category {
            SeverityCategory::TP => self.tp += 1,
            SeverityCategory::FP => self.fp += 1,
            SeverityCategory::TN => self.tn += 1,
            SeverityCategory::FN => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// No actual positives and no predicted positives.
    pub fn is_positive_free(&self) -> bool {
        self.tp + self.fp + self.fn_ == 0
    }
}

/// Binary confusion over evaluated verdicts; `truth[t]` labels batch `t`.
pub fn score_detection(
    verdicts: &[DriftVerdict],
    truth: &[bool],
) -> Result<ConfusionCounts, MetricsError> {
    let mut counts = ConfusionCounts::default();
    for v in verdicts.iter().filter(|v| v.evaluated) {
        let actual = *truth
            .get(v.batch_index)
            .ok_or(MetricsError::BatchMisalignment {
                batch_index: v.batch_index,
                labels: truth.len(),
            })?;
        counts.record(v.drift, actual);
    }
    Ok(counts)
}

pub fn score_severity(outcomes: &[SeverityOutcome]) -> ConfusionCounts {
    let mut counts = ConfusionCounts::default();
    for o in outcomes {
        counts.record_category(o.category);
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricTuple {
    pub precision: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Standard precision, sensitivity, specificity and F1. A ratio with an
/// empty denominator is 0.
pub fn compute_metrics(c: &ConfusionCounts) -> MetricTuple {
    let precision = ratio(c.tp, c.tp + c.fp);
    let sensitivity = ratio(c.tp, c.tp + c.fn_);
    let specificity = ratio(c.tn, c.tn + c.fp);
    let f1 = if precision + sensitivity > 0.0 {
        2.0 * precision * sensitivity / (precision + sensitivity)
    } else {
        0.0
    };
    MetricTuple {
        precision,
        sensitivity,
        specificity,
        f1,
    }
}

/// Treatment of pools with neither actual nor predicted positives.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmptyClassPolicy {
    /// Leave the tuple out of the aggregate and count it as flagged.
    #[default]
    Skip,
    /// Score precision, sensitivity and F1 as 1.
    One,
}

/// Metric tuple under `policy`; `None` if the counts must be skipped.
pub fn metric_tuple(c: &ConfusionCounts, policy: EmptyClassPolicy) -> Option<MetricTuple> {
    if c.total() == 0 {
        return None;
    }
    if c.is_positive_free() {
        return match policy {
            EmptyClassPolicy::Skip => None,
            EmptyClassPolicy::One => Some(MetricTuple {
                precision: 1.0,
                sensitivity: 1.0,
                specificity: ratio(c.tn, c.tn + c.fp),
                f1: 1.0,
            }),
        };
    }
    Some(compute_metrics(c))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> MeanStd {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    MeanStd {
        mean,
        std: var.sqrt(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub precision: MeanStd,
    pub sensitivity: MeanStd,
    pub specificity: MeanStd,
    pub f1: MeanStd,
    /// Tuples in the pool.
    pub n: usize,
}

/// Unweighted mean and population standard deviation of each metric.
pub fn aggregate(pool: &[MetricTuple]) -> Result<MetricsSummary, MetricsError> {
    if pool.is_empty() {
        return Err(MetricsError::EmptyPool);
    }
    Ok(MetricsSummary {
        precision: mean_std(pool.iter().map(|t| t.precision)),
        sensitivity: mean_std(pool.iter().map(|t| t.sensitivity)),
        specificity: mean_std(pool.iter().map(|t| t.specificity)),
        f1: mean_std(pool.iter().map(|t| t.f1)),
        n: pool.len(),
    })
}

/// Pool of confusion counts that remembers how many were skipped.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricPool {
    pub tuples: Vec<MetricTuple>,
    pub skipped: usize,
}

impl MetricPool {
    pub fn push(&mut self, counts: &ConfusionCounts, policy: EmptyClassPolicy) {
        match metric_tuple(counts, policy) {
            Some(t) => self.tuples.push(t),
            None => self.skipped += 1,
        }
    }

    pub fn extend(&mut self, other: &MetricPool) {
        self.tuples.extend_from_slice(&other.tuples);
        self.skipped += other.skipped;
    }

    pub fn summarize(&self) -> PoolSummary {
        PoolSummary {
            metrics: aggregate(&self.tuples).ok(),
            skipped: self.skipped,
        }
    }
}

/// Aggregate of a pool; `metrics` is absent when every tuple was skipped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolSummary {
    pub metrics: Option<MetricsSummary>,
    pub skipped: usize,
}

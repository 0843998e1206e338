//! Cross-agent consensus severity and its per-batch classification.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::DriftVerdict;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SeverityError {
    #[error("no-agents")]
    NoAgents,
}

/// Fraction of agents flagging drift at one batch index.
pub fn severity_score(detections: &[bool]) -> Result<f64, SeverityError> {
    if detections.is_empty() {
        return Err(SeverityError::NoAgents);
    }
    let hits = detections.iter().filter(|&&d| d).count();
    Ok(hits as f64 / detections.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeverityRecord {
    pub batch_index: usize,
    pub detections: Vec<bool>,
    pub score: f64,
}

impl SeverityRecord {
    pub fn new(batch_index: usize, detections: Vec<bool>) -> Result<Self, SeverityError> {
        let score = severity_score(&detections)?;
        Ok(Self {
            batch_index,
            detections,
            score,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.detections.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SeverityCategory {
    TP,
    FP,
    FN,
    TN,
}

impl SeverityCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            SeverityCategory::TP => "TP",
            SeverityCategory::FP => "FP",
            SeverityCategory::FN => "FN",
            SeverityCategory::TN => "TN",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "TP" => Some(SeverityCategory::TP),
            "FP" => Some(SeverityCategory::FP),
            "FN" => Some(SeverityCategory::FN),
            "TN" => Some(SeverityCategory::TN),
            _ => None,
        }
    }
}

impl fmt::Display for SeverityCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What counts as a correct multi-site detection.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TpRule {
    /// The predicted count must equal the true count.
    #[default]
    Exact,
    /// Any prediction of two or more sites is a hit.
    Threshold,
}

/// Fewest simultaneously drifting sites that make a batch "multi-site".
pub const MULTI_SITE: usize = 2;

pub fn classify_severity(c_true: usize, c_pred: usize) -> SeverityCategory {
    classify_severity_with(c_true, c_pred, TpRule::Exact)
}

pub fn classify_severity_with(c_true: usize, c_pred: usize, rule: TpRule) -> SeverityCategory {
    use std::cmp::Ordering::*;
    if c_true >= MULTI_SITE {
        match rule {
            TpRule::Exact => match c_pred.cmp(&c_true) {
                Equal => SeverityCategory::TP,
                Greater => SeverityCategory::FP,
                Less => SeverityCategory::FN,
            },
            TpRule::Threshold if c_pred >= MULTI_SITE => SeverityCategory::TP,
            TpRule::Threshold => SeverityCategory::FN,
        }
    } else if c_pred >= MULTI_SITE {
        SeverityCategory::FP
    } else {
        SeverityCategory::TN
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeverityOutcome {
    pub batch_index: usize,
    pub c_true: usize,
    pub c_pred: usize,
    pub score: f64,
    pub category: SeverityCategory,
}

/// Scores every shared batch index in `0..n_batches` not in `excluded`.
///
/// `verdicts[i]` is agent `i`'s log and `truth[i][t]` its ground-truth label
/// for batch `t`. Agents without an evaluated drift verdict at `t` count as
/// not detecting.
pub fn severity_timeline(
    verdicts: &[&[DriftVerdict]],
    truth: &[Vec<bool>],
    n_batches: usize,
    excluded: &BTreeSet<usize>,
    rule: TpRule,
) -> Result<Vec<SeverityOutcome>, SeverityError> {
    if verdicts.is_empty() {
        return Err(SeverityError::NoAgents);
    }
    let mut detections = vec![vec![false; n_batches]; verdicts.len()];
    for (agent, log) in verdicts.iter().enumerate() {
        for v in log
            .iter()
            .filter(|v| v.evaluated && v.batch_index < n_batches)
        {
            detections[agent][v.batch_index] = v.drift;
        }
    }
    let mut out = Vec::with_capacity(n_batches);
    for t in (0..n_batches).filter(|t| !excluded.contains(t)) {
        let flags: Vec<bool> = detections.iter().map(|d| d[t]).collect();
        let record = SeverityRecord::new(t, flags)?;
        let c_pred = record.detections.iter().filter(|&&d| d).count();
        let c_true = truth
            .iter()
            .filter(|labels| labels.get(t).copied().unwrap_or(false))
            .count();
        out.push(SeverityOutcome {
            batch_index: t,
            c_true,
            c_pred,
            score: record.score,
            category: classify_severity_with(c_true, c_pred, rule),
        });
    }
    Ok(out)
}

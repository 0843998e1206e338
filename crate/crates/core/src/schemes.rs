//! Reference distributions for the five monitoring schemes.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{bin_counts, blend, build_histogram, Histogram, KsResult, Sample, StatsError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchemeError {
    #[error("scheme-inputs-missing: {kind} requires {what}")]
    InputsMissing {
        kind: SchemeKind,
        what: &'static str,
    },
    #[error("invalid adaptive parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// How a monitoring agent obtains its reference distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SchemeKind {
    /// One agent over all sites, compared with the global evaluation set.
    Centralized,
    GlobalRef,
    SiteRef,
    ProdRef,
    AdaptiveRef,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 5] = [
        SchemeKind::Centralized,
        SchemeKind::GlobalRef,
        SchemeKind::SiteRef,
        SchemeKind::ProdRef,
        SchemeKind::AdaptiveRef,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Centralized => "Centralized",
            SchemeKind::GlobalRef => "GlobalRef",
            SchemeKind::SiteRef => "SiteRef",
            SchemeKind::ProdRef => "ProdRef",
            SchemeKind::AdaptiveRef => "AdaptiveRef",
        }
    }

    pub fn is_multi_center(self) -> bool {
        self != SchemeKind::Centralized
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown scheme {s:?}"))
    }
}

/// When a clean window may update the adaptive reference.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateCondition {
    /// Only when the p-value is lower than the last accepted one.
    #[default]
    Lower,
    /// On every window without drift.
    AlwaysWhenClean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveParams {
    pub bins: usize,
    pub lambda0: f64,
    pub decay: f64,
    pub lambda_min: f64,
    pub update_condition: UpdateCondition,
    /// Keep only the last `W` accepted windows in the center histogram.
    pub center_window: Option<usize>,
}

impl Default for AdaptiveParams {
    fn default() -> Self {
        Self {
            bins: crate::stats::DEFAULT_BINS,
            lambda0: 1.0,
            decay: 0.1,
            lambda_min: 0.1,
            update_condition: UpdateCondition::Lower,
            center_window: None,
        }
    }
}

impl AdaptiveParams {
    pub fn validate(&self) -> Result<(), SchemeError> {
        if self.bins < 2 {
            return Err(StatsError::InvalidBinCount(self.bins).into());
        }
        let unit = |name, value: f64| {
            if (0.0..=1.0).contains(&value) {
                Ok(())
            } else {
                Err(SchemeError::InvalidParameter { name, value })
            }
        };
        unit("lambda0", self.lambda0)?;
        unit("decay", self.decay)?;
        unit("lambda_min", self.lambda_min)?;
        if self.lambda_min > self.lambda0 {
            return Err(SchemeError::InvalidParameter {
                name: "lambda_min",
                value: self.lambda_min,
            });
        }
        if self.center_window == Some(0) {
            return Err(SchemeError::InvalidParameter {
                name: "center_window",
                value: 0.0,
            });
        }
        Ok(())
    }
}

/// Everything needed to build an agent's reference provider.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSpec {
    pub kind: SchemeKind,
    pub global_eval: Sample,
    pub site_eval: Option<Sample>,
    pub adaptive: AdaptiveParams,
}

/// The distribution a monitoring window is tested against.
#[derive(Debug, Clone, Copy)]
pub enum Reference<'a> {
    Sample(&'a Sample),
    Histogram(&'a Histogram),
}

#[derive(Debug, Clone)]
pub enum ReferenceProvider {
    /// Centralized, GlobalRef and SiteRef: immutable sample.
    Fixed(Sample),
    /// ProdRef: empty until the first production window is installed.
    Production(Option<Sample>),
    Adaptive(AdaptiveState),
}

impl ReferenceProvider {
    /// Current reference; `None` while ProdRef awaits its first window.
    pub fn current(&self) -> Option<Reference<'_>> {
        match self {
            ReferenceProvider::Fixed(s) => Some(Reference::Sample(s)),
            ReferenceProvider::Production(s) => s.as_ref().map(Reference::Sample),
            ReferenceProvider::Adaptive(state) => Some(Reference::Histogram(state.p_ref())),
        }
    }

    pub fn awaiting_production(&self) -> bool {
        matches!(self, ReferenceProvider::Production(None))
    }

    /// Freezes the ProdRef reference. Later calls are rejected.
    pub fn install_production(&mut self, window: Sample) -> Result<(), SchemeError> {
        match self {
            ReferenceProvider::Production(slot @ None) => {
                if window.len() < 2 {
                    return Err(SchemeError::InputsMissing {
                        kind: SchemeKind::ProdRef,
                        what: "a first production window with at least 2 observations",
                    });
                }
                *slot = Some(window);
                Ok(())
            }
            _ => Err(SchemeError::InputsMissing {
                kind: SchemeKind::ProdRef,
                what: "a provider that has not consumed its reference window",
            }),
        }
    }

    pub fn adaptive(&self) -> Option<&AdaptiveState> {
        match self {
            ReferenceProvider::Adaptive(state) => Some(state),
            _ => None,
        }
    }

    pub fn adaptive_mut(&mut self) -> Option<&mut AdaptiveState> {
        match self {
            ReferenceProvider::Adaptive(state) => Some(state),
            _ => None,
        }
    }
}

fn require_two(kind: SchemeKind, s: &Sample, what: &'static str) -> Result<(), SchemeError> {
    if s.len() < 2 {
        Err(SchemeError::InputsMissing { kind, what })
    } else {
        Ok(())
    }
}

/// Builds the reference provider for `spec`.
///
/// ProdRef may be built without its first window; the owning agent installs
/// it via [`ReferenceProvider::install_production`].
pub fn make_reference(
    spec: &ReferenceSpec,
    first_prod_batch: Option<Sample>,
) -> Result<ReferenceProvider, SchemeError> {
    match spec.kind {
        SchemeKind::Centralized | SchemeKind::GlobalRef => {
            require_two(spec.kind, &spec.global_eval, "a global evaluation sample")?;
            Ok(ReferenceProvider::Fixed(spec.global_eval.clone()))
        }
        SchemeKind::SiteRef => {
            let site = spec.site_eval.as_ref().ok_or(SchemeError::InputsMissing {
                kind: spec.kind,
                what: "a site evaluation sample",
            })?;
            require_two(spec.kind, site, "a site evaluation sample")?;
            Ok(ReferenceProvider::Fixed(site.clone()))
        }
        SchemeKind::ProdRef => {
            let mut provider = ReferenceProvider::Production(None);
            if let Some(window) = first_prod_batch {
                provider.install_production(window)?;
            }
            Ok(provider)
        }
        SchemeKind::AdaptiveRef => Ok(ReferenceProvider::Adaptive(AdaptiveState::new(
            &spec.global_eval,
            spec.adaptive,
        )?)),
    }
}

/// Blended reference `lambda * P_global + (1 - lambda) * P_center` with
/// contamination-controlled updates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveState {
    params: AdaptiveParams,
    p_global: Histogram,
    center_counts: Vec<u64>,
    accepted: VecDeque<Vec<u64>>,
    lambda: f64,
    p_ref: Histogram,
    last_p_value: f64,
    updates: usize,
}

impl AdaptiveState {
    pub fn new(global_eval: &Sample, params: AdaptiveParams) -> Result<Self, SchemeError> {
        params.validate()?;
        let p_global = build_histogram(global_eval, params.bins)?;
        Ok(Self {
            params,
            center_counts: vec![0; params.bins],
            accepted: VecDeque::new(),
            lambda: params.lambda0,
            p_ref: p_global.clone(),
            p_global,
            last_p_value: 1.0,
            updates: 0,
        })
    }

    pub fn p_global(&self) -> &Histogram {
        &self.p_global
    }

    pub fn p_ref(&self) -> &Histogram {
        &self.p_ref
    }

    pub fn center_counts(&self) -> &[u64] {
        &self.center_counts
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn last_p_value(&self) -> f64 {
        self.last_p_value
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    pub fn params(&self) -> &AdaptiveParams {
        &self.params
    }

    fn qualifies(&self, verdict: &KsResult, threshold: f64) -> bool {
        if verdict.p_value < threshold {
            return false;
        }
        match self.params.update_condition {
            UpdateCondition::Lower => verdict.p_value < self.last_p_value,
            UpdateCondition::AlwaysWhenClean => true,
        }
    }

    /// Folds a tested window into the reference if it qualifies.
    /// Returns whether the state changed.
    pub fn observe(&mut self, batch: &Sample, verdict: &KsResult, threshold: f64) -> bool {
        if batch.is_empty() || !self.qualifies(verdict, threshold) {
            return false;
        }
        let counts = bin_counts(batch.values(), self.params.bins);
        for (acc, c) in self.center_counts.iter_mut().zip(&counts) {
            *acc += c;
        }
        if let Some(w) = self.params.center_window {
            self.accepted.push_back(counts);
            while self.accepted.len() > w {
                let old = self.accepted.pop_front().expect("nonempty");
                for (acc, c) in self.center_counts.iter_mut().zip(&old) {
                    *acc -= c;
                }
            }
        }
        self.lambda = (self.lambda - self.params.decay).max(self.params.lambda_min);
        let center =
            Histogram::from_counts(&self.center_counts).expect("accepted batch is nonempty");
        self.p_ref =
            blend(&self.p_global, &center, self.lambda).expect("same bins, lambda in [0, 1]");
        self.last_p_value = verdict.p_value;
        self.updates += 1;
        true
    }
}

/// Functional form of [`AdaptiveState::observe`].
pub fn adaptive_observe(
    mut state: AdaptiveState,
    batch: &Sample,
    verdict: &KsResult,
    threshold: f64,
) -> AdaptiveState {
    state.observe(batch, verdict, threshold);
    state
}

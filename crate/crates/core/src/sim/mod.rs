//! In-silico multisite monitoring simulation.
//!
//! A replicate runs six steps: data selection (synthetic sites are redrawn,
//! loaded sites reused), bootstrap augmentation, drift injection, sparsity padding, agent setup per scheme
//! and evaluation against the known drift positions. The grid runner
//! repeats replicates over every (strength, duration, window) cell.

pub mod data;
pub mod pipeline;

use std::collections::BTreeSet;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{
    default_min_valid, AdaptiveStep, Agent, AgentConfig, AgentError, AgentId, DriftVerdict,
    WebhookHook,
};
use crate::metrics::{
    score_detection, score_severity, ConfusionCounts, EmptyClassPolicy, MetricPool, MetricsError,
    PoolSummary,
};
use crate::schemes::{AdaptiveParams, ReferenceSpec, SchemeKind, UpdateCondition};
use crate::seed::{hash_f64s, hash_str, mix};
use crate::severity::{severity_timeline, SeverityError, SeverityOutcome, TpRule};
use crate::stats::{PermutationTest, Resampling, Sample, StatsError};

pub use data::{
    default_synthetic_sites, generate_synthetic_sites, select_sites, SiteData, SiteInput,
    SyntheticSite,
};
pub use pipeline::{
    augment, ceil_fraction, inject_drift, interleave, pad_sparsity, window_truth, BatchTruth,
    SiteSeries,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid configuration at {path}: {message}")]
    Config { path: String, message: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("drift-exceeds-series: segment of {segment} does not fit a series of {series}")]
    DriftExceedsSeries { segment: usize, series: usize },
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Severity(#[from] SeverityError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("result sink failed: {0}")]
    Sink(String),
}

fn config_error(path: impl Into<String>, message: impl Into<String>) -> SimError {
    SimError::Config {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SiteSource {
    Synthetic(SyntheticSite),
    /// `index,probability` files for the reference and test predictions.
    Csv {
        reference: PathBuf,
        test: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteSpec {
    pub id: String,
    pub source: SiteSource,
}

/// Full description of a simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Fraction of bootstrap values added to each input series.
    pub augmentation: f64,
    /// p-value below which a window is flagged.
    pub threshold: f64,
    /// Drift strengths, as a fraction of the series mean.
    pub drift_strengths: Vec<f64>,
    /// Drift durations, as a fraction of the augmented series length.
    pub drift_durations: Vec<f64>,
    /// Window sizes, as a fraction of the padded series length.
    pub window_fractions: Vec<f64>,
    pub permutations: usize,
    pub resampling: Resampling,
    pub bins: usize,
    pub lambda0: f64,
    pub decay: f64,
    pub lambda_min: f64,
    pub adaptive_update_condition: UpdateCondition,
    pub center_window: Option<usize>,
    pub replicates: usize,
    pub master_seed: u64,
    pub schemes: Vec<SchemeKind>,
    /// A window is drift-positive when drifted observations exceed this
    /// fraction of its valid observations.
    pub batch_label_rho: f64,
    /// Minimum valid observations per window; defaults to half the window.
    pub min_valid: Option<usize>,
    pub severity_tp_rule: TpRule,
    pub empty_class_policy: EmptyClassPolicy,
    pub model: String,
    pub webhook_url: Option<String>,
    pub sites: Vec<SiteSpec>,
}

impl Default for SimConfig {
    fn default() -> Self {
        let adaptive = AdaptiveParams::default();
        Self {
            augmentation: 0.10,
            threshold: 0.05,
            drift_strengths: vec![0.2, 0.3, 0.5],
            drift_durations: vec![0.2, 0.3, 0.5],
            window_fractions: vec![0.05, 0.10, 0.15],
            permutations: crate::stats::DEFAULT_PERMUTATIONS,
            resampling: Resampling::Permutation,
            bins: adaptive.bins,
            lambda0: adaptive.lambda0,
            decay: adaptive.decay,
            lambda_min: adaptive.lambda_min,
            adaptive_update_condition: adaptive.update_condition,
            center_window: adaptive.center_window,
            replicates: 500,
            master_seed: 0,
            schemes: SchemeKind::ALL.to_vec(),
            batch_label_rho: 0.5,
            min_valid: None,
            severity_tp_rule: TpRule::Exact,
            empty_class_policy: EmptyClassPolicy::Skip,
            model: "pcr".to_string(),
            webhook_url: None,
            sites: default_synthetic_sites()
                .into_iter()
                .map(|(id, s)| SiteSpec {
                    id,
                    source: SiteSource::Synthetic(s),
                })
                .collect(),
        }
    }
}

impl SimConfig {
    pub fn adaptive_params(&self) -> AdaptiveParams {
        AdaptiveParams {
            bins: self.bins,
            lambda0: self.lambda0,
            decay: self.decay,
            lambda_min: self.lambda_min,
            update_condition: self.adaptive_update_condition,
            center_window: self.center_window,
        }
    }

    /// Checks every field; errors carry the offending field path.
    pub fn validate(&self) -> Result<(), SimError> {
        let unit_open = |path: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(config_error(path, format!("{v} must lie in (0, 1)")))
            }
        };
        if !(self.augmentation >= 0.0 && self.augmentation.is_finite()) {
            return Err(config_error("augmentation", "must be a nonnegative number"));
        }
        unit_open("threshold", self.threshold)?;
        let grids = [
            ("drift_strengths", &self.drift_strengths),
            ("drift_durations", &self.drift_durations),
            ("window_fractions", &self.window_fractions),
        ];
        for (name, grid) in grids {
            if grid.is_empty() {
                return Err(config_error(name, "grid must not be empty"));
            }
        }
        for (i, &v) in self.drift_strengths.iter().enumerate() {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(config_error(
                    format!("drift_strengths[{i}]"),
                    format!("{v} must be >= 0"),
                ));
            }
        }
        for (i, &v) in self.drift_durations.iter().enumerate() {
            unit_open(&format!("drift_durations[{i}]"), v)?;
        }
        for (i, &v) in self.window_fractions.iter().enumerate() {
            if !(v > 0.0 && v <= 1.0) {
                return Err(config_error(
                    format!("window_fractions[{i}]"),
                    format!("{v} must lie in (0, 1]"),
                ));
            }
        }
        if self.permutations < crate::stats::MIN_PERMUTATIONS {
            return Err(config_error(
                "permutations",
                format!("must be at least {}", crate::stats::MIN_PERMUTATIONS),
            ));
        }
        self.adaptive_params().validate().map_err(|e| {
            config_error("bins|lambda0|decay|lambda_min|center_window", e.to_string())
        })?;
        if self.replicates == 0 {
            return Err(config_error("replicates", "must be at least 1"));
        }
        if self.schemes.is_empty() {
            return Err(config_error("schemes", "must list at least one scheme"));
        }
        let unique: BTreeSet<_> = self.schemes.iter().collect();
        if unique.len() != self.schemes.len() {
            return Err(config_error("schemes", "schemes must not repeat"));
        }
        if !(0.0..1.0).contains(&self.batch_label_rho) {
            return Err(config_error("batch_label_rho", "must lie in [0, 1)"));
        }
        if matches!(self.min_valid, Some(m) if m < 2) {
            return Err(config_error("min_valid", "must be at least 2"));
        }
        if self.sites.is_empty() {
            return Err(config_error("sites", "at least one site is required"));
        }
        let mut ids = BTreeSet::new();
        for (i, site) in self.sites.iter().enumerate() {
            if site.id.is_empty() || !ids.insert(site.id.as_str()) {
                return Err(config_error(
                    format!("sites[{i}].id"),
                    "ids must be unique and nonempty",
                ));
            }
            if let SiteSource::Synthetic(s) = &site.source {
                if s.reference_size < 4 || s.test_size < 4 {
                    return Err(config_error(
                        format!("sites[{i}].source.synthetic"),
                        "reference_size and test_size must be at least 4",
                    ));
                }
                if !(s.alpha > 0.0 && s.beta > 0.0) {
                    return Err(config_error(
                        format!("sites[{i}].source.synthetic"),
                        "alpha and beta must be positive",
                    ));
                }
            }
        }
        Ok(())
    }

    /// All (strength, duration, window) combinations, strength outermost.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &drift_strength in &self.drift_strengths {
            for &drift_duration in &self.drift_durations {
                for &window_fraction in &self.window_fractions {
                    out.push(Cell {
                        drift_strength,
                        drift_duration,
                        window_fraction,
                    });
                }
            }
        }
        out
    }

    /// Seed for standalone synthetic data (the `datagen` files).
    pub fn data_seed(&self) -> u64 {
        mix(self.master_seed, hash_str("site-data"))
    }

    /// Synthetic sites of the config in order; `None` for CSV-backed sites.
    pub fn synthetic_sites(&self) -> Vec<Option<(String, SyntheticSite)>> {
        self.sites
            .iter()
            .map(|s| match &s.source {
                SiteSource::Synthetic(syn) => Some((s.id.clone(), syn.clone())),
                SiteSource::Csv { .. } => None,
            })
            .collect()
    }

    fn data_key(&self) -> u64 {
        hash_f64s(&[self.augmentation, self.batch_label_rho])
    }
}

/// One point of the parameter grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub drift_strength: f64,
    pub drift_duration: f64,
    pub window_fraction: f64,
}

impl Cell {
    pub fn label(&self) -> String {
        format!(
            "sr{}-du{}-ws{}",
            self.drift_strength, self.drift_duration, self.window_fraction
        )
    }

    fn key(&self) -> u64 {
        hash_f64s(&[
            self.drift_strength,
            self.drift_duration,
            self.window_fraction,
        ])
    }
}

/// Seed of replicate `replicate` in `cell`; independent of scheduling.
pub fn replicate_seed(config: &SimConfig, cell: &Cell, replicate: usize) -> u64 {
    mix(
        mix(config.master_seed, mix(config.data_key(), cell.key())),
        replicate as u64,
    )
}

const STREAM_SELECT: u64 = 0;
const STREAM_AUGMENT: u64 = 1;
const STREAM_INJECT: u64 = 2;
const STREAM_SPARSITY: u64 = 3;
const STREAM_AGENTS: u64 = 4;

fn stream(seed: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, tag))
}

/// Name of the single Centralized agent.
pub const CENTRAL_AGENT: &str = "central";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRun {
    pub agent: String,
    pub window_size: usize,
    pub batches: Vec<BatchTruth>,
    pub verdicts: Vec<DriftVerdict>,
    pub reference_batches: Vec<usize>,
    pub adaptive_trace: Vec<AdaptiveStep>,
    pub detection: ConfusionCounts,
    pub hook_failures: usize,
}

impl AgentRun {
    pub fn truth_labels(&self) -> Vec<bool> {
        self.batches.iter().map(|b| b.drift).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeRun {
    pub scheme: SchemeKind,
    pub agents: Vec<AgentRun>,
    /// Per-batch consensus outcomes; empty for Centralized.
    pub severity: Vec<SeverityOutcome>,
    pub severity_counts: Option<ConfusionCounts>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub cell: Cell,
    pub replicate: usize,
    pub seed: u64,
    pub schemes: Vec<SchemeRun>,
}

/// Runs the pipeline on one cell for one replicate.
pub fn run_replicate(
    config: &SimConfig,
    cell: &Cell,
    inputs: &[SiteInput],
    replicate: usize,
) -> Result<ReplicateResult, SimError> {
    if inputs.is_empty() {
        return Err(SimError::InvalidParameter("no sites".into()));
    }
    let seed = replicate_seed(config, cell, replicate);
    let sites = select_sites(inputs, &mut stream(seed, STREAM_SELECT))?;

    // Selection and augmentation.
    let mut rng = stream(seed, STREAM_AUGMENT);
    let mut series = sites
        .iter()
        .map(|s| {
            augment(
                &SiteSeries::clean(s.id.clone(), &s.test),
                config.augmentation,
                &mut rng,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;

    // Injection.
    if cell.drift_strength > 0.0 {
        let mut rng = stream(seed, STREAM_INJECT);
        series = series
            .iter()
            .map(|s| inject_drift(s, cell.drift_strength, cell.drift_duration, &mut rng))
            .collect::<Result<Vec<_>, _>>()?;
    }

    // Sparsity.
    let series = pad_sparsity(series, &mut stream(seed, STREAM_SPARSITY));
    let padded_len = series.first().map(SiteSeries::len).unwrap_or(0);

    // Setup and evaluation.
    let global: Vec<f64> = sites
        .iter()
        .flat_map(|s| s.reference.iter().copied())
        .collect();
    let global = Sample::new(global)?;
    let mut schemes = Vec::with_capacity(config.schemes.len());
    for (k, &scheme) in config.schemes.iter().enumerate() {
        let agent_seed = mix(mix(seed, STREAM_AGENTS), k as u64);
        let run = if scheme.is_multi_center() {
            let window_size = ceil_fraction(cell.window_fraction, padded_len).max(2);
            let mut agents = Vec::with_capacity(sites.len());
            for (i, (site, s)) in sites.iter().zip(&series).enumerate() {
                let spec = ReferenceSpec {
                    kind: scheme,
                    global_eval: global.clone(),
                    site_eval: Some(Sample::new(site.reference.clone())?),
                    adaptive: config.adaptive_params(),
                };
                agents.push(monitor(
                    config,
                    &site.id,
                    spec,
                    window_size,
                    mix(agent_seed, i as u64),
                    &s.values,
                    &s.drift_mask,
                )?);
            }
            let logs: Vec<&[DriftVerdict]> = agents.iter().map(|a| a.verdicts.as_slice()).collect();
            let truth: Vec<Vec<bool>> = agents.iter().map(AgentRun::truth_labels).collect();
            let excluded: BTreeSet<usize> = agents
                .iter()
                .flat_map(|a| a.reference_batches.iter().copied())
                .collect();
            let n_batches = padded_len / window_size;
            let severity =
                severity_timeline(&logs, &truth, n_batches, &excluded, config.severity_tp_rule)?;
            let counts = score_severity(&severity);
            SchemeRun {
                scheme,
                agents,
                severity,
                severity_counts: Some(counts),
            }
        } else {
            let (values, mask) = interleave(&series);
            let window_size = ceil_fraction(cell.window_fraction, values.len()).max(2);
            let spec = ReferenceSpec {
                kind: scheme,
                global_eval: global.clone(),
                site_eval: None,
                adaptive: config.adaptive_params(),
            };
            let agent = monitor(
                config,
                CENTRAL_AGENT,
                spec,
                window_size,
                agent_seed,
                &values,
                &mask,
            )?;
            SchemeRun {
                scheme,
                agents: vec![agent],
                severity: Vec::new(),
                severity_counts: None,
            }
        };
        schemes.push(run);
    }
    Ok(ReplicateResult {
        cell: *cell,
        replicate,
        seed,
        schemes,
    })
}

fn monitor(
    config: &SimConfig,
    center: &str,
    spec: ReferenceSpec,
    window_size: usize,
    seed: u64,
    values: &[Option<f64>],
    mask: &[bool],
) -> Result<AgentRun, SimError> {
    let min_valid = config
        .min_valid
        .unwrap_or_else(|| default_min_valid(window_size))
        .clamp(2, window_size);
    let agent_config = AgentConfig {
        threshold: config.threshold,
        test: PermutationTest::new(config.permutations, config.resampling),
        min_valid,
        seed,
        ..AgentConfig::new(
            AgentId::new(center, config.model.clone()),
            spec,
            window_size,
        )
    };
    let mut agent = Agent::new(agent_config)?;
    if let Some(url) = &config.webhook_url {
        agent.add_hook(Box::new(WebhookHook::new(url.clone())));
    }
    agent.run_series(values)?;
    let batches = window_truth(values, mask, window_size, config.batch_label_rho);
    let truth: Vec<bool> = batches.iter().map(|b| b.drift).collect();
    let detection = score_detection(agent.log(), &truth)?;
    Ok(AgentRun {
        agent: center.to_string(),
        window_size,
        batches,
        verdicts: agent.log().to_vec(),
        reference_batches: agent.reference_batches().to_vec(),
        adaptive_trace: agent.adaptive_trace().to_vec(),
        detection,
        hook_failures: agent.hook_failures().len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeSummary {
    pub scheme: SchemeKind,
    /// Agents per replicate.
    pub agents: usize,
    /// Completed replicates.
    pub replicates: usize,
    pub detection: PoolSummary,
    /// Absent for Centralized, which has a single agent.
    pub severity: Option<PoolSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: String,
    pub drift_strength: f64,
    pub drift_duration: f64,
    pub window_fraction: f64,
    pub schemes: Vec<SchemeSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub cell: String,
    pub replicate: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub cells: Vec<CellSummary>,
    pub overall: Vec<SchemeSummary>,
    pub failures: Vec<ReplicateFailure>,
}

/// Metric pools of one scheme; detection holds one tuple per agent and
/// replicate, severity one per replicate.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SchemePools {
    pub agents: usize,
    pub replicates: usize,
    pub detection: MetricPool,
    pub severity: MetricPool,
}

impl SchemePools {
    pub fn add(&mut self, run: &SchemeRun, policy: EmptyClassPolicy) {
        let detection: Vec<ConfusionCounts> = run.agents.iter().map(|a| a.detection).collect();
        self.add_counts(&detection, run.severity_counts.as_ref(), policy);
    }

    /// Adds one replicate given its per-agent detection counts and, for
    /// multi-center schemes, its severity counts.
    pub fn add_counts(
        &mut self,
        detection: &[ConfusionCounts],
        severity: Option<&ConfusionCounts>,
        policy: EmptyClassPolicy,
    ) {
        self.agents = detection.len();
        self.replicates += 1;
        for counts in detection {
            self.detection.push(counts, policy);
        }
        if let Some(counts) = severity {
            self.severity.push(counts, policy);
        }
    }

    pub fn merge(&mut self, other: &SchemePools) {
        self.agents = self.agents.max(other.agents);
        self.replicates += other.replicates;
        self.detection.extend(&other.detection);
        self.severity.extend(&other.severity);
    }

    pub fn summarize(&self, scheme: SchemeKind) -> SchemeSummary {
        SchemeSummary {
            scheme,
            agents: self.agents,
            replicates: self.replicates,
            detection: self.detection.summarize(),
            severity: scheme.is_multi_center().then(|| self.severity.summarize()),
        }
    }
}

/// Aggregates replicate results cell by cell into a [`GridSummary`].
#[derive(Debug, Clone)]
pub struct GridAccumulator {
    schemes: Vec<SchemeKind>,
    policy: EmptyClassPolicy,
    cells: Vec<(Cell, Vec<SchemePools>)>,
    failures: Vec<ReplicateFailure>,
}

impl GridAccumulator {
    pub fn new(schemes: Vec<SchemeKind>, policy: EmptyClassPolicy) -> Self {
        Self {
            schemes,
            policy,
            cells: Vec::new(),
            failures: Vec::new(),
        }
    }

    fn cell_pools(&mut self, cell: &Cell) -> &mut Vec<SchemePools> {
        let label = cell.label();
        let pos = match self.cells.iter().position(|(c, _)| c.label() == label) {
            Some(p) => p,
            None => {
                self.cells
                    .push((*cell, vec![SchemePools::default(); self.schemes.len()]));
                self.cells.len() - 1
            }
        };
        &mut self.cells[pos].1
    }

    pub fn add(&mut self, result: &ReplicateResult) {
        for run in &result.schemes {
            let detection: Vec<ConfusionCounts> = run.agents.iter().map(|a| a.detection).collect();
            self.add_counts(
                &result.cell,
                run.scheme,
                &detection,
                run.severity_counts.as_ref(),
            );
        }
    }

    /// Registers a cell so it is reported even if all its replicates fail.
    pub fn add_cell(&mut self, cell: &Cell) {
        self.cell_pools(cell);
    }

    pub fn add_counts(
        &mut self,
        cell: &Cell,
        scheme: SchemeKind,
        detection: &[ConfusionCounts],
        severity: Option<&ConfusionCounts>,
    ) {
        let policy = self.policy;
        let index = self.schemes.iter().position(|s| *s == scheme);
        let pools = self.cell_pools(cell);
        if let Some(i) = index {
            pools[i].add_counts(detection, severity, policy);
        }
    }

    pub fn add_failure(&mut self, cell: &Cell, replicate: usize, error: String) {
        self.cell_pools(cell);
        self.failures.push(ReplicateFailure {
            cell: cell.label(),
            replicate,
            error,
        });
    }

    pub fn finish(self) -> GridSummary {
        let mut overall = vec![SchemePools::default(); self.schemes.len()];
        let mut cells = Vec::with_capacity(self.cells.len());
        for (cell, pools) in &self.cells {
            for (acc, p) in overall.iter_mut().zip(pools) {
                acc.merge(p);
            }
            cells.push(CellSummary {
                cell: cell.label(),
                drift_strength: cell.drift_strength,
                drift_duration: cell.drift_duration,
                window_fraction: cell.window_fraction,
                schemes: self
                    .schemes
                    .iter()
                    .zip(pools)
                    .map(|(&s, p)| p.summarize(s))
                    .collect(),
            });
        }
        GridSummary {
            cells,
            overall: self
                .schemes
                .iter()
                .zip(&overall)
                .map(|(&s, p)| p.summarize(s))
                .collect(),
            failures: self.failures,
        }
    }
}

/// Runs every cell of the grid for `config.replicates` replicates.
///
/// Replicates of a cell run in parallel on the current rayon pool; results
/// reach `sink` and the aggregate in (cell, replicate) order, so the output
/// does not depend on the thread count. Failed replicates are recorded and
/// skipped.
pub fn run_grid<F>(
    config: &SimConfig,
    sites: &[SiteInput],
    mut sink: F,
) -> Result<GridSummary, SimError>
where
    F: FnMut(&ReplicateResult) -> Result<(), SimError>,
{
    config.validate()?;
    let mut acc = GridAccumulator::new(config.schemes.clone(), config.empty_class_policy);
    for cell in config.cells() {
        acc.add_cell(&cell);
        let results: Vec<Result<ReplicateResult, SimError>> = (0..config.replicates)
            .into_par_iter()
            .map(|r| run_replicate(config, &cell, sites, r))
            .collect();
        for (r, result) in results.into_iter().enumerate() {
            match result {
                Ok(result) => {
                    sink(&result)?;
                    acc.add(&result);
                }
                Err(e) => {
                    tracing::warn!(cell = %cell.label(), replicate = r, error = %e, "replicate failed");
                    acc.add_failure(&cell, r, e.to_string());
                }
            }
        }
    }
    Ok(acc.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> SimConfig {
        SimConfig {
            drift_strengths: vec![0.5],
            drift_durations: vec![0.3],
            window_fractions: vec![0.10],
            permutations: 200,
            replicates: 2,
            ..SimConfig::default()
        }
    }

    fn sites(config: &SimConfig) -> Vec<SiteInput> {
        config
            .synthetic_sites()
            .into_iter()
            .map(|s| {
                let (id, spec) = s.unwrap();
                SiteInput::Synthetic { id, spec }
            })
            .collect()
    }

    #[test]
    fn default_grid_has_27_cells() {
        let config = SimConfig::default();
        config.validate().unwrap();
        assert_eq!(config.cells().len(), 27);
        assert_eq!(config.replicates, 500);
        assert_eq!(config.schemes.len(), 5);
    }

    #[test]
    fn validation_reports_field_paths() {
        let c = SimConfig {
            drift_durations: vec![0.3, 1.2],
            ..SimConfig::default()
        };
        match c.validate().unwrap_err() {
            SimError::Config { path, .. } => assert_eq!(path, "drift_durations[1]"),
            e => panic!("unexpected {e}"),
        }
        let mut c = SimConfig::default();
        c.schemes.clear();
        assert!(matches!(c.validate(), Err(SimError::Config { path, .. }) if path == "schemes"));
    }

    #[test]
    fn agent_counts_per_scheme() {
        let config = small_config();
        let sites = sites(&config);
        let r = run_replicate(&config, &config.cells()[0], &sites, 0).unwrap();
        for run in &r.schemes {
            let expected = if run.scheme == SchemeKind::Centralized {
                1
            } else {
                4
            };
            assert_eq!(run.agents.len(), expected, "{}", run.scheme);
            assert_eq!(run.severity_counts.is_some(), run.scheme.is_multi_center());
        }
    }

    #[test]
    fn replicate_is_deterministic() {
        let config = small_config();
        let sites = sites(&config);
        let cell = config.cells()[0];
        assert_eq!(
            run_replicate(&config, &cell, &sites, 1).unwrap(),
            run_replicate(&config, &cell, &sites, 1).unwrap()
        );
        assert_ne!(
            run_replicate(&config, &cell, &sites, 0).unwrap().seed,
            run_replicate(&config, &cell, &sites, 1).unwrap().seed
        );
    }

    #[test]
    fn verdict_counts_respect_windowing() {
        let config = small_config();
        let sites = sites(&config);
        let r = run_replicate(&config, &config.cells()[0], &sites, 0).unwrap();
        for run in &r.schemes {
            for agent in &run.agents {
                let windows = agent.batches.len();
                let unevaluated = agent
                    .batches
                    .iter()
                    .filter(|b| {
                        b.n_valid
                            < config
                                .min_valid
                                .unwrap_or(default_min_valid(agent.window_size))
                    })
                    .count();
                let consumed = agent.reference_batches.len();
                assert_eq!(agent.verdicts.len(), windows - unevaluated - consumed);
                assert!(consumed <= usize::from(run.scheme == SchemeKind::ProdRef));
            }
        }
    }

    #[test]
    fn no_injection_means_no_positives() {
        let config = SimConfig {
            drift_strengths: vec![0.0],
            ..small_config()
        };
        let sites = sites(&config);
        let r = run_replicate(&config, &config.cells()[0], &sites, 0).unwrap();
        for run in &r.schemes {
            for agent in &run.agents {
                assert!(agent.batches.iter().all(|b| !b.drift && b.n_drifted == 0));
                assert_eq!(agent.detection.tp + agent.detection.fn_, 0);
            }
        }
    }

    #[test]
    fn single_cell_single_replicate_grid() {
        let config = SimConfig {
            replicates: 1,
            ..small_config()
        };
        let sites = sites(&config);
        let mut seen = Vec::new();
        let summary = run_grid(&config, &sites, |r| {
            seen.push(r.replicate);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![0]);
        assert_eq!(summary.cells.len(), 1);
        assert_eq!(summary.cells[0].schemes.len(), 5);
        assert!(summary.failures.is_empty());
    }

    #[test]
    fn failing_replicates_are_recorded() {
        let config = SimConfig {
            drift_durations: vec![0.99],
            replicates: 2,
            ..small_config()
        };
        let sites = sites(&config);
        let summary = run_grid(&config, &sites, |_| Ok(())).unwrap();
        assert_eq!(summary.failures.len(), 2);
        assert!(summary.failures[0].error.contains("drift-exceeds-series"));
    }
}

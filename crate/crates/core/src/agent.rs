//! Drift-monitoring agent: initialization, perception (batch windowing),
//! reasoning (KS test against the scheme's reference) and action (verdict
//! log plus hooks).

use std::fmt;
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schemes::{
    make_reference, Reference, ReferenceProvider, ReferenceSpec, SchemeError, SchemeKind,
};
use crate::stats::{ks_vs_histogram, KsResult, PermutationTest, Resampling, Sample, StatsError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("window-too-small: window size {0} < 2")]
    WindowTooSmall(usize),
    #[error("unsupported-regime: only batch monitoring is implemented")]
    UnsupportedRegime,
    #[error("invalid-probability: {0} is outside [0, 1]")]
    InvalidProbability(f64),
    #[error("invalid threshold {0}: must lie in (0, 1)")]
    InvalidThreshold(f64),
    #[error("invalid min_valid {min_valid}: must lie in [2, {window_size}]")]
    InvalidMinValid {
        min_valid: usize,
        window_size: usize,
    },
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// The (center, model) pair an agent watches.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AgentId {
    pub center: String,
    pub model: String,
}

impl AgentId {
    pub fn new(center: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            center: center.into(),
            model: model.into(),
        }
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.center, self.model)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    #[default]
    Batch,
    Online,
}

/// Default minimum number of non-null observations for a window to be tested.
pub fn default_min_valid(window_size: usize) -> usize {
    (window_size / 2).max(2)
}

#[derive(Debug, Clone)]
pub struct AgentConfig {
    pub id: AgentId,
    pub scheme: ReferenceSpec,
    pub regime: Regime,
    pub window_size: usize,
    pub threshold: f64,
    pub test: PermutationTest,
    pub min_valid: usize,
    pub seed: u64,
}

impl AgentConfig {
    pub fn new(id: AgentId, scheme: ReferenceSpec, window_size: usize) -> Self {
        Self {
            id,
            scheme,
            regime: Regime::Batch,
            window_size,
            threshold: 0.05,
            test: PermutationTest::default(),
            min_valid: default_min_valid(window_size),
            seed: 0,
        }
    }

    pub fn with_resampling(mut self, permutations: usize, resampling: Resampling) -> Self {
        self.test = PermutationTest::new(permutations, resampling);
        self
    }
}

/// Result of one monitoring window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftVerdict {
    pub agent_id: AgentId,
    pub batch_index: usize,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub drift: bool,
    pub n_valid: usize,
    pub evaluated: bool,
}

/// Record handed to action hooks when drift is flagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub agent_id: String,
    pub batch_index: usize,
    pub p_value: Option<f64>,
    pub drift: bool,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("hook {hook} failed: {message}")]
pub struct HookError {
    pub hook: String,
    pub message: String,
}

pub trait ActionHook: Send {
    fn name(&self) -> &str;
    fn fire(&mut self, record: &ActionRecord) -> Result<(), HookError>;
}

/// Collects records in memory; clones share the same buffer.
#[derive(Debug, Clone, Default)]
pub struct RecordingHook {
    records: Arc<Mutex<Vec<ActionRecord>>>,
}

impl RecordingHook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> Vec<ActionRecord> {
        self.records.lock().expect("hook buffer poisoned").clone()
    }
}

impl ActionHook for RecordingHook {
    fn name(&self) -> &str {
        "recording"
    }

    fn fire(&mut self, record: &ActionRecord) -> Result<(), HookError> {
        self.records
            .lock()
            .expect("hook buffer poisoned")
            .push(record.clone());
        Ok(())
    }
}

/// Emits a `tracing` event per drift record.
#[derive(Debug, Clone, Copy, Default)]
pub struct LogHook;

impl ActionHook for LogHook {
    fn name(&self) -> &str {
        "log"
    }

    fn fire(&mut self, record: &ActionRecord) -> Result<(), HookError> {
        tracing::info!(
            agent = %record.agent_id,
            batch = record.batch_index,
            p_value = ?record.p_value,
            "drift detected"
        );
        Ok(())
    }
}

/// Fire-and-forget JSON POST of each record to `url`.
#[derive(Debug, Clone)]
pub struct WebhookHook {
    url: String,
    timeout: Duration,
}

impl WebhookHook {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            timeout: Duration::from_secs(5),
        }
    }
}

impl ActionHook for WebhookHook {
    fn name(&self) -> &str {
        "webhook"
    }

    fn fire(&mut self, record: &ActionRecord) -> Result<(), HookError> {
        let body = serde_json::to_value(record).map_err(|e| HookError {
            hook: self.name().to_string(),
            message: e.to_string(),
        })?;
        let url = self.url.clone();
        let timeout = self.timeout;
        std::thread::Builder::new()
            .name("driftnet-webhook".into())
            .spawn(move || {
                let agent = ureq::AgentBuilder::new().timeout(timeout).build();
                if let Err(e) = agent.post(&url).send_json(body) {
                    tracing::warn!(%url, error = %e, "webhook delivery failed");
                }
            })
            .map(|_| ())
            .map_err(|e| HookError {
                hook: "webhook".to_string(),
                message: e.to_string(),
            })
    }
}

/// One reasoning step of an AdaptiveRef agent, for auditing updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveStep {
    pub batch_index: usize,
    pub p_value: f64,
    pub drift: bool,
    pub updated: bool,
    pub lambda_before: f64,
    pub lambda_after: f64,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

pub struct Agent {
    config: AgentConfig,
    provider: ReferenceProvider,
    rng: ChaCha8Rng,
    buffer: Vec<Option<f64>>,
    batch_index: usize,
    ingested: usize,
    log: Vec<DriftVerdict>,
    hooks: Vec<Box<dyn ActionHook>>,
    hook_failures: Vec<HookError>,
    reference_batches: Vec<usize>,
    pending: Option<(Sample, KsResult)>,
    adaptive_trace: Vec<AdaptiveStep>,
}

impl fmt::Debug for Agent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Agent")
            .field("id", &self.config.id)
            .field("scheme", &self.config.scheme.kind)
            .field("batch_index", &self.batch_index)
            .field("ingested", &self.ingested)
            .finish_non_exhaustive()
    }
}

/// Registers an agent: validates its configuration and builds the reference.
pub fn init_agent(config: AgentConfig) -> Result<Agent, AgentError> {
    Agent::new(config)
}

impl Agent {
    pub fn new(config: AgentConfig) -> Result<Self, AgentError> {
        if config.regime == Regime::Online {
            return Err(AgentError::UnsupportedRegime);
        }
        if config.window_size < 2 {
            return Err(AgentError::WindowTooSmall(config.window_size));
        }
        if !(config.threshold > 0.0 && config.threshold < 1.0) {
            return Err(AgentError::InvalidThreshold(config.threshold));
        }
        if config.min_valid < 2 || config.min_valid > config.window_size {
            return Err(AgentError::InvalidMinValid {
                min_valid: config.min_valid,
                window_size: config.window_size,
            });
        }
        let provider = make_reference(&config.scheme, None)?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            buffer: Vec::with_capacity(config.window_size),
            provider,
            config,
            batch_index: 0,
            ingested: 0,
            log: Vec::new(),
            hooks: Vec::new(),
            hook_failures: Vec::new(),
            reference_batches: Vec::new(),
            pending: None,
            adaptive_trace: Vec::new(),
        })
    }

    pub fn add_hook(&mut self, hook: Box<dyn ActionHook>) {
        self.hooks.push(hook);
    }

    pub fn id(&self) -> &AgentId {
        &self.config.id
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn scheme(&self) -> SchemeKind {
        self.config.scheme.kind
    }

    pub fn provider(&self) -> &ReferenceProvider {
        &self.provider
    }

    pub fn ingested(&self) -> usize {
        self.ingested
    }

    /// Index of the next window to be completed.
    pub fn batch_index(&self) -> usize {
        self.batch_index
    }

    /// Append-only log of evaluated verdicts, in batch order.
    pub fn log(&self) -> &[DriftVerdict] {
        &self.log
    }

    pub fn hook_failures(&self) -> &[HookError] {
        &self.hook_failures
    }

    /// Windows consumed as the ProdRef reference.
    pub fn reference_batches(&self) -> &[usize] {
        &self.reference_batches
    }

    pub fn adaptive_trace(&self) -> &[AdaptiveStep] {
        &self.adaptive_trace
    }

    /// Buffers one observation (`None` = missing). Returns a verdict when the
    /// window fills, except for the window ProdRef consumes as reference.
    pub fn ingest(&mut self, observation: Option<f64>) -> Result<Option<DriftVerdict>, AgentError> {
        if let Some(v) = observation {
            if !(0.0..=1.0).contains(&v) {
                return Err(AgentError::InvalidProbability(v));
            }
        }
        self.buffer.push(observation);
        self.ingested += 1;
        if self.buffer.len() < self.config.window_size {
            return Ok(None);
        }
        let window = std::mem::take(&mut self.buffer);
        let index = self.batch_index;
        self.batch_index += 1;
        self.reason(index, window)
    }

    fn unevaluated(&self, batch_index: usize, n_valid: usize) -> DriftVerdict {
        DriftVerdict {
            agent_id: self.config.id.clone(),
            batch_index,
            statistic: None,
            p_value: None,
            drift: false,
            n_valid,
            evaluated: false,
        }
    }

    fn reason(
        &mut self,
        batch_index: usize,
        window: Vec<Option<f64>>,
    ) -> Result<Option<DriftVerdict>, AgentError> {
        let valid: Vec<f64> = window.into_iter().flatten().collect();
        let n_valid = valid.len();
        if n_valid < self.config.min_valid {
            return Ok(Some(self.unevaluated(batch_index, n_valid)));
        }
        let batch = Sample::new(valid)?;
        if self.provider.awaiting_production() {
            self.provider.install_production(batch)?;
            self.reference_batches.push(batch_index);
            return Ok(None);
        }
        let result = match self.provider.current() {
            Some(Reference::Sample(reference)) => {
                self.config.test.run(&batch, reference, &mut self.rng)?
            }
            Some(Reference::Histogram(reference)) => ks_vs_histogram(
                &batch,
                reference,
                self.config.test.permutations,
                &mut self.rng,
            )?,
            None => unreachable!("reference installed above"),
        };
        let drift = result.p_value < self.config.threshold;
        if self.provider.adaptive().is_some() {
            self.pending = Some((batch, result));
        }
        Ok(Some(DriftVerdict {
            agent_id: self.config.id.clone(),
            batch_index,
            statistic: Some(result.statistic),
            p_value: Some(result.p_value),
            drift,
            n_valid,
            evaluated: true,
        }))
    }

    /// Records the verdict, fires hooks on drift and then lets an adaptive
    /// reference consider the window.
    pub fn act(&mut self, verdict: DriftVerdict) {
        let pending = self.pending.take();
        if !verdict.evaluated {
            return;
        }
        if verdict.drift {
            let record = ActionRecord {
                agent_id: verdict.agent_id.to_string(),
                batch_index: verdict.batch_index,
                p_value: verdict.p_value,
                drift: verdict.drift,
                timestamp_ms: now_ms(),
            };
            for hook in &mut self.hooks {
                if let Err(e) = hook.fire(&record) {
                    tracing::warn!(error = %e, "action hook failed");
                    self.hook_failures.push(e);
                }
            }
        }
        if let (Some(state), Some((batch, result))) = (self.provider.adaptive_mut(), pending) {
            let lambda_before = state.lambda();
            let updated = state.observe(&batch, &result, self.config.threshold);
            self.adaptive_trace.push(AdaptiveStep {
                batch_index: verdict.batch_index,
                p_value: result.p_value,
                drift: verdict.drift,
                updated,
                lambda_before,
                lambda_after: state.lambda(),
            });
        }
        self.log.push(verdict);
    }

    /// `ingest` followed by `act` on any resulting verdict.
    pub fn step(&mut self, observation: Option<f64>) -> Result<Option<DriftVerdict>, AgentError> {
        let verdict = self.ingest(observation)?;
        if let Some(v) = &verdict {
            self.act(v.clone());
        }
        Ok(verdict)
    }

    /// Feeds a whole series; a trailing partial window is left unevaluated.
    pub fn run_series(&mut self, series: &[Option<f64>]) -> Result<(), AgentError> {
        for &obs in series {
            self.step(obs)?;
        }
        Ok(())
    }
}

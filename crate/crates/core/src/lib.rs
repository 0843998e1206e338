//! Multisite output-drift monitoring.
//!
//! Each clinical site gets a drift-monitoring [`agent::Agent`] that tests
//! non-overlapping windows of model output probabilities against a
//! reference distribution chosen by its [`schemes::SchemeKind`]. Verdicts
//! from agents watching the same model are combined into a consensus
//! [`severity`] score. The [`sim`] module injects known drift into
//! per-site series and scores the agents with [`metrics`].

pub mod agent;
pub mod metrics;
pub mod schemes;
pub mod seed;
pub mod severity;
pub mod sim;
pub mod stats;

pub use agent::{init_agent, Agent, AgentConfig, AgentError, AgentId, DriftVerdict};
pub use schemes::{make_reference, AdaptiveState, ReferenceSpec, SchemeKind};
pub use sim::{run_grid, run_replicate, SimConfig, SimError};
pub use stats::{Histogram, KsResult, Sample, StatsError};

//! Deterministic discrete-event simulation.
//!
//! Two serving disciplines are modeled for accelerator access: `Paam`
//! (per-request overhead, priority buckets with cross-bucket preemption,
//! priority queues within buckets) and `FifoDirect` (requests hit the
//! device queue directly, served in arrival order, no overheads).

mod engine;
pub mod events;
pub mod stats;

pub use events::{trace_to_tsv, EventKind, SimEvent, TRACE_VERSION};
pub use stats::{
    check_against_bounds, ChainStats, ConformanceError, ConformanceReport, ConformanceRow,
    SimStats, UnitStats, STATS_CSV_VERSION,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::SystemConfig;
use crate::time::Duration;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    Paam,
    FifoDirect,
}

impl std::fmt::Display for SimMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SimMode::Paam => write!(f, "paam"),
            SimMode::FifoDirect => write!(f, "fifo"),
        }
    }
}

/// What happens when a new instance releases while an older one is still
/// pending. Best-effort chains always drop the older pending instance;
/// this policy applies to critical chains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverrunPolicy {
    Queue,
    Drop,
}

#[derive(Debug, Clone)]
pub struct SimParams {
    pub mode: SimMode,
    pub duration: Duration,
    pub seed: u64,
    pub critical_overrun: OverrunPolicy,
    /// 0.0 runs every segment at exactly its WCET; a factor f in (0,1)
    /// draws actual times uniformly from (wcet*(1-f), wcet].
    pub wcet_jitter: f64,
    /// Allow lowest-bucket kernels to co-run, each slowed by
    /// `concurrent_slowdown`. Analysis conformance is only claimed with
    /// this off.
    pub concurrent_lowest_bucket: bool,
    pub concurrent_slowdown: f64,
    pub record_trace: bool,
}

impl SimParams {
    pub fn new(mode: SimMode, duration: Duration, seed: u64) -> Self {
        SimParams {
            mode,
            duration,
            seed,
            critical_overrun: OverrunPolicy::Queue,
            wcet_jitter: 0.0,
            concurrent_lowest_bucket: false,
            concurrent_slowdown: 1.3,
            record_trace: true,
        }
    }

    pub fn without_trace(mut self) -> Self {
        self.record_trace = false;
        self
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("simulation duration must be positive")]
    ZeroDuration,
    #[error("wcet jitter factor {0} outside [0, 1)")]
    BadJitter(f64),
    #[error("concurrent slowdown {0} must be at least 1.0")]
    BadSlowdown(f64),
}

#[derive(Debug)]
pub struct SimOutput {
    pub stats: SimStats,
    /// Empty unless `record_trace` was set.
    pub trace: Vec<SimEvent>,
}

/// Runs one simulation to the horizon. Identical inputs produce an
/// identical trace and identical statistics.
pub fn run_simulation(system: &SystemConfig, params: &SimParams) -> Result<SimOutput, SimError> {
    Ok(engine::Engine::new(system, params)?.run())
}

#[cfg(test)]
mod tests;

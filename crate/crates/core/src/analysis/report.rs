//! Analysis report structure and its CSV / JSON renderings.

use serde::{Deserialize, Serialize};

use super::Bound;
use crate::model::Criticality;
use crate::time::Duration;

pub const ANALYSIS_CSV_VERSION: &str = "#paam-analysis-v1";

/// The two handling-time bounds for one chain plus derived values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandlingBounds {
    /// Sum of per-segment fixed points.
    pub per_segment: Bound,
    /// Whole-chain bound evaluated at the response-time candidate.
    pub per_chain: Bound,
    /// Minimum of the two (both are safe).
    pub handling: Bound,
    /// Handling plus per-request server overhead.
    pub with_overhead: Bound,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainReport {
    pub id: String,
    pub priority: u32,
    pub criticality: Criticality,
    pub blocking: Duration,
    pub exec_sum: Duration,
    pub bounds: HandlingBounds,
    pub wcrt: Bound,
    pub deadline: Duration,
    pub iterations: u32,
    pub schedulable: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub fingerprint: String,
    pub chains: Vec<ChainReport>,
    /// True iff every critical chain meets its deadline.
    pub schedulable: bool,
}

fn bound_cell(b: Bound) -> String {
    match b {
        Bound::Finite(d) => d.as_ns().to_string(),
        Bound::Unbounded => "unbounded".to_string(),
    }
}

impl AnalysisReport {
    pub fn chain(&self, id: &str) -> Option<&ChainReport> {
        self.chains.iter().find(|c| c.id == id)
    }

    /// One row per chain; durations in nanoseconds.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(ANALYSIS_CSV_VERSION);
        out.push('\n');
        out.push_str(
            "id,priority,criticality,blocking_ns,exec_sum_ns,h_per_segment_ns,h_per_chain_ns,h_star_ns,wcrt_ns,deadline_ns,schedulable\n",
        );
        for c in &self.chains {
            let criticality = match c.criticality {
                Criticality::Critical => "critical",
                Criticality::BestEffort => "best_effort",
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                c.id,
                c.priority,
                criticality,
                c.blocking.as_ns(),
                c.exec_sum.as_ns(),
                bound_cell(c.bounds.per_segment),
                bound_cell(c.bounds.per_chain),
                bound_cell(c.bounds.with_overhead),
                bound_cell(c.wcrt),
                c.deadline.as_ns(),
                c.schedulable,
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }

    pub fn from_json_str(doc: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(doc)
    }

    /// Human-readable summary, one line per chain.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for c in &self.chains {
            let verdict = match (c.wcrt, c.schedulable) {
                (Bound::Finite(r), true) => format!("R={r} <= D={}", c.deadline),
                (Bound::Finite(r), false) => format!("R={r} > D={}", c.deadline),
                (Bound::Unbounded, _) => format!("R=unbounded (D={})", c.deadline),
            };
            let tag = match c.criticality {
                Criticality::Critical => {
                    if c.schedulable {
                        "ok"
                    } else {
                        "MISS"
                    }
                }
                Criticality::BestEffort => "best-effort",
            };
            out.push_str(&format!(
                "  chain {:<16} prio {:<3} {:<12} {}\n",
                c.id, c.priority, tag, verdict
            ));
        }
        out.push_str(&format!(
            "system: {}\n",
            if self.schedulable {
                "SCHEDULABLE"
            } else {
                "NOT SCHEDULABLE"
            }
        ));
        out
    }
}

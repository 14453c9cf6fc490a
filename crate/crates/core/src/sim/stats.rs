//! Per-chain response statistics, per-unit utilization, and conformance
//! checking against an analysis report.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::SimMode;
use crate::analysis::{AnalysisReport, Bound};
use crate::model::Criticality;
use crate::time::Duration;

pub const STATS_CSV_VERSION: &str = "#paam-stats-v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainStats {
    pub id: String,
    pub criticality: Criticality,
    pub released: u64,
    pub completed: u64,
    pub dropped: u64,
    pub deadline_misses: u64,
    pub min: Option<Duration>,
    pub mean: Option<Duration>,
    pub max: Option<Duration>,
    pub p50: Option<Duration>,
    pub p95: Option<Duration>,
    pub p99: Option<Duration>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnitStats {
    pub accel: String,
    pub unit: u32,
    pub busy: Duration,
    pub busy_fraction: f64,
    pub preemptions: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimStats {
    pub fingerprint: String,
    pub mode: SimMode,
    pub duration: Duration,
    pub seed: u64,
    pub chains: Vec<ChainStats>,
    pub units: Vec<UnitStats>,
}

/// Nearest-rank percentile over a sorted sample.
pub(crate) fn percentile(sorted: &[Duration], pct: u32) -> Option<Duration> {
    if sorted.is_empty() {
        return None;
    }
    let rank = (sorted.len() as u64 * u64::from(pct)).div_ceil(100).max(1) as usize;
    Some(sorted[rank - 1])
}

impl SimStats {
    pub fn chain(&self, id: &str) -> Option<&ChainStats> {
        self.chains.iter().find(|c| c.id == id)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(STATS_CSV_VERSION);
        out.push('\n');
        out.push_str("row,id,criticality,released,completed,dropped,deadline_misses,min_ns,mean_ns,max_ns,p50_ns,p95_ns,p99_ns\n");
        let cell = |v: Option<Duration>| match v {
            Some(d) => d.as_ns().to_string(),
            None => "-".into(),
        };
        for c in &self.chains {
            let criticality = match c.criticality {
                Criticality::Critical => "critical",
                Criticality::BestEffort => "best_effort",
            };
            out.push_str(&format!(
                "chain,{},{},{},{},{},{},{},{},{},{},{},{}\n",
                c.id,
                criticality,
                c.released,
                c.completed,
                c.dropped,
                c.deadline_misses,
                cell(c.min),
                cell(c.mean),
                cell(c.max),
                cell(c.p50),
                cell(c.p95),
                cell(c.p99),
            ));
        }
        out.push_str("row,accel,unit,busy_ns,busy_fraction,preemptions\n");
        for u in &self.units {
            out.push_str(&format!(
                "unit,{},{},{},{:.6},{}\n",
                u.accel,
                u.unit,
                u.busy.as_ns(),
                u.busy_fraction,
                u.preemptions
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialization")
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for c in &self.chains {
            let fmt = |v: Option<Duration>| match v {
                Some(d) => d.to_string(),
                None => "-".into(),
            };
            out.push_str(&format!(
                "  chain {:<16} released {:<6} completed {:<6} dropped {:<4} misses {:<4} max {:<12} mean {}\n",
                c.id,
                c.released,
                c.completed,
                c.dropped,
                c.deadline_misses,
                fmt(c.max),
                fmt(c.mean),
            ));
        }
        for u in &self.units {
            out.push_str(&format!(
                "  unit  {:<12} #{} busy {:.1}%  preemptions {}\n",
                u.accel,
                u.unit,
                u.busy_fraction * 100.0,
                u.preemptions
            ));
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum ConformanceError {
    #[error("analysis fingerprint {analysis} does not match simulation fingerprint {simulation}")]
    FingerprintMismatch {
        analysis: String,
        simulation: String,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct ConformanceRow {
    pub id: String,
    pub criticality: Criticality,
    pub observed_max: Option<Duration>,
    pub bound: Bound,
    /// Slack between bound and observation, when both exist.
    pub margin: Option<Duration>,
    /// Pass/fail for critical chains; best-effort rows carry no verdict.
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConformanceReport {
    pub rows: Vec<ConformanceRow>,
    /// True iff every critical chain's observed maximum is within its bound.
    pub all_pass: bool,
}

impl ConformanceReport {
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let verdict = match r.pass {
                Some(true) => "PASS",
                Some(false) => "FAIL",
                None => "info",
            };
            let observed = r
                .observed_max
                .map(|d| d.to_string())
                .unwrap_or_else(|| "-".into());
            let bound = match r.bound {
                Bound::Finite(d) => d.to_string(),
                Bound::Unbounded => "unbounded".into(),
            };
            let margin = r
                .margin
                .map(|d| d.to_string())
                .unwrap_or_else(|| "-".into());
            out.push_str(&format!(
                "  {:<4} chain {:<16} observed_max {:<12} bound {:<12} margin {}\n",
                verdict, r.id, observed, bound, margin
            ));
        }
        out.push_str(&format!(
            "conformance: {}\n",
            if self.all_pass { "PASS" } else { "FAIL" }
        ));
        out
    }
}

/// Compares observed maxima against analysis bounds. Critical chains must
/// stay within their bound; best-effort chains are reported informationally.
pub fn check_against_bounds(
    stats: &SimStats,
    report: &AnalysisReport,
) -> Result<ConformanceReport, ConformanceError> {
    if stats.fingerprint != report.fingerprint {
        return Err(ConformanceError::FingerprintMismatch {
            analysis: report.fingerprint.clone(),
            simulation: stats.fingerprint.clone(),
        });
    }
    let mut rows = Vec::new();
    let mut all_pass = true;
    for c in &stats.chains {
        let analyzed = report.chain(&c.id);
        let bound = analyzed.map(|a| a.wcrt).unwrap_or(Bound::Unbounded);
        let margin = match (bound, c.max) {
            (Bound::Finite(b), Some(m)) if m <= b => Some(b - m),
            _ => None,
        };
        let pass = match c.criticality {
            Criticality::Critical => {
                let ok = match (bound, c.max) {
                    (Bound::Finite(b), Some(m)) => m <= b,
                    // Nothing completed: nothing to violate.
                    (Bound::Finite(_), None) => true,
                    (Bound::Unbounded, _) => false,
                };
                if !ok {
                    all_pass = false;
                }
                Some(ok)
            }
            Criticality::BestEffort => None,
        };
        rows.push(ConformanceRow {
            id: c.id.clone(),
            criticality: c.criticality,
            observed_max: c.max,
            bound,
            margin,
            pass,
        });
    }
    Ok(ConformanceReport { rows, all_pass })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_percentiles() {
        let data: Vec<Duration> = (1..=100).map(Duration::from_ms).collect();
        assert_eq!(percentile(&data, 50), Some(Duration::from_ms(50)));
        assert_eq!(percentile(&data, 99), Some(Duration::from_ms(99)));
        assert_eq!(percentile(&data, 100), Some(Duration::from_ms(100)));
        assert_eq!(percentile(&[], 50), None);
        assert_eq!(
            percentile(&[Duration::from_ms(7)], 1),
            Some(Duration::from_ms(7))
        );
    }
}

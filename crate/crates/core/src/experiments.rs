//! Scripted schedulability-curve experiments and the bundled overloaded
//! accelerator scenario. Every experiment is a pure function of its
//! parameters and seed; trial results are aggregated by index so thread
//! scheduling cannot change the outcome.

use serde::Serialize;
use thiserror::Error;

use crate::analysis::{analyze_system, AnalysisReport, Bound};
use crate::model::SystemConfig;
use crate::sim::{run_simulation, SimMode, SimParams, SimStats};
use crate::time::Duration;
use crate::workload::{GenError, GenParams};

pub const CURVE_CSV_VERSION: &str = "#paam-curve-v1";

/// The accelerator-to-CPU ratios swept by the ratio-curve experiment.
pub const STANDARD_RATIOS: [(u32, u32); 7] =
    [(1, 9), (2, 8), (3, 7), (4, 6), (5, 5), (6, 4), (7, 3)];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error("simulation failed: {0}")]
    Sim(#[from] crate::sim::SimError),
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvePoint {
    pub x: f64,
    pub label: String,
    pub acceptance_ratio: f64,
    pub trials: u32,
    pub seed: u64,
}

pub fn curve_to_csv(points: &[CurvePoint]) -> String {
    let mut out = String::new();
    out.push_str(CURVE_CSV_VERSION);
    out.push('\n');
    out.push_str("x,label,acceptance_ratio,trials,seed\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{:.4},{},{}\n",
            p.x, p.label, p.acceptance_ratio, p.trials, p.seed
        ));
    }
    out
}

/// Counts schedulable trials, fanned out over worker threads off-wasm.
/// Summation over trial indices keeps the result order-independent.
fn acceptance_ratio(params: &GenParams, trials: u32) -> Result<f64, GenError> {
    #[cfg(target_arch = "wasm32")]
    {
        return crate::workload::schedulability_ratio(params, trials);
    }
    #[cfg(not(target_arch = "wasm32"))]
    {
        if trials < 32 {
            return crate::workload::schedulability_ratio(params, trials);
        }
        let workers = std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
            .min(8) as u32;
        let mut accepted = 0u32;
        let mut first_error: Option<GenError> = None;
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for w in 0..workers {
                let params = params.clone();
                handles.push(scope.spawn(move || -> Result<u32, GenError> {
                    let mut count = 0;
                    let mut trial = w;
                    while trial < trials {
                        if crate::workload::trial_is_schedulable(&params, trial)? {
                            count += 1;
                        }
                        trial += workers;
                    }
                    Ok(count)
                }));
            }
            for h in handles {
                match h.join().expect("worker panicked") {
                    Ok(c) => accepted += c,
                    Err(e) => first_error = Some(first_error.take().unwrap_or(e)),
                }
            }
        });
        if let Some(e) = first_error {
            return Err(e);
        }
        Ok(f64::from(accepted) / f64::from(trials))
    }
}

/// Acceptance ratio as the number of chains per chainset grows.
pub fn run_chain_count_curve(
    base: &GenParams,
    m_values: &[u32],
    trials: u32,
) -> Result<Vec<CurvePoint>, ExperimentError> {
    let mut out = Vec::with_capacity(m_values.len());
    for &m in m_values {
        let mut p = base.clone();
        p.chain_count = m;
        out.push(CurvePoint {
            x: f64::from(m),
            label: m.to_string(),
            acceptance_ratio: acceptance_ratio(&p, trials)?,
            trials,
            seed: base.seed,
        });
    }
    Ok(out)
}

/// Acceptance ratio as the accelerator share of a fixed utilization grows.
pub fn run_ratio_curve(
    base: &GenParams,
    ratios: &[(u32, u32)],
    trials: u32,
) -> Result<Vec<CurvePoint>, ExperimentError> {
    let mut out = Vec::with_capacity(ratios.len());
    for &(a, b) in ratios {
        let mut p = base.clone();
        p.accel_ratio = (a, b);
        out.push(CurvePoint {
            x: f64::from(a) / f64::from(a + b),
            label: format!("{a}:{b}"),
            acceptance_ratio: acceptance_ratio(&p, trials)?,
            trials,
            seed: base.seed,
        });
    }
    Ok(out)
}

/// The bundled overload scenario: two critical chains with a
/// device-dominated 52ms workload against four best-effort chains
/// resubmitting the same workload back to back.
pub fn overloaded_scenario() -> SystemConfig {
    SystemConfig::from_json_str(include_str!("../../../experiments/overloaded_gpu.json"))
        .expect("bundled scenario is valid")
}

#[derive(Debug, Clone, Serialize)]
pub struct OverloadRow {
    pub id: String,
    pub critical: bool,
    pub bound: Bound,
    pub paam_max: Option<Duration>,
    pub paam_mean: Option<Duration>,
    pub fifo_max: Option<Duration>,
    pub fifo_mean: Option<Duration>,
}

#[derive(Debug, Serialize)]
pub struct OverloadOutcome {
    pub rows: Vec<OverloadRow>,
    /// Both critical chains observed within their analysis bounds.
    pub criticals_within_bounds: bool,
    /// Top chain's max response reduction vs direct FIFO invocation.
    pub chain1_reduction_vs_fifo: f64,
    pub seed: u64,
    pub duration: Duration,
}

impl OverloadOutcome {
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let fmt = |v: Option<Duration>| v.map(|d| d.to_string()).unwrap_or_else(|| "-".into());
        for r in &self.rows {
            let bound = match r.bound {
                Bound::Finite(d) => d.to_string(),
                Bound::Unbounded => "unbounded".into(),
            };
            out.push_str(&format!(
                "  chain {:<8} {:<12} bound {:<10} paam max {:<10} mean {:<10} fifo max {:<10} mean {}\n",
                r.id,
                if r.critical { "critical" } else { "best-effort" },
                bound,
                fmt(r.paam_max),
                fmt(r.paam_mean),
                fmt(r.fifo_max),
                fmt(r.fifo_mean),
            ));
        }
        out.push_str(&format!(
            "criticals within analysis bounds: {}\n",
            self.criticals_within_bounds
        ));
        out.push_str(&format!(
            "chain 1 max response reduction vs FIFO: {:.1}%\n",
            self.chain1_reduction_vs_fifo * 100.0
        ));
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("#paam-overload-v1\n");
        out.push_str("id,critical,bound_ns,paam_max_ns,paam_mean_ns,fifo_max_ns,fifo_mean_ns\n");
        let cell = |v: Option<Duration>| v.map(|d| d.as_ns().to_string()).unwrap_or_else(|| "-".into());
        for r in &self.rows {
            let bound = match r.bound {
                Bound::Finite(d) => d.as_ns().to_string(),
                Bound::Unbounded => "unbounded".into(),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.id,
                r.critical,
                bound,
                cell(r.paam_max),
                cell(r.paam_mean),
                cell(r.fifo_max),
                cell(r.fifo_mean),
            ));
        }
        out
    }
}

/// Simulates the overload scenario under both serving disciplines and
/// compares observations with the analysis bounds.
pub fn run_overloaded_accelerator_case(
    seed: u64,
    duration: Duration,
) -> Result<OverloadOutcome, ExperimentError> {
    let system = overloaded_scenario();
    let report: AnalysisReport = analyze_system(&system);
    let paam = run_simulation(
        &system,
        &SimParams::new(SimMode::Paam, duration, seed).without_trace(),
    )?;
    let fifo = run_simulation(
        &system,
        &SimParams::new(SimMode::FifoDirect, duration, seed).without_trace(),
    )?;
    Ok(compare_overload(&system, &report, &paam.stats, &fifo.stats, seed, duration))
}

fn compare_overload(
    system: &SystemConfig,
    report: &AnalysisReport,
    paam: &SimStats,
    fifo: &SimStats,
    seed: u64,
    duration: Duration,
) -> OverloadOutcome {
    let mut rows = Vec::new();
    let mut within = true;
    for c in &system.chains {
        let bound = report.chain(&c.id).map(|r| r.wcrt).unwrap_or(Bound::Unbounded);
        let p = paam.chain(&c.id).expect("simulated chain");
        let f = fifo.chain(&c.id).expect("simulated chain");
        if c.is_critical() {
            match (bound, p.max) {
                (Bound::Finite(b), Some(m)) if m <= b => {}
                _ => within = false,
            }
        }
        rows.push(OverloadRow {
            id: c.id.clone(),
            critical: c.is_critical(),
            bound,
            paam_max: p.max,
            paam_mean: p.mean,
            fifo_max: f.max,
            fifo_mean: f.mean,
        });
    }
    let top = system
        .chains_by_priority_desc()
        .into_iter()
        .map(|i| &system.chains[i.0])
        .find(|c| c.is_critical())
        .expect("scenario has critical chains");
    let paam_max = paam.chain(&top.id).and_then(|c| c.max);
    let fifo_max = fifo.chain(&top.id).and_then(|c| c.max);
    let reduction = match (paam_max, fifo_max) {
        (Some(p), Some(f)) if !f.is_zero() => 1.0 - (p.as_ns() as f64 / f.as_ns() as f64),
        _ => 0.0,
    };
    OverloadOutcome {
        rows,
        criticals_within_bounds: within,
        chain1_reduction_vs_fifo: reduction,
        seed,
        duration,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Criticality;

    #[test]
    fn bundled_scenario_matches_the_case_structure() {
        let system = overloaded_scenario();
        assert_eq!(system.chains.len(), 6);
        let crit: Vec<_> = system
            .chains
            .iter()
            .filter(|c| c.criticality == Criticality::Critical)
            .collect();
        assert_eq!(crit.len(), 2);
        assert_eq!(crit[0].period, Duration::from_ms(120));
        assert_eq!(crit[1].period, Duration::from_ms(220));
        // Standalone workload: 2ms CPU + 50ms accelerator = 52ms.
        for c in &system.chains {
            let total: u64 = c
                .callbacks
                .iter()
                .map(|&cb| {
                    let cb = system.callback(cb);
                    cb.cpu_wcet.as_ns() + cb.accel_wcet.as_ns()
                })
                .sum();
            assert_eq!(total, Duration::from_ms(52).as_ns());
        }
        // Best-effort chains re-arrive back to back.
        for c in system.chains.iter().filter(|c| !c.is_critical()) {
            assert_eq!(c.period, Duration::from_ms(52));
        }
    }

    #[test]
    fn analysis_accepts_both_critical_chains() {
        let report = analyze_system(&overloaded_scenario());
        assert!(report.chain("crit1").unwrap().schedulable);
        assert!(report.chain("crit2").unwrap().schedulable);
        assert!(report.schedulable);
    }

    #[test]
    fn smoke_ratio_curve_emits_all_rows() {
        let mut base = GenParams::new(4, 0.3, (1, 1), 9);
        base.chain_count = 4;
        let points = run_ratio_curve(&base, &STANDARD_RATIOS, 1).unwrap();
        assert_eq!(points.len(), 7);
        let csv = curve_to_csv(&points);
        assert_eq!(csv.lines().count(), 2 + 7);
    }

    #[test]
    fn curves_are_reproducible() {
        let base = GenParams::new(3, 0.25, (1, 1), 77);
        let a = run_chain_count_curve(&base, &[2, 4], 40).unwrap();
        let b = run_chain_count_curve(&base, &[2, 4], 40).unwrap();
        assert_eq!(curve_to_csv(&a), curve_to_csv(&b));
    }
}

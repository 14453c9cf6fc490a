//! Worst-case response-time analysis and admission control.
//!
//! A chain's accelerator handling time is bounded two ways and the minimum
//! is taken: per segment (each segment's fixed-point handling time, summed)
//! and per chain (interference counted once over the whole response
//! window). The chain response time is then a fixed point over blocking,
//! CPU execution, handling time, and interference from higher-priority
//! chains on the same executor plus higher-process-priority executors on
//! the same core.
//!
//! All recurrences iterate on exact integer nanoseconds, start below their
//! least fixed point, and abort once the iterate exceeds the chain's
//! deadline, so they always terminate.

mod interference;
mod report;

pub use interference::InterferenceSets;
pub use report::{AnalysisReport, ChainReport, HandlingBounds};

use thiserror::Error;

use crate::model::{
    validate_system, ChainIdx, ConfigError, Criticality, RawCallback, RawChain, RawConfig,
    RawExecutor, SegmentRef, SystemConfig, TimeUnit, WaitPolicy,
};
use crate::time::Duration;

/// Default inter-executor communication cost for end-to-end composition.
pub const DEFAULT_COMM_COST: Duration = Duration::from_us(100);

/// A handling-time value that may fail to converge below its cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Bound {
    Finite(Duration),
    Unbounded,
}

impl Bound {
    pub fn finite(self) -> Option<Duration> {
        match self {
            Bound::Finite(d) => Some(d),
            Bound::Unbounded => None,
        }
    }

    pub fn is_unbounded(self) -> bool {
        matches!(self, Bound::Unbounded)
    }

    fn min(self, other: Bound) -> Bound {
        match (self, other) {
            (Bound::Finite(a), Bound::Finite(b)) => Bound::Finite(a.min(b)),
            (Bound::Finite(a), Bound::Unbounded) => Bound::Finite(a),
            (Bound::Unbounded, b) => b,
        }
    }

    fn plus(self, extra: Duration) -> Bound {
        match self {
            Bound::Finite(d) => Bound::Finite(d + extra),
            Bound::Unbounded => Bound::Unbounded,
        }
    }
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("end-to-end composition needs at least one sub-chain")]
    EmptyComposition,
    #[error("sub-chain {0:?} is unschedulable; no end-to-end bound exists")]
    UnschedulableSubChain(String),
    #[error("unknown chain id {0:?}")]
    UnknownChain(String),
}

/// Maximum number of requests one periodic source can inject into an
/// arbitrary window of length `t`: the jobs released inside the window
/// plus one carry-in job released before it.
pub fn arrival_bound(t: Duration, period: Duration) -> u64 {
    assert!(!period.is_zero(), "arrival bound rejects a zero period");
    t.div_ceil(period) + 1
}

/// Fixed point of the per-segment handling recurrence: own inflated WCET,
/// plus one same-bucket blocking request, plus higher-priority requests
/// arriving while the segment is being handled. `Unbounded` once the
/// iterate exceeds `cutoff`.
pub fn segment_handling_time(
    system: &SystemConfig,
    intf: &InterferenceSets,
    seg: SegmentRef,
    cutoff: Duration,
) -> Bound {
    let base = system.inflated_wcet(seg) + same_bucket_blocking(system, intf, seg);
    let mut h = base;
    if h > cutoff {
        return Bound::Unbounded;
    }
    loop {
        let mut next = base;
        for &k in intf.hps(seg) {
            let t_k = system.chain(system.chain_of_callback(k.callback)).period;
            next += system.inflated_wcet(k) * arrival_bound(h, t_k);
        }
        if next == h {
            return Bound::Finite(h);
        }
        if next > cutoff {
            return Bound::Unbounded;
        }
        h = next;
    }
}

/// Largest same-bucket, same-unit request from a lower-priority chain.
fn same_bucket_blocking(
    system: &SystemConfig,
    intf: &InterferenceSets,
    seg: SegmentRef,
) -> Duration {
    let accel = system.segment(seg).accelerator.expect("accel segment");
    let own_bucket = system.bucket_of(system.chain_of_callback(seg.callback), accel);
    intf.lps(seg)
        .iter()
        .filter(|&&k| system.bucket_of(system.chain_of_callback(k.callback), accel) == own_bucket)
        .map(|&k| system.inflated_wcet(k))
        .max()
        .unwrap_or(Duration::ZERO)
}

/// Per-segment bound for the whole chain: the sum of all segment handling
/// times, `Unbounded` as soon as one summand is.
pub fn chain_handling_per_segment(
    system: &SystemConfig,
    intf: &InterferenceSets,
    chain: ChainIdx,
) -> Bound {
    let cutoff = system.chain(chain).deadline;
    let mut total = Duration::ZERO;
    for seg in system.accel_segments_of_chain(chain) {
        match segment_handling_time(system, intf, seg, cutoff) {
            Bound::Finite(h) => total += h,
            Bound::Unbounded => return Bound::Unbounded,
        }
    }
    Bound::Finite(total)
}

/// Per-chain bound: own requests and their blocking, plus each interfering
/// higher-priority segment counted once over the response-time window.
/// Always finite for a finite window.
pub fn chain_handling_per_chain(
    system: &SystemConfig,
    intf: &InterferenceSets,
    chain: ChainIdx,
    response_candidate: Duration,
) -> Duration {
    let mut total = Duration::ZERO;
    for seg in system.accel_segments_of_chain(chain) {
        total += system.inflated_wcet(seg) + same_bucket_blocking(system, intf, seg);
    }
    for &k in intf.hps_union(chain) {
        let t_k = system.chain(system.chain_of_callback(k.callback)).period;
        total += system.inflated_wcet(k) * arrival_bound(response_candidate, t_k);
    }
    total
}

/// Per-request server overhead summed over the chain's accelerator
/// segments (`δ_c · ε` when a single accelerator is involved).
pub fn overhead_sum(system: &SystemConfig, chain: ChainIdx) -> Duration {
    system
        .accel_segments_of_chain(chain)
        .iter()
        .map(|&seg| {
            system
                .accelerator(system.segment(seg).accelerator.expect("accel segment"))
                .epsilon
        })
        .fold(Duration::ZERO, |acc, e| acc + e)
}

/// Both handling bounds for a chain at a given response-time candidate,
/// their minimum, and the overhead-inclusive total.
pub fn effective_handling(
    system: &SystemConfig,
    intf: &InterferenceSets,
    chain: ChainIdx,
    per_segment: Bound,
    response_candidate: Duration,
) -> HandlingBounds {
    let per_chain = Bound::Finite(chain_handling_per_chain(
        system,
        intf,
        chain,
        response_candidate,
    ));
    let handling = per_segment.min(per_chain);
    HandlingBounds {
        per_segment,
        per_chain,
        handling,
        with_overhead: handling.plus(overhead_sum(system, chain)),
    }
}

/// Longest callback CPU time among lower-priority chains on the same
/// executor (non-preemptive callback scheduling admits one such blocker).
pub fn blocking_term(system: &SystemConfig, intf: &InterferenceSets, chain: ChainIdx) -> Duration {
    intf.lp(chain)
        .iter()
        .flat_map(|&l| system.chain(l).callbacks.iter())
        .map(|&cb| system.callback(cb).cpu_wcet)
        .max()
        .unwrap_or(Duration::ZERO)
}

/// CPU time an interfering chain steals per instance when it runs in a
/// higher-process-priority executor on the same core: its own execution
/// plus either the full handling time (spinning) or just the per-request
/// overhead (suspending).
fn core_steal(system: &SystemConfig, chain: ChainIdx, h_star: Duration) -> Duration {
    let c = system.chain(chain);
    match system.executor(c.executor).wait_policy {
        WaitPolicy::Spin => c.exec_sum + h_star,
        WaitPolicy::Suspend => c.exec_sum + overhead_sum(system, chain),
    }
}

/// Outcome of one chain's response-time recurrence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WcrtOutcome {
    pub wcrt: Bound,
    pub iterations: u32,
    pub bounds_at_fixpoint: Option<HandlingBoundsValue>,
}

/// Plain-value snapshot of [`HandlingBounds`] (see [`report`]).
pub type HandlingBoundsValue = HandlingBounds;

/// Response-time fixed point for one chain. Interfering chains' handling
/// bounds must be supplied via `interferer_h_star`, which returns the best
/// known bound on that chain's overhead-inclusive handling time.
fn chain_wcrt_inner(
    system: &SystemConfig,
    intf: &InterferenceSets,
    chain: ChainIdx,
    interferer_h_star: &dyn Fn(ChainIdx) -> Bound,
) -> WcrtOutcome {
    let c = system.chain(chain);
    let cutoff = c.deadline;
    let blocking = blocking_term(system, intf, chain);
    let per_segment = chain_handling_per_segment(system, intf, chain);

    // Gather interference coefficients up front; any unbounded interferer
    // makes the chain unanalyzable (hence unschedulable at this deadline).
    let mut hp_terms = Vec::new();
    for &h in intf.hp(chain) {
        match interferer_h_star(h) {
            Bound::Finite(hs) => {
                hp_terms.push((system.chain(h).period, system.chain(h).exec_sum + hs))
            }
            Bound::Unbounded => {
                return WcrtOutcome {
                    wcrt: Bound::Unbounded,
                    iterations: 0,
                    bounds_at_fixpoint: None,
                }
            }
        }
    }
    for &h in intf.hpp(chain) {
        match interferer_h_star(h) {
            Bound::Finite(hs) => {
                hp_terms.push((system.chain(h).period, core_steal(system, h, hs)))
            }
            Bound::Unbounded => {
                return WcrtOutcome {
                    wcrt: Bound::Unbounded,
                    iterations: 0,
                    bounds_at_fixpoint: None,
                }
            }
        }
    }

    let handling_at = |r: Duration| effective_handling(system, intf, chain, per_segment, r);

    let mut r = match handling_at(Duration::ZERO).with_overhead {
        Bound::Finite(h0) => blocking + c.exec_sum + h0,
        Bound::Unbounded => {
            return WcrtOutcome {
                wcrt: Bound::Unbounded,
                iterations: 0,
                bounds_at_fixpoint: None,
            }
        }
    };
    let mut iterations = 1;
    loop {
        if r > cutoff {
            return WcrtOutcome {
                wcrt: Bound::Unbounded,
                iterations,
                bounds_at_fixpoint: None,
            };
        }
        let bounds = handling_at(r);
        let h_star = bounds
            .with_overhead
            .finite()
            .expect("per-chain bound is finite for a finite window");
        let mut next = blocking + c.exec_sum + h_star;
        for &(period, steal) in &hp_terms {
            next += steal * arrival_bound(r, period);
        }
        if next == r {
            return WcrtOutcome {
                wcrt: Bound::Finite(r),
                iterations,
                bounds_at_fixpoint: Some(bounds),
            };
        }
        debug_assert!(next > r, "iterates are non-decreasing");
        r = next;
        iterations += 1;
    }
}

/// Analyzes every chain in decreasing priority order and assembles the
/// report. The system verdict covers critical chains only; best-effort
/// chains are reported but never gate schedulability.
pub fn analyze_system(system: &SystemConfig) -> AnalysisReport {
    let intf = InterferenceSets::build(system);
    let mut h_star: Vec<Option<Bound>> = vec![None; system.chains.len()];
    let mut outcomes: Vec<Option<WcrtOutcome>> = vec![None; system.chains.len()];

    // Handling bound used when this chain appears as someone's interferer.
    // Chains analyzed earlier (higher priority) contribute their converged
    // bound; for a not-yet-analyzed chain (possible only through process
    // priorities inverted w.r.t. chain priorities) the R-free per-segment
    // bound is used, which is safe on its own.
    let fallback_h_star = |system: &SystemConfig, intf: &InterferenceSets, h: ChainIdx| {
        chain_handling_per_segment(system, intf, h).plus(overhead_sum(system, h))
    };

    for chain in system.chains_by_priority_desc() {
        let lookup = |h: ChainIdx| -> Bound {
            match h_star[h.0] {
                Some(b) => b,
                None => fallback_h_star(system, &intf, h),
            }
        };
        let outcome = chain_wcrt_inner(system, &intf, chain, &lookup);
        h_star[chain.0] = Some(match outcome.bounds_at_fixpoint {
            Some(b) => b.with_overhead,
            // No converged response time; fall back to the per-segment bound.
            None => fallback_h_star(system, &intf, chain),
        });
        outcomes[chain.0] = Some(outcome);
    }

    let chains: Vec<ChainReport> = system
        .chains
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let outcome = outcomes[i].as_ref().expect("all chains analyzed");
            let bounds = outcome.bounds_at_fixpoint.unwrap_or_else(|| {
                let per_segment = chain_handling_per_segment(system, &intf, ChainIdx(i));
                HandlingBounds {
                    per_segment,
                    per_chain: Bound::Unbounded,
                    handling: per_segment,
                    with_overhead: per_segment.plus(overhead_sum(system, ChainIdx(i))),
                }
            });
            let schedulable = match outcome.wcrt {
                Bound::Finite(r) => r <= c.deadline,
                Bound::Unbounded => false,
            };
            ChainReport {
                id: c.id.clone(),
                priority: c.priority,
                criticality: c.criticality,
                blocking: blocking_term(system, &intf, ChainIdx(i)),
                exec_sum: c.exec_sum,
                bounds,
                wcrt: outcome.wcrt,
                deadline: c.deadline,
                iterations: outcome.iterations,
                schedulable,
            }
        })
        .collect();

    let schedulable = chains
        .iter()
        .filter(|c| c.criticality == Criticality::Critical)
        .all(|c| c.schedulable);
    AnalysisReport {
        fingerprint: system.fingerprint(),
        chains,
        schedulable,
    }
}

/// Response-time bound for a single chain given a fully analyzed system.
pub fn chain_wcrt(system: &SystemConfig, chain: ChainIdx) -> Bound {
    analyze_system(system).chains[chain.0].wcrt
}

/// End-to-end bound for a pipeline of already-analyzed sub-chains:
/// the sum of their response times plus one communication cost per
/// executor boundary crossed.
pub fn end_to_end_wcrt(
    sub_chain_wcrts: &[(String, Bound)],
    comm_cost: Duration,
) -> Result<Bound, AnalysisError> {
    if sub_chain_wcrts.is_empty() {
        return Err(AnalysisError::EmptyComposition);
    }
    let mut total = Duration::ZERO;
    for (id, r) in sub_chain_wcrts {
        match r {
            Bound::Finite(d) => total += *d,
            Bound::Unbounded => return Err(AnalysisError::UnschedulableSubChain(id.clone())),
        }
    }
    let boundaries = (sub_chain_wcrts.len() - 1) as u64;
    Ok(Bound::Finite(total + comm_cost * boundaries))
}

/// Additions a candidate submits for admission: new executors, callbacks,
/// and chains, merged into an existing system and re-analyzed.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateSpec {
    #[serde(default = "candidate_time_unit")]
    pub time_unit: TimeUnit,
    #[serde(default)]
    pub executors: Vec<RawExecutor>,
    #[serde(default)]
    pub callbacks: Vec<RawCallback>,
    #[serde(default)]
    pub chains: Vec<RawChain>,
}

fn candidate_time_unit() -> TimeUnit {
    TimeUnit::Ns
}

#[derive(Debug, Clone, serde::Serialize)]
pub enum AdmissionVerdict {
    Accept {
        report: AnalysisReport,
    },
    Reject {
        reason: String,
        /// Highest-priority critical chain that fails, when analysis ran.
        failing_chain: Option<String>,
        report: Option<AnalysisReport>,
    },
}

impl AdmissionVerdict {
    pub fn accepted(&self) -> bool {
        matches!(self, AdmissionVerdict::Accept { .. })
    }
}

/// Re-validates and re-analyzes the system extended by the candidate.
/// Priorities are re-checked for uniqueness and buckets and units are
/// re-derived over the merged chain set.
pub fn admission_test(base: &SystemConfig, candidate: &CandidateSpec) -> AdmissionVerdict {
    let merged = match merge_candidate(base, candidate) {
        Ok(m) => m,
        Err(e) => {
            return AdmissionVerdict::Reject {
                reason: e.to_string(),
                failing_chain: None,
                report: None,
            }
        }
    };
    let report = analyze_system(&merged);
    if report.schedulable {
        AdmissionVerdict::Accept { report }
    } else {
        let failing = merged
            .chains_by_priority_desc()
            .into_iter()
            .map(|c| &report.chains[c.0])
            .find(|cr| cr.criticality == Criticality::Critical && !cr.schedulable)
            .expect("an unschedulable system has a failing critical chain");
        AdmissionVerdict::Reject {
            reason: format!("chain {:?} misses its deadline", failing.id),
            failing_chain: Some(failing.id.clone()),
            report: Some(report),
        }
    }
}

fn merge_candidate(
    base: &SystemConfig,
    candidate: &CandidateSpec,
) -> Result<SystemConfig, ConfigError> {
    let mut raw: RawConfig = serde_json::from_str(&base.to_json()).expect("round-trip");
    let scale = |v: u64| -> u64 {
        match candidate.time_unit {
            TimeUnit::Ns => v,
            TimeUnit::Us => v * 1_000,
            TimeUnit::Ms => v * 1_000_000,
        }
    };
    for e in &candidate.executors {
        raw.executors.push(e.clone());
    }
    for cb in &candidate.callbacks {
        let mut cb = cb.clone();
        for s in &mut cb.segments {
            s.wcet = scale(s.wcet);
        }
        raw.callbacks.push(cb);
    }
    for c in &candidate.chains {
        let mut c = c.clone();
        c.period = scale(c.period);
        c.deadline = scale(c.deadline);
        c.phase = c.phase.map(scale);
        raw.chains.push(c);
    }
    validate_system(&raw)
}

#[cfg(test)]
mod tests;

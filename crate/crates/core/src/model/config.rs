//! External configuration document and validation into [`SystemConfig`].
//!
//! The document is JSON with top-level keys `time_unit`, `cores`,
//! `accelerators`, `executors`, `callbacks`, `chains`. All durations are
//! integers in the declared `time_unit`. Unknown keys are rejected.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::placement::{assign_accelerator_units, assign_buckets};
use super::{
    Accelerator, AccelIdx, Callback, CallbackIdx, Chain, ChainIdx, Criticality, Executor,
    ExecutorIdx, Segment, SegmentKind, SystemConfig, WaitPolicy, DEFAULT_EPSILON, DEFAULT_KAPPA,
};
use crate::time::Duration;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("malformed config document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid identifier {0:?} (allowed: letters, digits, '_', '.', '-')")]
    BadIdentifier(String),
    #[error("duplicate {kind} id {id:?}")]
    DuplicateId { kind: &'static str, id: String },
    #[error("unknown {kind} id {id:?} referenced by {referrer:?}")]
    DanglingId {
        kind: &'static str,
        id: String,
        referrer: String,
    },
    #[error("duplicate chain priority {priority} (chains {first:?} and {second:?})")]
    DuplicateChainPriority {
        priority: u32,
        first: String,
        second: String,
    },
    #[error("chain {id:?}: deadline exceeds period on a critical chain")]
    DeadlineExceedsPeriod { id: String },
    #[error("chain {id:?}: period must be positive")]
    ZeroPeriod { id: String },
    #[error("callback {id:?}: segment {pos} has zero wcet")]
    ZeroWcet { id: String, pos: usize },
    #[error("callback {id:?}: segment {pos} of kind {kind:?} {problem}")]
    BadSegmentAccelerator {
        id: String,
        pos: usize,
        kind: SegmentKind,
        problem: &'static str,
    },
    #[error("callback {id:?}: segments {pos} and {next} do not alternate CPU/ACCEL", next = pos + 1)]
    NonAlternatingSegments { id: String, pos: usize },
    #[error("callback {id:?} has no segments")]
    EmptyCallback { id: String },
    #[error("callback {id:?} assigned to executors {first:?} and {second:?}")]
    CallbackInTwoExecutors {
        id: String,
        first: String,
        second: String,
    },
    #[error("callback {id:?} not assigned to any executor")]
    CallbackWithoutExecutor { id: String },
    #[error("callback {id:?} referenced by chains {first:?} and {second:?}")]
    CallbackInTwoChains {
        id: String,
        first: String,
        second: String,
    },
    #[error("callback {id:?} not referenced by any chain")]
    CallbackWithoutChain { id: String },
    #[error("chain {id:?} has no callbacks")]
    EmptyChain { id: String },
    #[error("chain {id:?} spans executors {first:?} and {second:?}; a chain must live in one executor")]
    ChainSpansExecutors {
        id: String,
        first: String,
        second: String,
    },
    #[error("core index {core} out of range for {owner:?} (cores: {count})")]
    CoreOutOfRange {
        core: u32,
        owner: String,
        count: u32,
    },
    #[error("executors {first:?} and {second:?} share core {core} with equal process priority {priority}")]
    DuplicateProcessPriority {
        first: String,
        second: String,
        core: u32,
        priority: u32,
    },
    #[error("accelerator {accel:?} server core {core} overlaps client executor {executor:?}")]
    ServerClientCoreOverlap {
        accel: String,
        core: u32,
        executor: String,
    },
    #[error("accelerators {first:?} and {second:?} share server core {core}; each server needs a dedicated core")]
    ServerCoreShared {
        first: String,
        second: String,
        core: u32,
    },
    #[error("accelerator {id:?}: {field} must be at least 1")]
    BadAcceleratorCount { id: String, field: &'static str },
    #[error("best-effort chain {best_effort:?} (priority {bp}) not below critical chain {critical:?} (priority {cp})")]
    BestEffortAboveCritical {
        best_effort: String,
        bp: u32,
        critical: String,
        cp: u32,
    },
    #[error("chain {id:?}: priority must be positive")]
    ZeroPriority { id: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    Ns,
    Us,
    Ms,
}

impl TimeUnit {
    fn to_ns(self, v: u64) -> Duration {
        match self {
            TimeUnit::Ns => Duration::from_ns(v),
            TimeUnit::Us => Duration::from_us(v),
            TimeUnit::Ms => Duration::from_ms(v),
        }
    }
}

fn default_time_unit() -> TimeUnit {
    TimeUnit::Ns
}

fn default_units() -> u32 {
    1
}

fn default_wait_policy() -> WaitPolicy {
    WaitPolicy::Suspend
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default = "default_time_unit")]
    pub time_unit: TimeUnit,
    pub cores: u32,
    pub accelerators: Vec<RawAccelerator>,
    pub executors: Vec<RawExecutor>,
    pub callbacks: Vec<RawCallback>,
    pub chains: Vec<RawChain>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawAccelerator {
    pub id: String,
    #[serde(default = "default_units")]
    pub units: u32,
    pub buckets_per_unit: u32,
    /// In `time_unit`; defaults to the measured worst case when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<u64>,
    pub server_core: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawExecutor {
    pub id: String,
    pub callbacks: Vec<String>,
    pub cpu_core: u32,
    pub process_priority: u32,
    #[serde(default = "default_wait_policy")]
    pub wait_policy: WaitPolicy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCallback {
    pub id: String,
    pub segments: Vec<RawSegment>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSegment {
    pub kind: SegmentKind,
    pub wcet: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accelerator: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawChain {
    pub id: String,
    pub callbacks: Vec<String>,
    pub period: u64,
    pub deadline: u64,
    pub priority: u32,
    pub criticality: Criticality,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<u64>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
}

/// Validates a parsed document and computes every derived field,
/// including bucket and unit maps.
pub fn validate_system(raw: &RawConfig) -> Result<SystemConfig, ConfigError> {
    let unit = raw.time_unit;
    let core_count = raw.cores;

    // Accelerators.
    let mut accel_ids: HashMap<String, AccelIdx> = HashMap::new();
    let mut accelerators = Vec::with_capacity(raw.accelerators.len());
    for (i, a) in raw.accelerators.iter().enumerate() {
        check_id("accelerator", &a.id, accel_ids.contains_key(&a.id))?;
        if a.units == 0 {
            return Err(ConfigError::BadAcceleratorCount {
                id: a.id.clone(),
                field: "units",
            });
        }
        if a.buckets_per_unit == 0 {
            return Err(ConfigError::BadAcceleratorCount {
                id: a.id.clone(),
                field: "buckets_per_unit",
            });
        }
        if a.server_core >= core_count {
            return Err(ConfigError::CoreOutOfRange {
                core: a.server_core,
                owner: a.id.clone(),
                count: core_count,
            });
        }
        accel_ids.insert(a.id.clone(), AccelIdx(i));
        accelerators.push(Accelerator {
            id: a.id.clone(),
            units: a.units,
            buckets_per_unit: a.buckets_per_unit,
            epsilon: a.epsilon.map(|v| unit.to_ns(v)).unwrap_or(DEFAULT_EPSILON),
            kappa: a.kappa.map(|v| unit.to_ns(v)).unwrap_or(DEFAULT_KAPPA),
            server_core: a.server_core,
        });
    }
    for (i, a) in accelerators.iter().enumerate() {
        for b in &accelerators[i + 1..] {
            if a.server_core == b.server_core {
                return Err(ConfigError::ServerCoreShared {
                    first: a.id.clone(),
                    second: b.id.clone(),
                    core: a.server_core,
                });
            }
        }
    }

    // Callbacks.
    let mut callback_ids: HashMap<String, CallbackIdx> = HashMap::new();
    let mut callbacks = Vec::with_capacity(raw.callbacks.len());
    for (i, cb) in raw.callbacks.iter().enumerate() {
        check_id("callback", &cb.id, callback_ids.contains_key(&cb.id))?;
        if cb.segments.is_empty() {
            return Err(ConfigError::EmptyCallback { id: cb.id.clone() });
        }
        let mut segments = Vec::with_capacity(cb.segments.len());
        for (pos, s) in cb.segments.iter().enumerate() {
            if s.wcet == 0 {
                return Err(ConfigError::ZeroWcet {
                    id: cb.id.clone(),
                    pos,
                });
            }
            let accelerator = match (s.kind, &s.accelerator) {
                (SegmentKind::Cpu, None) => None,
                (SegmentKind::Cpu, Some(_)) => {
                    return Err(ConfigError::BadSegmentAccelerator {
                        id: cb.id.clone(),
                        pos,
                        kind: s.kind,
                        problem: "names an accelerator",
                    })
                }
                (SegmentKind::Accel, None) => {
                    return Err(ConfigError::BadSegmentAccelerator {
                        id: cb.id.clone(),
                        pos,
                        kind: s.kind,
                        problem: "does not name an accelerator",
                    })
                }
                (SegmentKind::Accel, Some(name)) => {
                    Some(*accel_ids.get(name).ok_or_else(|| ConfigError::DanglingId {
                        kind: "accelerator",
                        id: name.clone(),
                        referrer: cb.id.clone(),
                    })?)
                }
            };
            if pos > 0 && cb.segments[pos - 1].kind == s.kind {
                return Err(ConfigError::NonAlternatingSegments {
                    id: cb.id.clone(),
                    pos: pos - 1,
                });
            }
            segments.push(Segment {
                kind: s.kind,
                wcet: unit.to_ns(s.wcet),
                accelerator,
            });
        }
        callback_ids.insert(cb.id.clone(), CallbackIdx(i));
        callbacks.push(Callback::derive(cb.id.clone(), segments));
    }

    // Executors.
    let mut executor_ids: HashMap<String, ExecutorIdx> = HashMap::new();
    let mut executors = Vec::with_capacity(raw.executors.len());
    let mut callback_executor: Vec<Option<ExecutorIdx>> = vec![None; callbacks.len()];
    for (i, e) in raw.executors.iter().enumerate() {
        check_id("executor", &e.id, executor_ids.contains_key(&e.id))?;
        if e.cpu_core >= core_count {
            return Err(ConfigError::CoreOutOfRange {
                core: e.cpu_core,
                owner: e.id.clone(),
                count: core_count,
            });
        }
        let mut set = BTreeSet::new();
        for name in &e.callbacks {
            let idx = *callback_ids.get(name).ok_or_else(|| ConfigError::DanglingId {
                kind: "callback",
                id: name.clone(),
                referrer: e.id.clone(),
            })?;
            if let Some(prev) = callback_executor[idx.0] {
                return Err(ConfigError::CallbackInTwoExecutors {
                    id: name.clone(),
                    first: raw.executors[prev.0].id.clone(),
                    second: e.id.clone(),
                });
            }
            callback_executor[idx.0] = Some(ExecutorIdx(i));
            set.insert(idx);
        }
        executor_ids.insert(e.id.clone(), ExecutorIdx(i));
        executors.push(Executor {
            id: e.id.clone(),
            callbacks: set,
            core: e.cpu_core,
            process_priority: e.process_priority,
            wait_policy: e.wait_policy,
        });
    }
    for (i, cb) in callbacks.iter().enumerate() {
        if callback_executor[i].is_none() {
            return Err(ConfigError::CallbackWithoutExecutor { id: cb.id.clone() });
        }
    }
    for (i, a) in executors.iter().enumerate() {
        for b in &executors[i + 1..] {
            if a.core == b.core && a.process_priority == b.process_priority {
                return Err(ConfigError::DuplicateProcessPriority {
                    first: a.id.clone(),
                    second: b.id.clone(),
                    core: a.core,
                    priority: a.process_priority,
                });
            }
        }
    }
    for acc in &accelerators {
        for e in &executors {
            if e.core == acc.server_core {
                return Err(ConfigError::ServerClientCoreOverlap {
                    accel: acc.id.clone(),
                    core: acc.server_core,
                    executor: e.id.clone(),
                });
            }
        }
    }

    // Chains.
    let mut chain_names: HashMap<String, ChainIdx> = HashMap::new();
    let mut chains = Vec::with_capacity(raw.chains.len());
    let mut callback_chain: Vec<Option<ChainIdx>> = vec![None; callbacks.len()];
    for (i, c) in raw.chains.iter().enumerate() {
        check_id("chain", &c.id, chain_names.contains_key(&c.id))?;
        if c.period == 0 {
            return Err(ConfigError::ZeroPeriod { id: c.id.clone() });
        }
        if c.priority == 0 {
            return Err(ConfigError::ZeroPriority { id: c.id.clone() });
        }
        if c.callbacks.is_empty() {
            return Err(ConfigError::EmptyChain { id: c.id.clone() });
        }
        let period = unit.to_ns(c.period);
        let deadline = unit.to_ns(c.deadline);
        if c.criticality == Criticality::Critical && deadline > period {
            return Err(ConfigError::DeadlineExceedsPeriod { id: c.id.clone() });
        }
        let mut cb_idxs = Vec::with_capacity(c.callbacks.len());
        let mut exec: Option<ExecutorIdx> = None;
        let mut delta = 0;
        let mut exec_sum = Duration::ZERO;
        for name in &c.callbacks {
            let idx = *callback_ids.get(name).ok_or_else(|| ConfigError::DanglingId {
                kind: "callback",
                id: name.clone(),
                referrer: c.id.clone(),
            })?;
            if let Some(prev) = callback_chain[idx.0] {
                return Err(ConfigError::CallbackInTwoChains {
                    id: name.clone(),
                    first: raw.chains[prev.0].id.clone(),
                    second: c.id.clone(),
                });
            }
            callback_chain[idx.0] = Some(ChainIdx(i));
            let owner = callback_executor[idx.0].expect("checked above");
            match exec {
                None => exec = Some(owner),
                Some(prev) if prev != owner => {
                    return Err(ConfigError::ChainSpansExecutors {
                        id: c.id.clone(),
                        first: executors[prev.0].id.clone(),
                        second: executors[owner.0].id.clone(),
                    })
                }
                _ => {}
            }
            delta += callbacks[idx.0].accel_segment_count;
            exec_sum += callbacks[idx.0].cpu_wcet;
            cb_idxs.push(idx);
        }
        chain_names.insert(c.id.clone(), ChainIdx(i));
        chains.push(Chain {
            id: c.id.clone(),
            callbacks: cb_idxs,
            period,
            deadline,
            priority: c.priority,
            criticality: c.criticality,
            phase: c.phase.map(|v| unit.to_ns(v)).unwrap_or(Duration::ZERO),
            accel_segment_count: delta,
            exec_sum,
            executor: exec.expect("non-empty chain"),
        });
    }
    for (i, cb) in callbacks.iter().enumerate() {
        if callback_chain[i].is_none() {
            return Err(ConfigError::CallbackWithoutChain { id: cb.id.clone() });
        }
    }
    let mut by_priority: BTreeMap<u32, usize> = BTreeMap::new();
    for (i, c) in chains.iter().enumerate() {
        if let Some(prev) = by_priority.insert(c.priority, i) {
            return Err(ConfigError::DuplicateChainPriority {
                priority: c.priority,
                first: chains[prev].id.clone(),
                second: c.id.clone(),
            });
        }
    }
    for be in chains.iter().filter(|c| !c.is_critical()) {
        for cr in chains.iter().filter(|c| c.is_critical()) {
            if be.priority > cr.priority {
                return Err(ConfigError::BestEffortAboveCritical {
                    best_effort: be.id.clone(),
                    bp: be.priority,
                    critical: cr.id.clone(),
                    cp: cr.priority,
                });
            }
        }
    }

    let callback_chain: Vec<ChainIdx> = callback_chain.into_iter().map(|c| c.unwrap()).collect();

    let mut system = SystemConfig {
        core_count,
        accelerators,
        executors,
        callbacks,
        chains,
        callback_chain,
        bucket_map: BTreeMap::new(),
        unit_map: BTreeMap::new(),
    };
    system.bucket_map = derive_bucket_map(&system);
    system.unit_map = derive_unit_map(&system);
    Ok(system)
}

/// Priority-downsamples chains onto each accelerator's bucket levels.
pub fn derive_bucket_map(system: &SystemConfig) -> BTreeMap<(ChainIdx, AccelIdx), u32> {
    let mut map = BTreeMap::new();
    for (ai, acc) in system.accelerators.iter().enumerate() {
        let accel = AccelIdx(ai);
        let mut users: Vec<ChainIdx> = (0..system.chains.len())
            .map(ChainIdx)
            .filter(|&c| {
                system.chains[c.0]
                    .callbacks
                    .iter()
                    .any(|&cb| system.callbacks[cb.0].accelerators_used.contains(&accel))
            })
            .collect();
        users.sort_by(|a, b| system.chains[b.0].priority.cmp(&system.chains[a.0].priority));
        for (chain, bucket) in assign_buckets(&users, acc.buckets_per_unit) {
            map.insert((chain, accel), bucket);
        }
    }
    map
}

/// Worst-fit-decreasing placement of accelerator segments onto units.
pub fn derive_unit_map(system: &SystemConfig) -> BTreeMap<SegmentRef, u32> {
    let mut map = BTreeMap::new();
    for (ai, acc) in system.accelerators.iter().enumerate() {
        let accel = AccelIdx(ai);
        let mut segs: Vec<(SegmentRef, f64)> = Vec::new();
        for (ci, cb) in system.callbacks.iter().enumerate() {
            let chain = &system.chains[system.callback_chain[ci].0];
            for (pos, s) in cb.segments.iter().enumerate() {
                if s.kind == SegmentKind::Accel && s.accelerator == Some(accel) {
                    let util = s.wcet.as_ns() as f64 / chain.period.as_ns() as f64;
                    segs.push((
                        SegmentRef {
                            callback: CallbackIdx(ci),
                            seg: pos,
                        },
                        util,
                    ));
                }
            }
        }
        for (seg, unit) in assign_accelerator_units(&segs, acc.units) {
            map.insert(seg, unit);
        }
    }
    map
}

fn check_id(kind: &'static str, id: &str, duplicate: bool) -> Result<(), ConfigError> {
    if !valid_id(id) {
        return Err(ConfigError::BadIdentifier(id.to_string()));
    }
    if duplicate {
        return Err(ConfigError::DuplicateId {
            kind,
            id: id.to_string(),
        });
    }
    Ok(())
}

/// Emits the external document form (nanosecond units, all defaults explicit).
pub fn to_raw(system: &SystemConfig) -> RawConfig {
    RawConfig {
        time_unit: TimeUnit::Ns,
        cores: system.core_count,
        accelerators: system
            .accelerators
            .iter()
            .map(|a| RawAccelerator {
                id: a.id.clone(),
                units: a.units,
                buckets_per_unit: a.buckets_per_unit,
                epsilon: Some(a.epsilon.as_ns()),
                kappa: Some(a.kappa.as_ns()),
                server_core: a.server_core,
            })
            .collect(),
        executors: system
            .executors
            .iter()
            .map(|e| RawExecutor {
                id: e.id.clone(),
                callbacks: e
                    .callbacks
                    .iter()
                    .map(|&c| system.callbacks[c.0].id.clone())
                    .collect(),
                cpu_core: e.core,
                process_priority: e.process_priority,
                wait_policy: e.wait_policy,
            })
            .collect(),
        callbacks: system
            .callbacks
            .iter()
            .map(|cb| RawCallback {
                id: cb.id.clone(),
                segments: cb
                    .segments
                    .iter()
                    .map(|s| RawSegment {
                        kind: s.kind,
                        wcet: s.wcet.as_ns(),
                        accelerator: s
                            .accelerator
                            .map(|a| system.accelerators[a.0].id.clone()),
                    })
                    .collect(),
            })
            .collect(),
        chains: system
            .chains
            .iter()
            .map(|c| RawChain {
                id: c.id.clone(),
                callbacks: c
                    .callbacks
                    .iter()
                    .map(|&cb| system.callbacks[cb.0].id.clone())
                    .collect(),
                period: c.period.as_ns(),
                deadline: c.deadline.as_ns(),
                priority: c.priority,
                criticality: c.criticality,
                phase: if c.phase.is_zero() {
                    None
                } else {
                    Some(c.phase.as_ns())
                },
            })
            .collect(),
    }
}

impl SystemConfig {
    pub fn from_json_str(doc: &str) -> Result<SystemConfig, ConfigError> {
        let raw: RawConfig = serde_json::from_str(doc)?;
        validate_system(&raw)
    }
}

//! Domain model: callbacks, chains, executors, accelerators, and the
//! validated [`SystemConfig`] that analysis and simulation operate on.

mod config;
mod placement;

pub use config::{
    validate_system, ConfigError, RawAccelerator, RawCallback, RawChain, RawConfig, RawExecutor,
    RawSegment, TimeUnit,
};
pub use placement::{assign_accelerator_units, assign_buckets};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::time::Duration;

/// Default per-request server overhead (worst case measured end to end).
pub const DEFAULT_EPSILON: Duration = Duration::from_us(391);
/// Default device preemption cost per event (measured maximum, rounded up).
pub const DEFAULT_KAPPA: Duration = Duration::from_us(130);

macro_rules! index_type {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub usize);
    };
}

index_type!(
    /// Index into [`SystemConfig::chains`].
    ChainIdx
);
index_type!(
    /// Index into [`SystemConfig::callbacks`].
    CallbackIdx
);
index_type!(
    /// Index into [`SystemConfig::executors`].
    ExecutorIdx
);
index_type!(
    /// Index into [`SystemConfig::accelerators`].
    AccelIdx
);

/// Position of one accelerator segment: owning callback plus the segment's
/// offset in the callback's segment list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SegmentRef {
    pub callback: CallbackIdx,
    pub seg: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Cpu,
    Accel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub kind: SegmentKind,
    pub wcet: Duration,
    /// Present iff `kind == Accel`.
    pub accelerator: Option<AccelIdx>,
}

/// Smallest schedulable unit: an alternating list of CPU and accelerator
/// segments, executed non-preemptively by its executor.
#[derive(Debug, Clone)]
pub struct Callback {
    pub id: String,
    pub segments: Vec<Segment>,
    /// Sum of CPU segment WCETs.
    pub cpu_wcet: Duration,
    /// Sum of accelerator segment WCETs.
    pub accel_wcet: Duration,
    /// Number of accelerator segments.
    pub accel_segment_count: u32,
    /// Accelerators this callback touches.
    pub accelerators_used: BTreeSet<AccelIdx>,
}

impl Callback {
    /// Recomputes the derived sums from the segment list.
    pub fn derive(id: String, segments: Vec<Segment>) -> Self {
        let mut cpu = Duration::ZERO;
        let mut accel = Duration::ZERO;
        let mut count = 0;
        let mut used = BTreeSet::new();
        for s in &segments {
            match s.kind {
                SegmentKind::Cpu => cpu += s.wcet,
                SegmentKind::Accel => {
                    accel += s.wcet;
                    count += 1;
                    if let Some(a) = s.accelerator {
                        used.insert(a);
                    }
                }
            }
        }
        Callback {
            id,
            segments,
            cpu_wcet: cpu,
            accel_wcet: accel,
            accel_segment_count: count,
            accelerators_used: used,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criticality {
    Critical,
    BestEffort,
}

/// Periodically triggered sequence of callbacks; the unit of end-to-end
/// timing and of the schedulability verdict.
#[derive(Debug, Clone)]
pub struct Chain {
    pub id: String,
    pub callbacks: Vec<CallbackIdx>,
    pub period: Duration,
    pub deadline: Duration,
    /// Unique across all chains; larger means higher priority.
    pub priority: u32,
    pub criticality: Criticality,
    /// Release offset of the first instance.
    pub phase: Duration,
    /// Total accelerator segment count over all callbacks.
    pub accel_segment_count: u32,
    /// Sum of CPU WCETs over all callbacks.
    pub exec_sum: Duration,
    /// The single executor that runs all callbacks of this chain.
    pub executor: ExecutorIdx,
}

impl Chain {
    pub fn is_critical(&self) -> bool {
        self.criticality == Criticality::Critical
    }
}

/// How a client executor waits while an accelerator request is in flight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaitPolicy {
    /// Busy-waits, holding its CPU core for the whole request.
    Spin,
    /// Yields the core until the server signals completion.
    Suspend,
}

/// OS process running callbacks non-preemptively in priority order;
/// preemptible by higher-process-priority executors on the same core.
#[derive(Debug, Clone)]
pub struct Executor {
    pub id: String,
    pub callbacks: BTreeSet<CallbackIdx>,
    pub core: u32,
    pub process_priority: u32,
    pub wait_policy: WaitPolicy,
}

/// A managed device: `units` independent execution units, each served by
/// `buckets_per_unit` worker queues at distinct device priority levels.
#[derive(Debug, Clone)]
pub struct Accelerator {
    pub id: String,
    pub units: u32,
    pub buckets_per_unit: u32,
    /// Per-request server overhead charged on every accelerator segment.
    pub epsilon: Duration,
    /// Device preemption cost per preempt/resume event.
    pub kappa: Duration,
    /// Dedicated core for this accelerator's server.
    pub server_core: u32,
}

impl Accelerator {
    /// Higher buckets preempt lower ones only when more than one exists.
    pub fn bucket_preemptive(&self) -> bool {
        self.buckets_per_unit > 1
    }

    /// Preemption cost cannot occur on a single-bucket device.
    pub fn effective_kappa(&self) -> Duration {
        if self.bucket_preemptive() {
            self.kappa
        } else {
            Duration::ZERO
        }
    }
}

/// Fully validated system: every id resolved to an index, derived fields
/// populated, bucket and unit maps computed. Immutable after validation.
#[derive(Debug, Clone)]
pub struct SystemConfig {
    pub core_count: u32,
    pub accelerators: Vec<Accelerator>,
    pub executors: Vec<Executor>,
    pub callbacks: Vec<Callback>,
    pub chains: Vec<Chain>,
    /// Owning chain of each callback.
    pub callback_chain: Vec<ChainIdx>,
    /// Bucket index per (chain, accelerator) pair, for chains using it.
    pub bucket_map: BTreeMap<(ChainIdx, AccelIdx), u32>,
    /// Unit index per accelerator segment.
    pub unit_map: BTreeMap<SegmentRef, u32>,
}

impl SystemConfig {
    pub fn chain(&self, idx: ChainIdx) -> &Chain {
        &self.chains[idx.0]
    }

    pub fn callback(&self, idx: CallbackIdx) -> &Callback {
        &self.callbacks[idx.0]
    }

    pub fn executor(&self, idx: ExecutorIdx) -> &Executor {
        &self.executors[idx.0]
    }

    pub fn accelerator(&self, idx: AccelIdx) -> &Accelerator {
        &self.accelerators[idx.0]
    }

    pub fn segment(&self, r: SegmentRef) -> &Segment {
        &self.callbacks[r.callback.0].segments[r.seg]
    }

    /// Chain that owns the given callback.
    pub fn chain_of_callback(&self, cb: CallbackIdx) -> ChainIdx {
        self.callback_chain[cb.0]
    }

    pub fn bucket_of(&self, chain: ChainIdx, accel: AccelIdx) -> u32 {
        self.bucket_map[&(chain, accel)]
    }

    pub fn unit_of(&self, seg: SegmentRef) -> u32 {
        self.unit_map[&seg]
    }

    /// Chain indices sorted by priority, highest first.
    pub fn chains_by_priority_desc(&self) -> Vec<ChainIdx> {
        let mut order: Vec<ChainIdx> = (0..self.chains.len()).map(ChainIdx).collect();
        order.sort_by(|a, b| self.chains[b.0].priority.cmp(&self.chains[a.0].priority));
        order
    }

    /// Accelerator segments of a chain, in execution order.
    pub fn accel_segments_of_chain(&self, chain: ChainIdx) -> Vec<SegmentRef> {
        let mut out = Vec::new();
        for &cb in &self.chains[chain.0].callbacks {
            for (i, seg) in self.callbacks[cb.0].segments.iter().enumerate() {
                if seg.kind == SegmentKind::Accel {
                    out.push(SegmentRef { callback: cb, seg: i });
                }
            }
        }
        out
    }

    /// All accelerator segments in the system grouped by (accelerator, unit).
    pub fn segments_by_unit(&self) -> BTreeMap<(AccelIdx, u32), Vec<SegmentRef>> {
        let mut map: BTreeMap<(AccelIdx, u32), Vec<SegmentRef>> = BTreeMap::new();
        for (&seg, &unit) in &self.unit_map {
            let accel = self.segment(seg).accelerator.expect("accel segment");
            map.entry((accel, unit)).or_default().push(seg);
        }
        map
    }

    /// Segment WCET inflated by the preemption allowance of its device
    /// (`A + 2κ` on preemptive devices, plain `A` otherwise).
    pub fn inflated_wcet(&self, seg: SegmentRef) -> Duration {
        let s = self.segment(seg);
        let acc = self.accelerator(s.accelerator.expect("accel segment"));
        s.wcet + acc.effective_kappa() * 2
    }

    /// Stable content hash used to pair analysis reports with simulations.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let raw = config::to_raw(self);
        let json = serde_json::to_string(&raw).expect("config serialization");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Round-trips through the external document form.
    pub fn to_json(&self) -> String {
        let raw = config::to_raw(self);
        serde_json::to_string_pretty(&raw).expect("config serialization")
    }
}

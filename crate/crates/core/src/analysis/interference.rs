//! Interference sets: which segments and chains can delay which.

use std::collections::BTreeMap;

use crate::model::{ChainIdx, SegmentRef, SystemConfig};

/// Precomputed interference relations.
///
/// Segment-level sets are restricted to segments placed on the same
/// accelerator unit (placement partitions devices like partitioned
/// multiprocessor scheduling). Chain-level sets follow executor placement
/// and process priorities.
#[derive(Debug, Clone)]
pub struct InterferenceSets {
    hps: BTreeMap<SegmentRef, Vec<SegmentRef>>,
    lps: BTreeMap<SegmentRef, Vec<SegmentRef>>,
    hps_union: Vec<Vec<SegmentRef>>,
    hp: Vec<Vec<ChainIdx>>,
    lp: Vec<Vec<ChainIdx>>,
    hpp: Vec<Vec<ChainIdx>>,
    empty: Vec<SegmentRef>,
}

impl InterferenceSets {
    pub fn build(system: &SystemConfig) -> Self {
        let mut hps: BTreeMap<SegmentRef, Vec<SegmentRef>> = BTreeMap::new();
        let mut lps: BTreeMap<SegmentRef, Vec<SegmentRef>> = BTreeMap::new();
        for segs in system.segments_by_unit().values() {
            for &a in segs {
                let pa = system
                    .chain(system.chain_of_callback(a.callback))
                    .priority;
                for &b in segs {
                    if a == b {
                        continue;
                    }
                    let pb = system
                        .chain(system.chain_of_callback(b.callback))
                        .priority;
                    if pb > pa {
                        hps.entry(a).or_default().push(b);
                    } else if pb < pa {
                        lps.entry(a).or_default().push(b);
                    }
                    // Equal priority means the same chain: a chain never
                    // interferes with its own requests here.
                }
            }
        }

        let mut hps_union = Vec::with_capacity(system.chains.len());
        for ci in 0..system.chains.len() {
            let mut union: Vec<SegmentRef> = Vec::new();
            for seg in system.accel_segments_of_chain(ChainIdx(ci)) {
                if let Some(list) = hps.get(&seg) {
                    for &k in list {
                        if !union.contains(&k) {
                            union.push(k);
                        }
                    }
                }
            }
            union.sort();
            hps_union.push(union);
        }

        let mut hp = vec![Vec::new(); system.chains.len()];
        let mut lp = vec![Vec::new(); system.chains.len()];
        let mut hpp = vec![Vec::new(); system.chains.len()];
        for (i, c) in system.chains.iter().enumerate() {
            let own_exec = system.executor(c.executor);
            for (j, other) in system.chains.iter().enumerate() {
                if i == j {
                    continue;
                }
                let other_exec = system.executor(other.executor);
                if c.executor == other.executor {
                    if other.priority > c.priority {
                        hp[i].push(ChainIdx(j));
                    } else {
                        lp[i].push(ChainIdx(j));
                    }
                } else if other_exec.core == own_exec.core
                    && other_exec.process_priority > own_exec.process_priority
                {
                    hpp[i].push(ChainIdx(j));
                }
            }
        }

        InterferenceSets {
            hps,
            lps,
            hps_union,
            hp,
            lp,
            hpp,
            empty: Vec::new(),
        }
    }

    /// Same-unit segments of higher-priority chains.
    pub fn hps(&self, seg: SegmentRef) -> &[SegmentRef] {
        self.hps.get(&seg).unwrap_or(&self.empty)
    }

    /// Same-unit segments of lower-priority chains.
    pub fn lps(&self, seg: SegmentRef) -> &[SegmentRef] {
        self.lps.get(&seg).unwrap_or(&self.empty)
    }

    /// Union of `hps` over all of a chain's segments, each interferer once.
    pub fn hps_union(&self, chain: ChainIdx) -> &[SegmentRef] {
        &self.hps_union[chain.0]
    }

    /// Higher-priority chains on the same executor.
    pub fn hp(&self, chain: ChainIdx) -> &[ChainIdx] {
        &self.hp[chain.0]
    }

    /// Lower-priority chains on the same executor.
    pub fn lp(&self, chain: ChainIdx) -> &[ChainIdx] {
        &self.lp[chain.0]
    }

    /// Chains in higher-process-priority executors on the same core.
    pub fn hpp(&self, chain: ChainIdx) -> &[ChainIdx] {
        &self.hpp[chain.0]
    }
}

//! Bucket downsampling and worst-fit-decreasing unit assignment.

use std::collections::HashMap;

use super::{CallbackIdx, ChainIdx, SegmentRef};

/// Divides chains (pre-sorted by priority, highest first) into
/// `bucket_count` evenly sized groups. The group of highest priorities gets
/// the highest bucket; when the chain count is not divisible, the short
/// group lands in the lowest bucket.
pub fn assign_buckets(sorted_desc: &[ChainIdx], bucket_count: u32) -> Vec<(ChainIdx, u32)> {
    debug_assert!(bucket_count >= 1);
    let m = sorted_desc.len();
    if m == 0 {
        return Vec::new();
    }
    let group_size = m.div_ceil(bucket_count as usize);
    sorted_desc
        .iter()
        .enumerate()
        .map(|(i, &chain)| {
            let group = (i / group_size) as u32;
            (chain, bucket_count - 1 - group)
        })
        .collect()
}

/// Worst-fit-decreasing: segments sorted by utilization (descending, stable),
/// each placed on the least-loaded unit, lowest index on ties. All segments
/// of one callback land on the same unit.
pub fn assign_accelerator_units(
    segments: &[(SegmentRef, f64)],
    units: u32,
) -> Vec<(SegmentRef, u32)> {
    debug_assert!(units >= 1);
    let mut order: Vec<usize> = (0..segments.len()).collect();
    order.sort_by(|&a, &b| {
        segments[b]
            .1
            .partial_cmp(&segments[a].1)
            .expect("utilization is finite")
    });
    let mut load = vec![0.0f64; units as usize];
    let mut callback_unit: HashMap<CallbackIdx, u32> = HashMap::new();
    let mut out = vec![(SegmentRef { callback: CallbackIdx(0), seg: 0 }, 0u32); segments.len()];
    for idx in order {
        let (seg, util) = segments[idx];
        let unit = match callback_unit.get(&seg.callback) {
            Some(&u) => u,
            None => {
                let mut best = 0u32;
                for u in 1..units {
                    if load[u as usize] < load[best as usize] {
                        best = u;
                    }
                }
                callback_unit.insert(seg.callback, best);
                best
            }
        };
        load[unit as usize] += util;
        out[idx] = (seg, unit);
    }
    out
}

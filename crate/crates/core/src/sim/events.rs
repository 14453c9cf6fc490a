//! Trace events and the tab-separated trace format.

use crate::model::{AccelIdx, CallbackIdx, ChainIdx, SystemConfig};
use crate::time::Instant;

pub const TRACE_VERSION: &str = "#paam-trace-v1";

/// The externally visible event kinds, in their canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EventKind {
    ChainRelease,
    CbStart,
    CpuSegDone,
    ReqSubmit,
    ReqEnqueue,
    AccStart,
    AccPreempt,
    AccResume,
    AccDone,
    CbDone,
    ChainDone,
}

impl EventKind {
    pub fn label(self) -> &'static str {
        match self {
            EventKind::ChainRelease => "CHAIN_RELEASE",
            EventKind::CbStart => "CB_START",
            EventKind::CpuSegDone => "CPU_SEG_DONE",
            EventKind::ReqSubmit => "REQ_SUBMIT",
            EventKind::ReqEnqueue => "REQ_ENQUEUE",
            EventKind::AccStart => "ACC_START",
            EventKind::AccPreempt => "ACC_PREEMPT",
            EventKind::AccResume => "ACC_RESUME",
            EventKind::AccDone => "ACC_DONE",
            EventKind::CbDone => "CB_DONE",
            EventKind::ChainDone => "CHAIN_DONE",
        }
    }
}

/// One timestamped trace record. Identifier fields apply only to some
/// kinds and stay `None` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimEvent {
    pub time: Instant,
    pub kind: EventKind,
    pub chain: Option<ChainIdx>,
    pub callback: Option<CallbackIdx>,
    pub segment: Option<usize>,
    pub accel: Option<AccelIdx>,
    pub unit: Option<u32>,
    pub bucket: Option<u32>,
}

impl SimEvent {
    pub fn new(time: Instant, kind: EventKind) -> Self {
        SimEvent {
            time,
            kind,
            chain: None,
            callback: None,
            segment: None,
            accel: None,
            unit: None,
            bucket: None,
        }
    }
}

/// Renders a trace: a version line, then one tab-separated event per line
/// (`time_ns kind chain callback segment accel unit bucket`).
pub fn trace_to_tsv(system: &SystemConfig, events: &[SimEvent]) -> String {
    let mut out = String::with_capacity(events.len() * 48 + 32);
    out.push_str(TRACE_VERSION);
    out.push('\n');
    for e in events {
        out.push_str(&e.time.as_ns().to_string());
        out.push('\t');
        out.push_str(e.kind.label());
        push_cell(&mut out, e.chain.map(|c| system.chain(c).id.as_str()));
        push_cell(&mut out, e.callback.map(|c| system.callback(c).id.as_str()));
        push_num(&mut out, e.segment.map(|s| s as u64));
        push_cell(&mut out, e.accel.map(|a| system.accelerator(a).id.as_str()));
        push_num(&mut out, e.unit.map(u64::from));
        push_num(&mut out, e.bucket.map(u64::from));
        out.push('\n');
    }
    out
}

fn push_cell(out: &mut String, v: Option<&str>) {
    out.push('\t');
    out.push_str(v.unwrap_or("-"));
}

fn push_num(out: &mut String, v: Option<u64>) {
    out.push('\t');
    match v {
        Some(n) => out.push_str(&n.to_string()),
        None => out.push('-'),
    }
}

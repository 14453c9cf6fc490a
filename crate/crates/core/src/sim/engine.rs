//! Event-driven execution of a validated system.
//!
//! Scheduling decisions are deferred: event handlers only mutate state and
//! mark cores or accelerator units dirty; once every event at the current
//! instant has been handled, a settle pass dispatches units first, then
//! cores, repeating until stable. This gives same-instant events a fixed
//! relative semantics (completions land before releases, all state changes
//! land before any dispatch) that an independent simulator can reproduce.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::events::{EventKind, SimEvent};
use super::stats::{percentile, ChainStats, SimStats, UnitStats};
use super::{OverrunPolicy, SimError, SimMode, SimOutput, SimParams};
use crate::model::{
    AccelIdx, CallbackIdx, ChainIdx, Criticality, ExecutorIdx, SegmentKind, SystemConfig,
    WaitPolicy,
};
use crate::time::{Duration, Instant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct ReqId(usize);

/// Queue ordering: higher bucket, then higher chain priority, then earlier
/// enqueue (FIFO among equals). `max` picks the next request to serve.
type QKey = (u32, u32, Reverse<u64>);

#[derive(Debug)]
struct Request {
    chain: ChainIdx,
    callback: CallbackIdx,
    seg: usize,
    accel: AccelIdx,
    unit: u32,
    bucket: u32,
    exec: ExecutorIdx,
    priority: u32,
    remaining: Duration,
    enqueue_seq: u64,
}

impl Request {
    fn qkey(&self) -> QKey {
        (self.bucket, self.priority, Reverse(self.enqueue_seq))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Payload {
    ServiceDone {
        accel: AccelIdx,
        unit: u32,
        gen: u64,
    },
    SwitchDone {
        accel: AccelIdx,
        unit: u32,
        gen: u64,
    },
    CpuDone {
        exec: ExecutorIdx,
        gen: u64,
    },
    EpsilonDone {
        req: ReqId,
    },
    ChainRelease {
        chain: ChainIdx,
    },
}

impl Payload {
    fn rank(self) -> u8 {
        match self {
            Payload::ServiceDone { .. } => 0,
            Payload::SwitchDone { .. } => 1,
            Payload::CpuDone { .. } => 2,
            Payload::EpsilonDone { .. } => 3,
            Payload::ChainRelease { .. } => 4,
        }
    }
}

#[derive(Debug, PartialEq, Eq)]
struct HeapEntry {
    time: Instant,
    rank: u8,
    seq: u64,
    payload: Payload,
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.time, self.rank, self.seq).cmp(&(other.time, other.rank, other.seq))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug)]
enum Phase {
    /// CPU work: a real segment, or the pre-enqueue overhead window of a
    /// spinning request (`epsilon_req` set). `started` is `Some` while a
    /// completion timer is live.
    CpuRun {
        seg: usize,
        remaining: Duration,
        epsilon_req: Option<ReqId>,
        started: Option<Instant>,
    },
    /// Suspending client waiting out the pre-enqueue overhead.
    EpsilonSuspend,
    /// Request enqueued; spinning clients hold their core here.
    AccelWait,
    /// Ready to take the segment at `seg` as soon as the core is ours.
    Continue { seg: usize },
}

#[derive(Debug)]
struct Current {
    chain: ChainIdx,
    callback: CallbackIdx,
    phase: Phase,
}

#[derive(Debug, Default)]
struct ExecState {
    ready: BTreeSet<(u32, ChainIdx)>,
    current: Option<Current>,
    gen: u64,
}

#[derive(Debug)]
struct ActiveInstance {
    release: Instant,
    cb_pos: usize,
}

#[derive(Debug, Default)]
struct ChainState {
    active: Option<ActiveInstance>,
    backlog: VecDeque<Instant>,
    released: u64,
    completed: u64,
    dropped: u64,
    misses: u64,
    responses: Vec<Duration>,
}

#[derive(Debug)]
enum RunState {
    Idle,
    Executing {
        req: ReqId,
        started: Instant,
    },
    /// Device-level switch window after a preemption (`resume: None`) or
    /// before resuming a previously preempted request.
    Switching {
        resume: Option<ReqId>,
        started: Instant,
    },
    /// Co-running lowest-bucket kernels (optional feature).
    Concurrent {
        members: Vec<ReqId>,
        since: Instant,
    },
}

#[derive(Debug)]
struct UnitState {
    accel: AccelIdx,
    unit: u32,
    kappa: Duration,
    run: RunState,
    queued: BTreeMap<QKey, ReqId>,
    preempted: BTreeMap<QKey, ReqId>,
    fifo: VecDeque<ReqId>,
    gen: u64,
    busy: Duration,
    preemptions: u64,
}

pub(super) struct Engine<'a> {
    system: &'a SystemConfig,
    params: &'a SimParams,
    heap: BinaryHeap<Reverse<HeapEntry>>,
    event_seq: u64,
    enqueue_seq: u64,
    requests: Vec<Request>,
    execs: Vec<ExecState>,
    chains: Vec<ChainState>,
    cores: Vec<Option<ExecutorIdx>>,
    units: BTreeMap<(AccelIdx, u32), UnitState>,
    dirty_cores: BTreeSet<u32>,
    dirty_units: BTreeSet<(AccelIdx, u32)>,
    trace: Vec<SimEvent>,
    record_trace: bool,
    rng: ChaCha8Rng,
    end: Instant,
}

impl<'a> Engine<'a> {
    pub(super) fn new(system: &'a SystemConfig, params: &'a SimParams) -> Result<Self, SimError> {
        if params.duration.is_zero() {
            return Err(SimError::ZeroDuration);
        }
        if !(0.0..1.0).contains(&params.wcet_jitter) {
            return Err(SimError::BadJitter(params.wcet_jitter));
        }
        if params.concurrent_lowest_bucket && params.concurrent_slowdown < 1.0 {
            return Err(SimError::BadSlowdown(params.concurrent_slowdown));
        }
        let mut units = BTreeMap::new();
        for (ai, acc) in system.accelerators.iter().enumerate() {
            for u in 0..acc.units {
                units.insert(
                    (AccelIdx(ai), u),
                    UnitState {
                        accel: AccelIdx(ai),
                        unit: u,
                        kappa: acc.effective_kappa(),
                        run: RunState::Idle,
                        queued: BTreeMap::new(),
                        preempted: BTreeMap::new(),
                        fifo: VecDeque::new(),
                        gen: 0,
                        busy: Duration::ZERO,
                        preemptions: 0,
                    },
                );
            }
        }
        Ok(Engine {
            system,
            params,
            heap: BinaryHeap::new(),
            event_seq: 0,
            enqueue_seq: 0,
            requests: Vec::new(),
            execs: (0..system.executors.len()).map(|_| ExecState::default()).collect(),
            chains: (0..system.chains.len()).map(|_| ChainState::default()).collect(),
            cores: vec![None; system.core_count as usize],
            units,
            dirty_cores: BTreeSet::new(),
            dirty_units: BTreeSet::new(),
            trace: Vec::new(),
            record_trace: params.record_trace,
            rng: ChaCha8Rng::seed_from_u64(params.seed),
            end: Instant::ZERO + params.duration,
        })
    }

    pub(super) fn run(mut self) -> SimOutput {
        for (i, c) in self.system.chains.iter().enumerate() {
            self.schedule(
                Instant::ZERO + c.phase,
                Payload::ChainRelease { chain: ChainIdx(i) },
            );
        }
        while let Some(Reverse(entry)) = self.heap.pop() {
            if entry.time >= self.end {
                break;
            }
            let t = entry.time;
            self.handle(entry.payload, t);
            loop {
                while self
                    .heap
                    .peek()
                    .map(|Reverse(e)| e.time == t)
                    .unwrap_or(false)
                {
                    let Reverse(e) = self.heap.pop().expect("peeked");
                    self.handle(e.payload, t);
                }
                self.settle(t);
                if !self
                    .heap
                    .peek()
                    .map(|Reverse(e)| e.time == t)
                    .unwrap_or(false)
                {
                    break;
                }
            }
        }
        self.finish()
    }

    fn schedule(&mut self, time: Instant, payload: Payload) {
        let seq = self.event_seq;
        self.event_seq += 1;
        self.heap.push(Reverse(HeapEntry {
            time,
            rank: payload.rank(),
            seq,
            payload,
        }));
    }

    fn emit(&mut self, ev: SimEvent) {
        if self.record_trace {
            self.trace.push(ev);
        }
    }

    fn sample(&mut self, wcet: Duration) -> Duration {
        if self.params.wcet_jitter == 0.0 {
            return wcet;
        }
        let u: f64 = self.rng.gen();
        let cut = (wcet.as_ns() as f64 * self.params.wcet_jitter * u).floor() as u64;
        Duration::from_ns(wcet.as_ns() - cut)
    }

    fn handle(&mut self, payload: Payload, t: Instant) {
        match payload {
            Payload::ChainRelease { chain } => self.on_release(chain, t),
            Payload::CpuDone { exec, gen } => self.on_cpu_done(exec, gen, t),
            Payload::EpsilonDone { req } => self.on_epsilon_done(req, t),
            Payload::ServiceDone { accel, unit, gen } => self.on_service_done(accel, unit, gen, t),
            Payload::SwitchDone { accel, unit, gen } => self.on_switch_done(accel, unit, gen, t),
        }
    }

    // ------------------------------------------------------------------
    // Chain lifecycle
    // ------------------------------------------------------------------

    fn on_release(&mut self, chain: ChainIdx, t: Instant) {
        let def = self.system.chain(chain);
        self.emit(SimEvent {
            chain: Some(chain),
            ..SimEvent::new(t, EventKind::ChainRelease)
        });
        self.chains[chain.0].released += 1;
        let next = t + def.period;
        if next < self.end {
            self.schedule(next, Payload::ChainRelease { chain });
        }
        if self.chains[chain.0].active.is_none() {
            self.activate_instance(chain, t);
        } else {
            let queue_it = def.criticality == Criticality::Critical
                && self.params.critical_overrun == OverrunPolicy::Queue;
            let st = &mut self.chains[chain.0];
            if queue_it {
                st.backlog.push_back(t);
            } else {
                // Newest release replaces any still-pending older instance.
                if st.backlog.pop_front().is_some() {
                    st.dropped += 1;
                }
                st.backlog.push_back(t);
            }
        }
    }

    fn activate_instance(&mut self, chain: ChainIdx, release: Instant) {
        self.chains[chain.0].active = Some(ActiveInstance { release, cb_pos: 0 });
        self.mark_chain_ready(chain);
    }

    /// The chain's current callback becomes ready on its executor.
    fn mark_chain_ready(&mut self, chain: ChainIdx) {
        let def = self.system.chain(chain);
        self.execs[def.executor.0].ready.insert((def.priority, chain));
        self.dirty_cores.insert(self.system.executor(def.executor).core);
    }

    fn finish_chain_instance(&mut self, chain: ChainIdx, t: Instant) {
        let def = self.system.chain(chain);
        self.emit(SimEvent {
            chain: Some(chain),
            ..SimEvent::new(t, EventKind::ChainDone)
        });
        let st = &mut self.chains[chain.0];
        let active = st.active.take().expect("completing an active instance");
        let response = t.elapsed_since(active.release);
        st.completed += 1;
        if response > def.deadline {
            st.misses += 1;
        }
        st.responses.push(response);
        if let Some(release) = st.backlog.pop_front() {
            self.activate_instance(chain, release);
        }
    }

    // ------------------------------------------------------------------
    // Executor / core behavior
    // ------------------------------------------------------------------

    fn needs_core(&self, e: ExecutorIdx) -> bool {
        let st = &self.execs[e.0];
        match &st.current {
            Some(cur) => match cur.phase {
                Phase::CpuRun { .. } | Phase::Continue { .. } => true,
                Phase::AccelWait => {
                    self.system.executor(e).wait_policy == WaitPolicy::Spin
                }
                Phase::EpsilonSuspend => false,
            },
            None => !st.ready.is_empty(),
        }
    }

    fn pick_core_executor(&self, core: u32) -> Option<ExecutorIdx> {
        let mut best: Option<ExecutorIdx> = None;
        for (i, def) in self.system.executors.iter().enumerate() {
            if def.core != core || !self.needs_core(ExecutorIdx(i)) {
                continue;
            }
            best = match best {
                Some(b)
                    if self.system.executors[b.0].process_priority > def.process_priority =>
                {
                    Some(b)
                }
                _ => Some(ExecutorIdx(i)),
            };
        }
        best
    }

    fn pause_executor(&mut self, e: ExecutorIdx, t: Instant) {
        let st = &mut self.execs[e.0];
        if let Some(Current {
            phase:
                Phase::CpuRun {
                    remaining, started, ..
                },
            ..
        }) = &mut st.current
        {
            if let Some(s) = started.take() {
                *remaining -= t.elapsed_since(s);
                st.gen += 1;
            }
        }
    }

    fn settle_core(&mut self, core: u32, t: Instant) {
        loop {
            let want = self.pick_core_executor(core);
            let cur = self.cores[core as usize];
            if cur != want {
                if let Some(c) = cur {
                    self.pause_executor(c, t);
                }
                self.cores[core as usize] = want;
            }
            let Some(e) = want else { return };
            let st = &mut self.execs[e.0];
            match &mut st.current {
                Some(Current {
                    phase: Phase::CpuRun { remaining, started, .. },
                    ..
                }) => {
                    if started.is_none() {
                        *started = Some(t);
                        st.gen += 1;
                        let gen = st.gen;
                        let due = t + *remaining;
                        self.schedule(due, Payload::CpuDone { exec: e, gen });
                    }
                    return;
                }
                Some(Current {
                    phase: Phase::AccelWait | Phase::EpsilonSuspend,
                    ..
                }) => return,
                Some(Current {
                    phase: Phase::Continue { .. },
                    ..
                })
                | None => {
                    self.advance(e, t);
                    // Needs may have changed; re-evaluate this core.
                }
            }
        }
    }

    /// Runs the executor through zero-time steps until it reaches a timed
    /// or waiting state. Only called while `e` owns its core.
    fn advance(&mut self, e: ExecutorIdx, t: Instant) {
        loop {
            let st = &mut self.execs[e.0];
            let Some(cur) = &mut st.current else {
                // Pick the highest-priority ready callback.
                let Some(&(prio, chain)) = st.ready.iter().next_back() else {
                    return;
                };
                st.ready.remove(&(prio, chain));
                let cb_pos = self.chains[chain.0]
                    .active
                    .as_ref()
                    .expect("ready chain has an active instance")
                    .cb_pos;
                let callback = self.system.chain(chain).callbacks[cb_pos];
                st.current = Some(Current {
                    chain,
                    callback,
                    phase: Phase::Continue { seg: 0 },
                });
                self.emit(SimEvent {
                    chain: Some(chain),
                    callback: Some(callback),
                    ..SimEvent::new(t, EventKind::CbStart)
                });
                continue;
            };
            let Phase::Continue { seg } = cur.phase else {
                return;
            };
            let chain = cur.chain;
            let callback = cur.callback;
            let segments = &self.system.callback(callback).segments;
            if seg == segments.len() {
                self.finish_callback(e, t);
                continue;
            }
            match segments[seg].kind {
                SegmentKind::Cpu => {
                    let work = self.sample(segments[seg].wcet);
                    let st = &mut self.execs[e.0];
                    st.gen += 1;
                    let gen = st.gen;
                    st.current.as_mut().unwrap().phase = Phase::CpuRun {
                        seg,
                        remaining: work,
                        epsilon_req: None,
                        started: Some(t),
                    };
                    self.schedule(t + work, Payload::CpuDone { exec: e, gen });
                    return;
                }
                SegmentKind::Accel => {
                    let accel = segments[seg].accelerator.expect("accel segment");
                    let service = self.sample(segments[seg].wcet);
                    let seg_ref = crate::model::SegmentRef { callback, seg };
                    let unit = self.system.unit_of(seg_ref);
                    let bucket = match self.params.mode {
                        SimMode::Paam => self.system.bucket_of(chain, accel),
                        SimMode::FifoDirect => 0,
                    };
                    let req = ReqId(self.requests.len());
                    self.requests.push(Request {
                        chain,
                        callback,
                        seg,
                        accel,
                        unit,
                        bucket,
                        exec: e,
                        priority: self.system.chain(chain).priority,
                        remaining: service,
                        enqueue_seq: 0,
                    });
                    self.emit(SimEvent {
                        chain: Some(chain),
                        callback: Some(callback),
                        segment: Some(seg),
                        accel: Some(accel),
                        unit: Some(unit),
                        bucket: self.trace_bucket(bucket),
                        ..SimEvent::new(t, EventKind::ReqSubmit)
                    });
                    let policy = self.system.executor(e).wait_policy;
                    let epsilon = match self.params.mode {
                        SimMode::Paam => self.system.accelerator(accel).epsilon,
                        SimMode::FifoDirect => Duration::ZERO,
                    };
                    if epsilon.is_zero() {
                        self.execs[e.0].current.as_mut().unwrap().phase = Phase::AccelWait;
                        self.enqueue_request(req, t);
                        if policy == WaitPolicy::Suspend {
                            self.dirty_cores.insert(self.system.executor(e).core);
                        }
                        return;
                    }
                    match policy {
                        WaitPolicy::Spin => {
                            let st = &mut self.execs[e.0];
                            st.gen += 1;
                            let gen = st.gen;
                            st.current.as_mut().unwrap().phase = Phase::CpuRun {
                                seg,
                                remaining: epsilon,
                                epsilon_req: Some(req),
                                started: Some(t),
                            };
                            self.schedule(t + epsilon, Payload::CpuDone { exec: e, gen });
                        }
                        WaitPolicy::Suspend => {
                            self.execs[e.0].current.as_mut().unwrap().phase =
                                Phase::EpsilonSuspend;
                            self.schedule(t + epsilon, Payload::EpsilonDone { req });
                            self.dirty_cores.insert(self.system.executor(e).core);
                        }
                    }
                    return;
                }
            }
        }
    }

    fn finish_callback(&mut self, e: ExecutorIdx, t: Instant) {
        let cur = self.execs[e.0].current.take().expect("finishing a callback");
        self.emit(SimEvent {
            chain: Some(cur.chain),
            callback: Some(cur.callback),
            ..SimEvent::new(t, EventKind::CbDone)
        });
        let chain_len = self.system.chain(cur.chain).callbacks.len();
        let st = self.chains[cur.chain.0]
            .active
            .as_mut()
            .expect("active instance");
        st.cb_pos += 1;
        if st.cb_pos < chain_len {
            self.mark_chain_ready(cur.chain);
        } else {
            self.finish_chain_instance(cur.chain, t);
        }
    }

    fn on_cpu_done(&mut self, e: ExecutorIdx, gen: u64, t: Instant) {
        if self.execs[e.0].gen != gen {
            return; // preempted or rescheduled since
        }
        let st = &mut self.execs[e.0];
        let Some(cur) = &mut st.current else { return };
        let Phase::CpuRun {
            seg, epsilon_req, started, ..
        } = &cur.phase
        else {
            return;
        };
        debug_assert!(started.is_some(), "live timer implies running work");
        let seg = *seg;
        match *epsilon_req {
            None => {
                let chain = cur.chain;
                let callback = cur.callback;
                cur.phase = Phase::Continue { seg: seg + 1 };
                self.emit(SimEvent {
                    chain: Some(chain),
                    callback: Some(callback),
                    segment: Some(seg),
                    ..SimEvent::new(t, EventKind::CpuSegDone)
                });
                self.dirty_cores.insert(self.system.executor(e).core);
            }
            Some(req) => {
                // Spin client's pre-enqueue window over: hand to the server.
                cur.phase = Phase::AccelWait;
                self.enqueue_request(req, t);
            }
        }
    }

    fn on_epsilon_done(&mut self, req: ReqId, t: Instant) {
        let e = self.requests[req.0].exec;
        let st = &mut self.execs[e.0];
        if let Some(cur) = &mut st.current {
            debug_assert!(matches!(cur.phase, Phase::EpsilonSuspend));
            cur.phase = Phase::AccelWait;
        }
        self.enqueue_request(req, t);
    }

    /// Request served: the waiting executor may continue past this segment.
    fn complete_request(&mut self, req: ReqId, t: Instant) {
        let r = &self.requests[req.0];
        let (e, seg) = (r.exec, r.seg);
        self.emit(SimEvent {
            chain: Some(r.chain),
            callback: Some(r.callback),
            segment: Some(seg),
            accel: Some(r.accel),
            unit: Some(r.unit),
            bucket: self.trace_bucket(r.bucket),
            ..SimEvent::new(t, EventKind::AccDone)
        });
        let st = &mut self.execs[e.0];
        if let Some(cur) = &mut st.current {
            debug_assert!(matches!(cur.phase, Phase::AccelWait));
            cur.phase = Phase::Continue { seg: seg + 1 };
        }
        self.dirty_cores.insert(self.system.executor(e).core);
    }

    // ------------------------------------------------------------------
    // Accelerator units
    // ------------------------------------------------------------------

    fn trace_bucket(&self, bucket: u32) -> Option<u32> {
        match self.params.mode {
            SimMode::Paam => Some(bucket),
            SimMode::FifoDirect => None,
        }
    }

    fn enqueue_request(&mut self, req: ReqId, t: Instant) {
        self.requests[req.0].enqueue_seq = self.enqueue_seq;
        self.enqueue_seq += 1;
        let r = &self.requests[req.0];
        let key = (r.accel, r.unit);
        self.emit(SimEvent {
            chain: Some(r.chain),
            callback: Some(r.callback),
            segment: Some(r.seg),
            accel: Some(r.accel),
            unit: Some(r.unit),
            bucket: self.trace_bucket(r.bucket),
            ..SimEvent::new(t, EventKind::ReqEnqueue)
        });
        let qkey = r.qkey();
        let unit = self.units.get_mut(&key).expect("unit exists");
        match self.params.mode {
            SimMode::Paam => {
                unit.queued.insert(qkey, req);
            }
            SimMode::FifoDirect => unit.fifo.push_back(req),
        }
        self.dirty_units.insert(key);
    }

    fn emit_unit_event(&mut self, kind: EventKind, req: ReqId, t: Instant) {
        let r = &self.requests[req.0];
        let ev = SimEvent {
            chain: Some(r.chain),
            callback: Some(r.callback),
            segment: Some(r.seg),
            accel: Some(r.accel),
            unit: Some(r.unit),
            bucket: self.trace_bucket(r.bucket),
            ..SimEvent::new(t, kind)
        };
        self.emit(ev);
    }

    fn start_service(&mut self, key: (AccelIdx, u32), req: ReqId, t: Instant, resumed: bool) {
        let kind = if resumed {
            EventKind::AccResume
        } else {
            EventKind::AccStart
        };
        self.emit_unit_event(kind, req, t);
        let remaining = self.requests[req.0].remaining;
        let unit = self.units.get_mut(&key).expect("unit exists");
        unit.gen += 1;
        let gen = unit.gen;
        unit.run = RunState::Executing { req, started: t };
        self.schedule(
            t + remaining,
            Payload::ServiceDone {
                accel: key.0,
                unit: key.1,
                gen,
            },
        );
    }

    fn preempt_running(&mut self, key: (AccelIdx, u32), t: Instant) {
        let unit = self.units.get_mut(&key).expect("unit exists");
        let RunState::Executing { req, started } = unit.run else {
            unreachable!("preempting a non-running unit");
        };
        unit.busy += t.elapsed_since(started);
        unit.gen += 1;
        unit.preemptions += 1;
        let kappa = unit.kappa;
        self.requests[req.0].remaining -= t.elapsed_since(started);
        let qkey = self.requests[req.0].qkey();
        let unit = self.units.get_mut(&key).expect("unit exists");
        unit.preempted.insert(qkey, req);
        self.emit_unit_event(EventKind::AccPreempt, req, t);
        let unit = self.units.get_mut(&key).expect("unit exists");
        if kappa.is_zero() {
            unit.run = RunState::Idle;
        } else {
            unit.run = RunState::Switching {
                resume: None,
                started: t,
            };
            let gen = unit.gen;
            self.schedule(
                t + kappa,
                Payload::SwitchDone {
                    accel: key.0,
                    unit: key.1,
                    gen,
                },
            );
        }
    }

    fn on_service_done(&mut self, accel: AccelIdx, unit_idx: u32, gen: u64, t: Instant) {
        let key = (accel, unit_idx);
        let unit = self.units.get_mut(&key).expect("unit exists");
        if unit.gen != gen {
            return;
        }
        match &unit.run {
            RunState::Executing { req, started } => {
                let (req, started) = (*req, *started);
                unit.busy += t.elapsed_since(started);
                unit.run = RunState::Idle;
                self.complete_request(req, t);
                self.dirty_units.insert(key);
            }
            RunState::Concurrent { .. } => {
                self.concurrent_progress(key, t);
            }
            _ => unreachable!("stale service timer"),
        }
    }

    fn on_switch_done(&mut self, accel: AccelIdx, unit_idx: u32, gen: u64, t: Instant) {
        let key = (accel, unit_idx);
        let unit = self.units.get_mut(&key).expect("unit exists");
        if unit.gen != gen {
            return;
        }
        let RunState::Switching { resume, started } =
            std::mem::replace(&mut unit.run, RunState::Idle)
        else {
            unreachable!("stale switch timer");
        };
        unit.busy += t.elapsed_since(started);
        match resume {
            Some(req) => {
                let qkey = self.requests[req.0].qkey();
                let unit = self.units.get_mut(&key).expect("unit exists");
                unit.preempted.remove(&qkey);
                self.start_service(key, req, t, true);
                // A strictly higher request may have arrived during the
                // switch window; the settle pass preempts again then.
                self.dirty_units.insert(key);
            }
            None => {
                self.dirty_units.insert(key);
            }
        }
    }

    fn settle_unit(&mut self, key: (AccelIdx, u32), t: Instant) {
        loop {
            let unit = self.units.get_mut(&key).expect("unit exists");
            match &unit.run {
                RunState::Switching { .. } => return,
                RunState::Executing { req, .. } => {
                    let running_bucket = self.requests[req.0].bucket;
                    let best_queued = unit.queued.iter().next_back().map(|(&k, _)| k);
                    match best_queued {
                        Some((bucket, ..)) if bucket > running_bucket => {
                            self.preempt_running(key, t);
                            // Zero-cost switch falls straight to dispatch.
                        }
                        _ => return,
                    }
                }
                RunState::Concurrent { .. } => {
                    if self.settle_concurrent(key, t) {
                        return;
                    }
                }
                RunState::Idle => {
                    if self.params.mode == SimMode::FifoDirect {
                        let unit = self.units.get_mut(&key).expect("unit exists");
                        let Some(req) = unit.fifo.pop_front() else {
                            return;
                        };
                        self.start_service(key, req, t, false);
                        return;
                    }
                    let best_queued = unit.queued.iter().next_back().map(|(&k, &r)| (k, r));
                    let best_preempted = unit.preempted.iter().next_back().map(|(&k, &r)| (k, r));
                    match (best_queued, best_preempted) {
                        (None, None) => return,
                        (q, p) => {
                            let from_queue = match (q, p) {
                                (Some((qk, _)), Some((pk, _))) => qk > pk,
                                (Some(_), None) => true,
                                _ => false,
                            };
                            if self.params.concurrent_lowest_bucket {
                                let best_key = if from_queue { q.unwrap().0 } else { p.unwrap().0 };
                                if best_key.0 == 0 {
                                    self.form_concurrent_group(key, t);
                                    return;
                                }
                            }
                            if from_queue {
                                let (qk, req) = q.unwrap();
                                let unit = self.units.get_mut(&key).expect("unit exists");
                                unit.queued.remove(&qk);
                                self.start_service(key, req, t, false);
                                return;
                            }
                            let (pk, req) = p.unwrap();
                            let unit = self.units.get_mut(&key).expect("unit exists");
                            let kappa = unit.kappa;
                            if kappa.is_zero() {
                                unit.preempted.remove(&pk);
                                self.start_service(key, req, t, true);
                                return;
                            }
                            unit.gen += 1;
                            let gen = unit.gen;
                            unit.run = RunState::Switching {
                                resume: Some(req),
                                started: t,
                            };
                            self.schedule(
                                t + kappa,
                                Payload::SwitchDone {
                                    accel: key.0,
                                    unit: key.1,
                                    gen,
                                },
                            );
                            return;
                        }
                    }
                }
            }
        }
    }

    // ------------------------------------------------------------------
    // Optional concurrent execution in the lowest bucket
    // ------------------------------------------------------------------

    fn concurrent_rate(&self, members: usize) -> f64 {
        if members >= 2 {
            self.params.concurrent_slowdown
        } else {
            1.0
        }
    }

    /// Updates member progress and completes finished kernels. Returns
    /// resulting member count.
    fn concurrent_progress(&mut self, key: (AccelIdx, u32), t: Instant) -> usize {
        let unit = self.units.get_mut(&key).expect("unit exists");
        let RunState::Concurrent { members, since } = &unit.run else {
            unreachable!("not concurrent");
        };
        let members = members.clone();
        let since = *since;
        let wall = t.elapsed_since(since);
        let rate = self.concurrent_rate(members.len());
        let progress = Duration::from_ns((wall.as_ns() as f64 / rate).round() as u64);
        let mut still_running = Vec::new();
        let mut finished = Vec::new();
        for req in members {
            let rem = &mut self.requests[req.0].remaining;
            if *rem <= progress {
                *rem = Duration::ZERO;
                finished.push(req);
            } else {
                *rem -= progress;
                still_running.push(req);
            }
        }
        let unit = self.units.get_mut(&key).expect("unit exists");
        if !wall.is_zero() {
            unit.busy += wall;
        }
        let n = still_running.len();
        if n == 0 {
            unit.run = RunState::Idle;
        } else {
            unit.run = RunState::Concurrent {
                members: still_running,
                since: t,
            };
        }
        for req in finished {
            self.complete_request(req, t);
        }
        self.dirty_units.insert(key);
        n
    }

    /// Gathers every pending lowest-bucket request into one co-running set.
    fn form_concurrent_group(&mut self, key: (AccelIdx, u32), t: Instant) {
        #[derive(PartialEq)]
        enum Entry {
            Fresh,
            Resumed,
            AlreadyRunning,
        }
        let mut members: Vec<(ReqId, Entry)> = Vec::new();
        let mut resumed = false;
        {
            let unit = self.units.get_mut(&key).expect("unit exists");
            let fresh: Vec<QKey> = unit.queued.keys().copied().filter(|k| k.0 == 0).collect();
            for k in fresh {
                let req = unit.queued.remove(&k).expect("present");
                members.push((req, Entry::Fresh));
            }
            let paused: Vec<QKey> = unit
                .preempted
                .keys()
                .copied()
                .filter(|k| k.0 == 0)
                .collect();
            for k in paused {
                let req = unit.preempted.remove(&k).expect("present");
                members.push((req, Entry::Resumed));
                resumed = true;
            }
            if let RunState::Concurrent { members: old, .. } =
                std::mem::replace(&mut unit.run, RunState::Idle)
            {
                for req in old {
                    members.push((req, Entry::AlreadyRunning));
                }
            }
        }
        if members.is_empty() {
            return;
        }
        members.sort_by_key(|&(r, _)| r);
        for (req, entry) in &members {
            match entry {
                Entry::Fresh => self.emit_unit_event(EventKind::AccStart, *req, t),
                Entry::Resumed => self.emit_unit_event(EventKind::AccResume, *req, t),
                Entry::AlreadyRunning => {}
            }
        }
        let ids: Vec<ReqId> = members.iter().map(|&(r, _)| r).collect();
        let unit = self.units.get_mut(&key).expect("unit exists");
        unit.gen += 1;
        // One resume charge for the whole group.
        if resumed && !unit.kappa.is_zero() {
            let kappa = unit.kappa;
            unit.busy += kappa;
        }
        unit.run = RunState::Concurrent {
            members: ids,
            since: t,
        };
        self.schedule_concurrent_timer(key, t);
    }

    fn schedule_concurrent_timer(&mut self, key: (AccelIdx, u32), t: Instant) {
        let (members, gen) = {
            let unit = self.units.get(&key).expect("unit exists");
            match &unit.run {
                RunState::Concurrent { members, .. } => (members.clone(), unit.gen),
                _ => return,
            }
        };
        let rate = self.concurrent_rate(members.len());
        let min_rem = members
            .iter()
            .map(|r| self.requests[r.0].remaining)
            .min()
            .expect("non-empty group");
        let wall = Duration::from_ns((min_rem.as_ns() as f64 * rate).ceil() as u64);
        self.schedule(
            t + wall,
            Payload::ServiceDone {
                accel: key.0,
                unit: key.1,
                gen,
            },
        );
    }

    /// Concurrent-state settle step. Returns true when the unit is stable.
    fn settle_concurrent(&mut self, key: (AccelIdx, u32), t: Instant) -> bool {
        let best_queued_bucket = {
            let unit = self.units.get(&key).expect("unit exists");
            unit.queued.keys().next_back().map(|&(b, ..)| b)
        };
        match best_queued_bucket {
            Some(b) if b > 0 => {
                // Preempt the whole group behind one switch window.
                self.concurrent_progress(key, t);
                let members = {
                    let unit = self.units.get_mut(&key).expect("unit exists");
                    match std::mem::replace(&mut unit.run, RunState::Idle) {
                        RunState::Concurrent { members, .. } => members,
                        other => {
                            unit.run = other;
                            Vec::new()
                        }
                    }
                };
                if members.is_empty() {
                    return false; // everything finished; plain dispatch next
                }
                for &req in &members {
                    let qk = self.requests[req.0].qkey();
                    let unit = self.units.get_mut(&key).expect("unit exists");
                    unit.preempted.insert(qk, req);
                    unit.preemptions += 1;
                    self.emit_unit_event(EventKind::AccPreempt, req, t);
                }
                let unit = self.units.get_mut(&key).expect("unit exists");
                unit.gen += 1;
                let kappa = unit.kappa;
                if kappa.is_zero() {
                    false
                } else {
                    let gen = unit.gen;
                    unit.run = RunState::Switching {
                        resume: None,
                        started: t,
                    };
                    self.schedule(
                        t + kappa,
                        Payload::SwitchDone {
                            accel: key.0,
                            unit: key.1,
                            gen,
                        },
                    );
                    true
                }
            }
            Some(_) => {
                // New lowest-bucket work: account progress, then regroup.
                self.concurrent_progress(key, t);
                let reformable = {
                    let unit = self.units.get(&key).expect("unit exists");
                    matches!(unit.run, RunState::Concurrent { .. } | RunState::Idle)
                };
                if reformable {
                    self.form_concurrent_group(key, t);
                }
                true
            }
            None => true,
        }
    }

    // ------------------------------------------------------------------
    // Settle and teardown
    // ------------------------------------------------------------------

    fn settle(&mut self, t: Instant) {
        while !self.dirty_units.is_empty() || !self.dirty_cores.is_empty() {
            let units = std::mem::take(&mut self.dirty_units);
            for key in units {
                self.settle_unit(key, t);
            }
            let cores = std::mem::take(&mut self.dirty_cores);
            for core in cores {
                self.settle_core(core, t);
            }
        }
    }

    fn finish(mut self) -> SimOutput {
        // Account busy time of units still running at the horizon.
        let end = self.end;
        for unit in self.units.values_mut() {
            match &unit.run {
                RunState::Executing { started, .. }
                | RunState::Switching { started, .. }
                | RunState::Concurrent { since: started, .. } => {
                    unit.busy += end.elapsed_since(*started);
                }
                RunState::Idle => {}
            }
        }
        let chains = self
            .system
            .chains
            .iter()
            .enumerate()
            .map(|(i, def)| {
                let st = &mut self.chains[i];
                st.responses.sort();
                let sum: u64 = st.responses.iter().map(|d| d.as_ns()).sum();
                let mean = if st.responses.is_empty() {
                    None
                } else {
                    Some(Duration::from_ns(sum / st.responses.len() as u64))
                };
                ChainStats {
                    id: def.id.clone(),
                    criticality: def.criticality,
                    released: st.released,
                    completed: st.completed,
                    dropped: st.dropped,
                    deadline_misses: st.misses,
                    min: st.responses.first().copied(),
                    mean,
                    max: st.responses.last().copied(),
                    p50: percentile(&st.responses, 50),
                    p95: percentile(&st.responses, 95),
                    p99: percentile(&st.responses, 99),
                }
            })
            .collect();
        let units = self
            .units
            .values()
            .map(|u| UnitStats {
                accel: self.system.accelerator(u.accel).id.clone(),
                unit: u.unit,
                busy: u.busy,
                busy_fraction: u.busy.as_ns() as f64 / self.params.duration.as_ns() as f64,
                preemptions: u.preemptions,
            })
            .collect();
        SimOutput {
            stats: SimStats {
                fingerprint: self.system.fingerprint(),
                mode: self.params.mode,
                duration: self.params.duration,
                seed: self.params.seed,
                chains,
                units,
            },
            trace: self.trace,
        }
    }
}

//! Compact system construction for unit tests.

use crate::model::{
    validate_system, Criticality, RawAccelerator, RawCallback, RawChain, RawConfig, RawExecutor,
    RawSegment, SegmentKind, SystemConfig, TimeUnit, WaitPolicy,
};

pub struct SystemBuilder {
    raw: RawConfig,
}

pub fn cpu_ms(ms: u64) -> RawSegment {
    RawSegment {
        kind: SegmentKind::Cpu,
        wcet: ms * 1_000_000,
        accelerator: None,
    }
}

pub fn acc_ms(ms: u64, accel: &str) -> RawSegment {
    RawSegment {
        kind: SegmentKind::Accel,
        wcet: ms * 1_000_000,
        accelerator: Some(accel.to_string()),
    }
}

pub fn acc_ns(ns: u64, accel: &str) -> RawSegment {
    RawSegment {
        kind: SegmentKind::Accel,
        wcet: ns,
        accelerator: Some(accel.to_string()),
    }
}

impl SystemBuilder {
    pub fn new(cores: u32) -> Self {
        SystemBuilder {
            raw: RawConfig {
                time_unit: TimeUnit::Ns,
                cores,
                accelerators: Vec::new(),
                executors: Vec::new(),
                callbacks: Vec::new(),
                chains: Vec::new(),
            },
        }
    }

    /// Accelerator with explicit overheads in nanoseconds.
    pub fn accel(mut self, id: &str, units: u32, buckets: u32, eps_ns: u64, kappa_ns: u64, server_core: u32) -> Self {
        self.raw.accelerators.push(RawAccelerator {
            id: id.to_string(),
            units,
            buckets_per_unit: buckets,
            epsilon: Some(eps_ns),
            kappa: Some(kappa_ns),
            server_core,
        });
        self
    }

    pub fn executor(mut self, id: &str, core: u32, process_priority: u32, policy: WaitPolicy) -> Self {
        self.raw.executors.push(RawExecutor {
            id: id.to_string(),
            callbacks: Vec::new(),
            cpu_core: core,
            process_priority,
            wait_policy: policy,
        });
        self
    }

    pub fn callback(mut self, id: &str, executor: &str, segments: Vec<RawSegment>) -> Self {
        let e = self
            .raw
            .executors
            .iter_mut()
            .find(|e| e.id == executor)
            .expect("executor declared before callback");
        e.callbacks.push(id.to_string());
        self.raw.callbacks.push(RawCallback {
            id: id.to_string(),
            segments,
        });
        self
    }

    pub fn chain_ms(
        mut self,
        id: &str,
        callbacks: &[&str],
        period_ms: u64,
        deadline_ms: u64,
        priority: u32,
        criticality: Criticality,
    ) -> Self {
        self.raw.chains.push(RawChain {
            id: id.to_string(),
            callbacks: callbacks.iter().map(|s| s.to_string()).collect(),
            period: period_ms * 1_000_000,
            deadline: deadline_ms * 1_000_000,
            priority,
            criticality,
            phase: None,
        });
        self
    }

    pub fn raw(self) -> RawConfig {
        self.raw
    }

    pub fn build(self) -> SystemConfig {
        validate_system(&self.raw).expect("test system is valid")
    }
}

/// One chain, one callback `[CPU 2ms, ACCEL 3ms]`, T = D = 20ms,
/// zero overheads; client on core 0, server on core 1.
pub fn isolated_chain() -> SystemConfig {
    SystemBuilder::new(2)
        .accel("gpu0", 1, 1, 0, 0, 1)
        .executor("e0", 0, 1, WaitPolicy::Suspend)
        .callback("cb0", "e0", vec![cpu_ms(2), acc_ms(3, "gpu0")])
        .chain_ms("c0", &["cb0"], 20, 20, 1, Criticality::Critical)
        .build()
}

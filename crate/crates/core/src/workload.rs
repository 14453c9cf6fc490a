//! Seeded random chainset generation for schedulability studies.
//!
//! Each generated chain has a log-uniform random period, deadline equal to
//! period, and a utilization budget split between CPU and accelerator time
//! by a configurable ratio, spread equally over its callbacks. Every chain
//! runs in its own single-threaded executor; executors are packed onto
//! client cores by worst-fit on CPU utilization, and one accelerator with
//! a dedicated server core serves all accelerator segments.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::analysis::analyze_system;
use crate::model::{
    validate_system, Criticality, RawAccelerator, RawCallback, RawChain, RawConfig, RawExecutor,
    RawSegment, SegmentKind, SystemConfig, TimeUnit, WaitPolicy,
};
use crate::time::Duration;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generator parameters: {0}")]
    BadParams(String),
    #[error("infeasible parameters: {0}")]
    Infeasible(String),
}

/// How the `utilization` parameter is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UtilizationMode {
    /// Every chain gets the same utilization.
    PerChain,
    /// `utilization` is a system total, split across chains by UUniFast.
    UuniFastTotal,
}

#[derive(Debug, Clone)]
pub struct GenParams {
    pub chain_count: u32,
    pub callbacks_per_chain: u32,
    pub utilization: f64,
    pub utilization_mode: UtilizationMode,
    /// Accelerator-to-CPU utilization ratio, e.g. (1, 1) or (1, 9).
    pub accel_ratio: (u32, u32),
    pub period_min: Duration,
    pub period_max: Duration,
    pub buckets: u32,
    pub units: u32,
    pub client_cores: u32,
    pub wait_policy: WaitPolicy,
    /// `None` keeps the model defaults.
    pub epsilon: Option<Duration>,
    pub kappa: Option<Duration>,
    pub seed: u64,
}

impl GenParams {
    pub fn new(chain_count: u32, utilization: f64, accel_ratio: (u32, u32), seed: u64) -> Self {
        GenParams {
            chain_count,
            callbacks_per_chain: 4,
            utilization,
            utilization_mode: UtilizationMode::PerChain,
            accel_ratio,
            period_min: Duration::from_ms(10),
            period_max: Duration::from_ms(1000),
            buckets: 6,
            units: 1,
            client_cores: 4,
            wait_policy: WaitPolicy::Suspend,
            epsilon: None,
            kappa: None,
            seed,
        }
    }

    fn check(&self) -> Result<(), GenError> {
        if self.chain_count == 0 {
            return Err(GenError::BadParams("chain count must be positive".into()));
        }
        if self.callbacks_per_chain == 0 {
            return Err(GenError::BadParams("callbacks per chain must be positive".into()));
        }
        if !(self.utilization > 0.0) || !self.utilization.is_finite() {
            return Err(GenError::BadParams("utilization must be positive".into()));
        }
        if self.accel_ratio == (0, 0) {
            return Err(GenError::BadParams("ratio cannot be 0:0".into()));
        }
        if self.period_min.is_zero() || self.period_max < self.period_min {
            return Err(GenError::BadParams("bad period range".into()));
        }
        if self.buckets == 0 || self.units == 0 || self.client_cores == 0 {
            return Err(GenError::BadParams("counts must be positive".into()));
        }
        Ok(())
    }
}

/// Classic UUniFast split of a total utilization into `n` parts.
fn uunifast(rng: &mut ChaCha8Rng, total: f64, n: usize) -> Vec<f64> {
    let mut parts = Vec::with_capacity(n);
    let mut sum = total;
    for i in (1..n).rev() {
        let next = sum * rng.gen::<f64>().powf(1.0 / i as f64);
        parts.push(sum - next);
        sum = next;
    }
    parts.push(sum);
    parts
}

/// Splits `total` into `n` near-equal integer parts (remainder spread over
/// the first parts, 1ns each).
fn split_even(total: u64, n: u64) -> Vec<u64> {
    let base = total / n;
    let rem = total % n;
    (0..n).map(|i| base + u64::from(i < rem)).collect()
}

/// Generates and validates one random system.
pub fn generate_chainset(params: &GenParams) -> Result<SystemConfig, GenError> {
    params.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let m = params.chain_count as usize;
    let k = params.callbacks_per_chain as u64;
    let (ra, rb) = params.accel_ratio;

    // Log-uniform periods rounded to 1us.
    let ln_min = (params.period_min.as_ns() as f64).ln();
    let ln_max = (params.period_max.as_ns() as f64).ln();
    let periods: Vec<Duration> = (0..m)
        .map(|_| {
            let ns = (rng.gen_range(ln_min..=ln_max)).exp();
            let us = (ns / 1_000.0).round().max(1.0) as u64;
            Duration::from_us(us)
        })
        .collect();

    let utils: Vec<f64> = match params.utilization_mode {
        UtilizationMode::PerChain => vec![params.utilization; m],
        UtilizationMode::UuniFastTotal => uunifast(&mut rng, params.utilization, m),
    };

    // Unique priorities 1..=m, shuffled.
    let mut priorities: Vec<u32> = (1..=m as u32).collect();
    priorities.shuffle(&mut rng);

    let mut callbacks = Vec::new();
    let mut chains = Vec::new();
    let mut cpu_utils = Vec::with_capacity(m);
    for i in 0..m {
        let t = periods[i];
        let budget = (t.as_ns() as f64 * utils[i]).round() as u64;
        let accel_total = (u128::from(budget) * u128::from(ra) / u128::from(ra + rb)) as u64;
        let cpu_total = budget - accel_total;
        let accel_parts = split_even(accel_total, k);
        let cpu_parts = split_even(cpu_total, k);
        let mut cb_ids = Vec::with_capacity(k as usize);
        for j in 0..k as usize {
            let mut segments = Vec::new();
            let cpu_cb = cpu_parts[j];
            let accel_cb = accel_parts[j];
            if rb > 0 && cpu_cb == 0 {
                return Err(GenError::Infeasible(format!(
                    "chain {i}: CPU budget below 1ns per callback"
                )));
            }
            if ra > 0 && accel_cb == 0 {
                return Err(GenError::Infeasible(format!(
                    "chain {i}: accelerator budget below 1ns per callback"
                )));
            }
            if accel_cb == 0 {
                segments.push(RawSegment {
                    kind: SegmentKind::Cpu,
                    wcet: cpu_cb,
                    accelerator: None,
                });
            } else if cpu_cb == 0 {
                segments.push(RawSegment {
                    kind: SegmentKind::Accel,
                    wcet: accel_cb,
                    accelerator: Some("accel0".into()),
                });
            } else {
                // One accelerator segment between two equal CPU halves.
                let h1 = cpu_cb / 2;
                let h2 = cpu_cb - h1;
                if h1 > 0 {
                    segments.push(RawSegment {
                        kind: SegmentKind::Cpu,
                        wcet: h1,
                        accelerator: None,
                    });
                }
                segments.push(RawSegment {
                    kind: SegmentKind::Accel,
                    wcet: accel_cb,
                    accelerator: Some("accel0".into()),
                });
                segments.push(RawSegment {
                    kind: SegmentKind::Cpu,
                    wcet: h2,
                    accelerator: None,
                });
            }
            let id = format!("cb_{i}_{j}");
            cb_ids.push(id.clone());
            callbacks.push(RawCallback { id, segments });
        }
        chains.push(RawChain {
            id: format!("chain_{i}"),
            callbacks: cb_ids,
            period: t.as_ns(),
            deadline: t.as_ns(),
            priority: priorities[i],
            criticality: Criticality::Critical,
            phase: None,
        });
        cpu_utils.push(cpu_total as f64 / t.as_ns() as f64);
    }

    // One executor per chain; worst-fit decreasing onto client cores.
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        cpu_utils[b]
            .partial_cmp(&cpu_utils[a])
            .expect("finite utilization")
    });
    let mut core_load = vec![0.0f64; params.client_cores as usize];
    let mut exec_core = vec![0u32; m];
    for &i in &order {
        let mut best = 0usize;
        for c in 1..core_load.len() {
            if core_load[c] < core_load[best] {
                best = c;
            }
        }
        core_load[best] += cpu_utils[i];
        exec_core[i] = best as u32;
    }
    let executors: Vec<RawExecutor> = (0..m)
        .map(|i| RawExecutor {
            id: format!("ex_{i}"),
            callbacks: chains[i].callbacks.clone(),
            cpu_core: exec_core[i],
            process_priority: priorities[i],
            wait_policy: params.wait_policy,
        })
        .collect();

    let raw = RawConfig {
        time_unit: TimeUnit::Ns,
        cores: params.client_cores + 1,
        accelerators: vec![RawAccelerator {
            id: "accel0".into(),
            units: params.units,
            buckets_per_unit: params.buckets,
            epsilon: params.epsilon.map(|d| d.as_ns()),
            kappa: params.kappa.map(|d| d.as_ns()),
            server_core: params.client_cores,
        }],
        executors,
        callbacks,
        chains,
    };
    validate_system(&raw).map_err(|e| GenError::BadParams(format!("generator bug: {e}")))
}

/// Seed for the `trial`-th system of a batch.
pub fn trial_seed(base: u64, trial: u32) -> u64 {
    base.wrapping_add(u64::from(trial))
}

/// Fraction of generated systems whose critical chains all pass analysis.
pub fn schedulability_ratio(params: &GenParams, trials: u32) -> Result<f64, GenError> {
    if trials == 0 {
        return Err(GenError::BadParams("trials must be at least 1".into()));
    }
    let mut accepted = 0u32;
    for trial in 0..trials {
        if trial_is_schedulable(params, trial)? {
            accepted += 1;
        }
    }
    Ok(f64::from(accepted) / f64::from(trials))
}

/// Analyzes the `trial`-th system of a batch.
pub fn trial_is_schedulable(params: &GenParams, trial: u32) -> Result<bool, GenError> {
    let mut p = params.clone();
    p.seed = trial_seed(params.seed, trial);
    let system = generate_chainset(&p)?;
    Ok(analyze_system(&system).schedulable)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ms(v: u64) -> Duration {
        Duration::from_ms(v)
    }

    fn fixed_period_params(ratio: (u32, u32)) -> GenParams {
        let mut p = GenParams::new(1, 0.5, ratio, 42);
        p.period_min = ms(100);
        p.period_max = ms(100);
        p
    }

    #[test]
    fn even_split_at_one_to_one() {
        let system = generate_chainset(&fixed_period_params((1, 1))).unwrap();
        for cb in &system.callbacks {
            assert_eq!(cb.cpu_wcet, Duration::from_us(6250));
            assert_eq!(cb.accel_wcet, Duration::from_us(6250));
            assert_eq!(cb.segments.len(), 3);
        }
    }

    #[test]
    fn skewed_split_at_one_to_nine() {
        let system = generate_chainset(&fixed_period_params((1, 9))).unwrap();
        for cb in &system.callbacks {
            assert_eq!(cb.cpu_wcet, Duration::from_us(11250));
            assert_eq!(cb.accel_wcet, Duration::from_us(1250));
        }
    }

    #[test]
    fn zero_accel_share_gives_pure_cpu_chains() {
        let system = generate_chainset(&fixed_period_params((0, 1))).unwrap();
        for c in &system.chains {
            assert_eq!(c.accel_segment_count, 0);
        }
        for cb in &system.callbacks {
            assert_eq!(cb.segments.len(), 1);
        }
    }

    #[test]
    fn same_seed_same_system() {
        let p = GenParams::new(5, 0.3, (1, 1), 7);
        let a = generate_chainset(&p).unwrap().to_json();
        let b = generate_chainset(&p).unwrap().to_json();
        assert_eq!(a, b);
    }

    #[test]
    fn utilization_accounting_within_rounding() {
        for seed in 0..20 {
            let p = GenParams::new(6, 0.35, (3, 7), seed);
            let system = generate_chainset(&p).unwrap();
            for c in &system.chains {
                let total: u64 = c
                    .callbacks
                    .iter()
                    .map(|&cb| {
                        let cb = system.callback(cb);
                        cb.cpu_wcet.as_ns() + cb.accel_wcet.as_ns()
                    })
                    .sum();
                let target = (c.period.as_ns() as f64 * 0.35).round() as i64;
                assert!(
                    (total as i64 - target).unsigned_abs() <= 1_000,
                    "budget off by more than 1us"
                );
            }
        }
    }

    #[test]
    fn priorities_are_a_permutation() {
        let p = GenParams::new(8, 0.1, (1, 1), 3);
        let system = generate_chainset(&p).unwrap();
        let mut prios: Vec<u32> = system.chains.iter().map(|c| c.priority).collect();
        prios.sort();
        assert_eq!(prios, (1..=8).collect::<Vec<_>>());
    }

    #[test]
    fn generated_systems_always_validate() {
        for seed in 0..50 {
            let p = GenParams::new(1 + (seed % 8) as u32, 0.2, (1, 1), seed);
            generate_chainset(&p).unwrap();
        }
    }

    #[test]
    fn tiny_utilization_always_schedulable() {
        let p = GenParams::new(2, 0.001, (1, 1), 11);
        assert_eq!(schedulability_ratio(&p, 20).unwrap(), 1.0);
    }

    #[test]
    fn single_chain_overload_never_schedulable() {
        // E + H alone exceed D = T at utilization 1.2.
        let p = GenParams::new(1, 1.2, (1, 1), 11);
        assert_eq!(schedulability_ratio(&p, 20).unwrap(), 0.0);
    }

    #[test]
    fn ratio_is_deterministic() {
        let p = GenParams::new(5, 0.25, (1, 1), 123);
        assert_eq!(
            schedulability_ratio(&p, 50).unwrap(),
            schedulability_ratio(&p, 50).unwrap()
        );
    }

    #[test]
    fn uunifast_parts_sum_to_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let parts = uunifast(&mut rng, 0.9, 6);
        assert_eq!(parts.len(), 6);
        let sum: f64 = parts.iter().sum();
        assert!((sum - 0.9).abs() < 1e-9);
        assert!(parts.iter().all(|&u| u >= 0.0));
    }

    #[test]
    fn infeasible_budget_is_reported() {
        let mut p = GenParams::new(1, 1e-9, (1, 1), 5);
        p.period_min = Duration::from_us(10);
        p.period_max = Duration::from_us(10);
        assert!(matches!(
            generate_chainset(&p),
            Err(GenError::Infeasible(_))
        ));
    }
}

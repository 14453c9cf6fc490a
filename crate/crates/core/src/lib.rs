//! Schedulability analysis and deterministic discrete-event simulation of
//! periodic processing chains whose callbacks access shared accelerators
//! through a priority-driven access-management (PAAM) server.
//!
//! The crate is organized around a validated [`model::SystemConfig`]:
//!
//! * [`model`] — domain types, configuration parsing and validation,
//!   priority-to-bucket downsampling, worst-fit unit placement.
//! * [`analysis`] — worst-case response-time bounds for chains with
//!   accelerator segments, plus admission control.
//! * [`sim`] — event-driven simulation of cores, preemptive executor
//!   processes, non-preemptive callback scheduling, and bucketized
//!   accelerator serving (or direct FIFO invocation).
//! * [`workload`] — seeded random chainset generation for schedulability
//!   studies.
//! * [`experiments`] — scripted schedulability curves and the bundled
//!   overload scenario.

pub mod analysis;
pub mod experiments;
pub mod model;
pub mod sim;
pub mod time;
pub mod workload;

#[cfg(test)]
pub(crate) mod testutil;

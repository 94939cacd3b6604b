//! Deterministic discrete-event simulator, trace checker, and parameter lab
//! for a quorum-based atomic read/write register that tolerates continuous
//! churn and crash failures.
//!
//! The crate is organized around the lifecycle of an experiment:
//!
//! * [`params`] validates system parameters (churn rate, failure fraction,
//!   minimum size) and algorithm parameters (join bound, quorum bound) with
//!   exact rational arithmetic, and computes the feasible intervals.
//! * [`protocol`] is the node state machine as a pure transition function.
//! * [`network`] simulates the broadcast service: bounded per-receiver
//!   delays, per-link FIFO, and delivery eligibility under churn.
//! * [`adversary`] generates enter/leave/crash signals and operation
//!   invocations subject to the model constraints.
//! * [`engine`] merges everything into one totally ordered event stream and
//!   records a replayable trace.
//! * [`checker`] verifies traces offline: atomicity (two independent
//!   methods), join liveness, operation liveness, and model bounds.

pub mod adversary;
pub mod checker;
pub mod engine;
pub mod network;
pub mod params;
pub mod protocol;
pub mod rational;
pub mod report;
pub mod scenarios;
pub mod trace;

//! RAN slicing for massive-IoT and bursty URLLC service multiplexing.
//!
//! This crate models a coordinated-multipoint RAN whose bandwidth and transmit
//! power are split between two slice families:
//!
//! * **mIoT slices** carry uplink random-access traffic from a Poisson field of
//!   IoT devices. [`miot`] holds the closed-form random-access success
//!   probability and queue-intensity evolution; [`simcore`] is the matching
//!   discrete-event Monte-Carlo oracle (PPP deployment, slotted-ALOHA contention,
//!   integer per-device queues).
//! * **URLLC slices** carry downlink short packets under finite-blocklength
//!   coding. [`urllc`] holds the channel-use bound, the per-packet bandwidth
//!   rule and the M/M/W bandwidth upper bound.
//!
//! The slot-level optimizer lives in [`convex`] (Taylor surrogate of the
//! random-access utility, bisection trust intervals, PSD-cone subproblems with
//! rank-one beamformer recovery) and [`orchestrator`] (scenario sampling, greedy
//! device association, ADMM consensus over the slot bandwidth, and the
//! per-minislot re-optimization loop). [`harness`] drives reproducible
//! experiments and emits CSV/JSON results.
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod config;
pub mod convex;
pub mod harness;
pub mod miot;
pub mod orchestrator;
pub mod simcore;
pub mod urllc;

pub use config::{ExperimentConfig, SystemConfig};

//! Discrete-event simulator comparing two priority-aware MAC protocols on a
//! single-hop star network: a banded-contention CSMA variant (`bop`) and a
//! fragmenting, preemption-friendly variant (`frog`).
//!
//! The crate is organized bottom-up: an event kernel with a strict dispatch
//! order, a broadcast medium with all-or-nothing collisions, traffic
//! generators and per-node queues, the two MAC state machines, metrics, and
//! an experiment layer that sweeps configurations into CSV tables.

pub mod contention;
pub mod experiment;
pub mod kernel;
pub mod medium;
pub mod metrics;
pub mod rng;
pub mod time;
pub mod traffic;

pub mod bop;
pub mod configfile;
pub mod frog;
pub mod sim;

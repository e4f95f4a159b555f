//! Software testbed for a five-stage cyber-physical aquaponics loop.
//!
//! The crate is organised the way the physical system is wired:
//!
//! * [`plant`] advances the water loop (tanks, pumps, aeration,
//!   nitrification) in discrete virtual time and produces sensor signals.
//! * [`bus`] is a small MQTT 3.1.1 subset broker with an in-process fast
//!   path and a TCP front end.
//! * [`edge`] holds the per-stage agents that sample and actuate.
//! * [`gateway`] seals, verifies and routes integrity-protected envelopes.
//! * [`controller`] runs the Moore machine over Stage-2 telemetry.
//! * [`datastore`] is the append-only log with CSV export.
//! * [`scenario`] owns the virtual clock, wires everything together and
//!   replays logs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod actuation;
pub mod bus;
pub mod controller;
pub mod datastore;
pub mod edge;
pub mod gateway;
pub mod interval;
pub mod plant;
pub mod scenario;
pub mod stage;

pub use interval::Interval;
pub use stage::StageId;

//! Trace-driven simulator and optimizer for a rural fixed wireless access network
//! fed by a multi-radio point-to-point microwave backhaul.
//!
//! The library models three cooperating layers:
//!
//! * a per-radio power-state machine with startup and wake-up timers, driven by a
//!   threshold controller that sleeps and wakes radios against the aggregate demand
//!   ([`fsm`]),
//! * per-station downlink resource-block allocation with numerology selection, MCS
//!   adaptation, and per-RB power control ([`iab`]),
//! * an averaged-cost policy optimizer based on Lagrangian duality over the radio
//!   state space ([`optimizer`]).
//!
//! [`sim`] ties the layers together into a tick-driven harness with baseline policies
//! and reporting; [`trace`] ingests packet-count traces and turns them into demand
//! series; [`domain`] holds the shared vocabulary types and the scenario file format.

pub mod config;
pub mod domain;
pub mod fsm;
pub mod iab;
pub mod optimizer;
pub mod phy;
pub mod scalar;
pub mod sim;
pub mod trace;

/// Default concrete scalar for every stateful layer of the crate.
pub type Real = f64;

/// Single-precision alternative for the generic math in [`phy`].
pub type Real32 = f32;

pub use domain::{
    BandAvailability, BandKind, CarrierParams, McsEntry, McsTable, MetricsRecord,
    MicrowaveNode, NumerologyTable, PolicyThresholds, RadioState, RadioUnit, Scenario,
    Terminal, TerminalKind,
};
pub use sim::{Policy, RunReport, SimulationConfig};

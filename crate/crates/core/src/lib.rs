//! Deterministic discrete-event simulator for mobile ad hoc networks.
//!
//! A run couples a mobility model, a unit-disk radio with a DropTail queue
//! and retry-limited unicast, per-node energy meters and one of three routing
//! agents (AODV, DSDV, DSR) driven by CBR traffic. Runs are reproducible from
//! `(config, seed)`; [`sweep`] fans out many runs across threads.

pub mod config;
pub mod energy;
pub mod error;
pub mod link;
pub mod metrics;
pub mod mobility;
pub mod network;
pub mod report;
pub mod routing;
pub mod sim;
pub mod sweep;
pub mod traffic;

pub use config::{Protocol, ScenarioConfig};
pub use error::{Result, SimError};
pub use metrics::RunMetrics;
pub use network::{run_scenario, run_scenario_traced, RunOutput, Simulator};

//! Packet-level simulator for comparing RTP media congestion controllers
//! (a trendline-based delay controller and a self-clocked window
//! controller) on a single bottleneck, with optional TCP Reno cross
//! traffic.

pub mod error;
pub mod gcc;
pub mod harness;
pub mod netmodel;
pub mod reno;
pub mod scream;
pub mod simcore;
pub mod transport;

pub use error::{Result, SimError};
pub use harness::{run_scenario, ControllerKind, ScenarioSpec, SimConfig, SimResult};
pub use simcore::SimTime;

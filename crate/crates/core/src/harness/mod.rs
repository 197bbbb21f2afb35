//! Scenarios, the simulation loop, metrics and output files.

pub mod config;
pub mod metrics;
pub mod output;
pub mod scenario;
pub mod sim;

pub use config::SimConfig;
pub use metrics::{compute_utilization, jain_index, IntervalUtilization};
pub use output::{write_outputs, write_report, SummaryRow};
pub use scenario::{
    scenario_by_name, scenario_competence, scenario_fairness, scenario_loss,
    scenario_responsiveness, ControllerKind, FlowSpec, ScenarioSpec, LOSS_RATES, SCENARIO_NAMES,
};
pub use sim::{run_scenario, FlowSummary, InvariantReport, SimResult, TraceRecord};

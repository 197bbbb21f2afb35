//! Scenario configuration file: TOML with `link`, `gcc`, `scream`, `reno`
//! and `scenario` sections. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::gcc::GccConfig;
use crate::reno::RenoConfig;
use crate::scream::ScreamConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkSection {
    pub capacity_bps: u64,
    pub prop_delay_ms: u64,
    /// Queue size expressed as time at `capacity_bps`.
    pub buffer_ms: u64,
    /// Overrides the scenario's own loss rate when set.
    pub loss_rate: Option<f64>,
}

impl Default for LinkSection {
    fn default() -> Self {
        Self {
            capacity_bps: 2_000_000,
            prop_delay_ms: 100,
            buffer_ms: 300,
            loss_rate: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub frame_interval_ms: u64,
    pub mtu_bytes: u32,
    pub gcc_pacing_factor: f64,
    pub feedback_min_ms: u64,
    pub feedback_max_ms: u64,
    pub feedback_target_entries: f64,
    pub scream_feedback_ms: u64,
    pub trace_interval_ms: u64,
    pub rate_window_ms: u64,
    pub utilization_interval_s: u64,
    /// Capacity steps for the responsiveness run, one per period.
    pub staircase_kbps: Vec<u64>,
    pub staircase_period_s: u64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            frame_interval_ms: 20,
            mtu_bytes: 1200,
            gcc_pacing_factor: 1.2,
            feedback_min_ms: 50,
            feedback_max_ms: 250,
            feedback_target_entries: 20.0,
            scream_feedback_ms: 50,
            trace_interval_ms: 100,
            rate_window_ms: 1_000,
            utilization_interval_s: 20,
            staircase_kbps: vec![2_000, 1_000, 500, 1_000, 2_000],
            staircase_period_s: 20,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub link: LinkSection,
    pub gcc: GccConfig,
    pub scream: ScreamConfig,
    pub reno: RenoConfig,
    pub scenario: ScenarioSection,
}

impl SimConfig {
    pub fn from_toml_str(s: &str) -> std::result::Result<Self, String> {
        toml::from_str(s).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| SimError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|message| SimError::Parse {
            path: path.to_owned(),
            message,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

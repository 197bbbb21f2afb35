use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::SimConfig;
use crate::error::{Result, SimError};
use crate::netmodel::{BandwidthSchedule, LinkConfig};
use crate::simcore::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Gcc,
    Scream,
    Reno,
}

impl ControllerKind {
    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Gcc => "gcc",
            ControllerKind::Scream => "scream",
            ControllerKind::Reno => "reno",
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ControllerKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gcc" | "tfb-gcc" => Ok(ControllerKind::Gcc),
            "scream" => Ok(ControllerKind::Scream),
            "reno" | "tcp" => Ok(ControllerKind::Reno),
            other => Err(SimError::Config(format!("unknown controller `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    pub kind: ControllerKind,
    pub start: SimTime,
    pub stop: SimTime,
}

#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub name: String,
    pub link: LinkConfig,
    pub schedule: BandwidthSchedule,
    pub flows: Vec<FlowSpec>,
    pub duration: SimTime,
    pub seed: u64,
    pub intervals: Vec<(SimTime, SimTime)>,
    pub config: SimConfig,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        self.link.validate()?;
        if self.flows.is_empty() {
            return Err(SimError::Config("scenario has no flows".into()));
        }
        for f in &self.flows {
            if f.start >= f.stop || f.stop > self.duration {
                return Err(SimError::Config(format!(
                    "flow window {}..{} invalid for duration {}",
                    f.start, f.stop, self.duration
                )));
            }
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Index of the first flow of `kind`.
    pub fn flow_of(&self, kind: ControllerKind) -> Option<usize> {
        self.flows.iter().position(|f| f.kind == kind)
    }
}

/// Whole run plus consecutive fixed-length windows.
fn utilization_grid(duration: SimTime, step_s: u64) -> Vec<(SimTime, SimTime)> {
    let mut out = vec![(SimTime::ZERO, duration)];
    let step = SimTime::from_secs(step_s.max(1));
    let mut t = SimTime::ZERO;
    while t < duration {
        let end = (t + step).min(duration);
        out.push((t, end));
        t = end;
    }
    out
}

fn link_for(cfg: &SimConfig, default_loss: f64, max_capacity: u64) -> LinkConfig {
    // Buffer sized once at the nominal (maximum) rate and held fixed.
    let mut link = LinkConfig::with_buffer_time(
        max_capacity,
        SimTime::from_millis(cfg.link.prop_delay_ms),
        cfg.link.buffer_ms,
        cfg.link.loss_rate.unwrap_or(default_loss),
    );
    link.capacity_bps = max_capacity;
    link
}

fn single_link(name: &str, cfg: SimConfig, loss: f64, flows: Vec<FlowSpec>) -> ScenarioSpec {
    let duration = SimTime::from_secs(200);
    let schedule = BandwidthSchedule::constant(cfg.link.capacity_bps);
    ScenarioSpec {
        name: name.to_owned(),
        link: link_for(&cfg, loss, cfg.link.capacity_bps),
        schedule,
        flows,
        duration,
        seed: 1,
        intervals: utilization_grid(duration, cfg.scenario.utilization_interval_s),
        config: cfg,
    }
}

/// Single flow on a link whose capacity steps every period.
pub fn scenario_responsiveness(kind: ControllerKind, cfg: SimConfig) -> Result<ScenarioSpec> {
    let rates: Vec<u64> = cfg
        .scenario
        .staircase_kbps
        .iter()
        .map(|k| k * 1000)
        .collect();
    let schedule =
        BandwidthSchedule::staircase(SimTime::from_secs(cfg.scenario.staircase_period_s), &rates)?;
    let duration = SimTime::from_secs(cfg.scenario.staircase_period_s * rates.len() as u64);
    let mut link = link_for(&cfg, 0.0, schedule.max_capacity());
    link.capacity_bps = schedule.capacity_at(SimTime::ZERO);
    Ok(ScenarioSpec {
        name: "responsiveness".into(),
        link,
        intervals: utilization_grid(duration, cfg.scenario.staircase_period_s),
        schedule,
        flows: vec![FlowSpec {
            kind,
            start: SimTime::ZERO,
            stop: duration,
        }],
        duration,
        seed: 1,
        config: cfg,
    })
}

/// Three same-kind flows starting 40 s apart on a constant link.
pub fn scenario_fairness(kind: ControllerKind, cfg: SimConfig) -> ScenarioSpec {
    let flows = [0, 40, 80]
        .into_iter()
        .map(|s| FlowSpec {
            kind,
            start: SimTime::from_secs(s),
            stop: SimTime::from_secs(200),
        })
        .collect();
    single_link("fairness", cfg, 0.0, flows)
}

/// One media flow for the whole run, one Reno flow on [20 s, 100 s).
pub fn scenario_competence(kind: ControllerKind, cfg: SimConfig) -> ScenarioSpec {
    let flows = vec![
        FlowSpec {
            kind,
            start: SimTime::ZERO,
            stop: SimTime::from_secs(200),
        },
        FlowSpec {
            kind: ControllerKind::Reno,
            start: SimTime::from_secs(20),
            stop: SimTime::from_secs(100),
        },
    ];
    single_link("competence", cfg, 0.0, flows)
}

/// Single flow on a constant link with i.i.d. random loss.
pub fn scenario_loss(kind: ControllerKind, rate: f64, cfg: SimConfig) -> ScenarioSpec {
    let flows = vec![FlowSpec {
        kind,
        start: SimTime::ZERO,
        stop: SimTime::from_secs(200),
    }];
    let name = format!("loss-{}", (rate * 100.0).round() as u64);
    single_link(&name, cfg, rate, flows)
}

/// The loss grid of the packet-loss experiment.
pub const LOSS_RATES: [f64; 3] = [0.0, 0.01, 0.05];

pub const SCENARIO_NAMES: [&str; 6] = [
    "responsiveness",
    "fairness",
    "competence",
    "loss-0",
    "loss-1",
    "loss-5",
];

pub fn scenario_by_name(name: &str, kind: ControllerKind, cfg: SimConfig) -> Result<ScenarioSpec> {
    match name {
        "responsiveness" => scenario_responsiveness(kind, cfg),
        "fairness" => Ok(scenario_fairness(kind, cfg)),
        "competence" => Ok(scenario_competence(kind, cfg)),
        _ => {
            let pct = name
                .strip_prefix("loss-")
                .and_then(|p| p.parse::<f64>().ok())
                .ok_or_else(|| SimError::UnknownScenario(name.to_owned()))?;
            Ok(scenario_loss(kind, pct / 100.0, cfg))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn responsiveness_intervals() {
        let s = scenario_responsiveness(ControllerKind::Gcc, SimConfig::default()).unwrap();
        let secs: Vec<(u64, u64)> = s.intervals[1..]
            .iter()
            .map(|(a, b)| (a.as_micros() / 1_000_000, b.as_micros() / 1_000_000))
            .collect();
        assert_eq!(secs, vec![(0, 20), (20, 40), (40, 60), (60, 80), (80, 100)]);
        assert_eq!(s.duration, SimTime::from_secs(100));
        assert_eq!(s.link.queue_capacity_bytes, 75_000);
        assert_eq!(s.flows.len(), 1);
        s.validate().unwrap();
    }

    #[test]
    fn fairness_has_three_same_kind_flows() {
        let s = scenario_fairness(ControllerKind::Scream, SimConfig::default());
        assert_eq!(s.flows.len(), 3);
        assert!(s.flows.iter().all(|f| f.kind == ControllerKind::Scream));
        let starts: Vec<u64> = s
            .flows
            .iter()
            .map(|f| f.start.as_micros() / 1_000_000)
            .collect();
        assert_eq!(starts, vec![0, 40, 80]);
        assert_eq!(s.schedule.capacity_at(SimTime::from_secs(150)), 2_000_000);
    }

    #[test]
    fn competence_timeline() {
        let s = scenario_competence(ControllerKind::Gcc, SimConfig::default());
        let reno = &s.flows[s.flow_of(ControllerKind::Reno).unwrap()];
        assert_eq!(reno.start, SimTime::from_secs(20));
        assert_eq!(reno.stop, SimTime::from_secs(100));
    }

    #[test]
    fn loss_grid_names() {
        for (name, rate) in ["loss-0", "loss-1", "loss-5"].iter().zip(LOSS_RATES) {
            let s = scenario_by_name(name, ControllerKind::Gcc, SimConfig::default()).unwrap();
            assert!((s.link.loss_rate - rate).abs() < 1e-12);
            assert_eq!(&s.name, name);
        }
        assert!(scenario_by_name("bogus", ControllerKind::Gcc, SimConfig::default()).is_err());
    }

    #[test]
    fn flow_window_validation() {
        let mut s = scenario_fairness(ControllerKind::Gcc, SimConfig::default());
        s.flows[0].stop = SimTime::from_secs(300);
        assert!(s.validate().is_err());
    }
}

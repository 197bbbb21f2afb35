//! Python bindings: run scenarios and poke at the controller state machines.

use std::collections::VecDeque;
use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use rmcat_core::gcc::{
    self, AimdState, BandwidthUsage, DetectorState, GccConfig, PacketGroup, TrendlineState,
};
use rmcat_core::harness::{self, output, ControllerKind, SimConfig};
use rmcat_core::scream::{self, CwndState, ScreamConfig};
use rmcat_core::{SimError, SimTime};

fn err(e: SimError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn secs(v: f64) -> SimTime {
    SimTime::from_secs_f64(v)
}

fn ms(v: f64) -> SimTime {
    SimTime::from_secs_f64(v / 1e3)
}

fn usage_name(u: BandwidthUsage) -> &'static str {
    match u {
        BandwidthUsage::Underuse => "underuse",
        BandwidthUsage::Normal => "normal",
        BandwidthUsage::Overuse => "overuse",
    }
}

fn parse_usage(s: &str) -> PyResult<BandwidthUsage> {
    match s {
        "underuse" => Ok(BandwidthUsage::Underuse),
        "normal" => Ok(BandwidthUsage::Normal),
        "overuse" => Ok(BandwidthUsage::Overuse),
        other => Err(PyValueError::new_err(format!("unknown signal `{other}`"))),
    }
}

fn parse_config(config: Option<&str>) -> PyResult<SimConfig> {
    match config {
        None => Ok(SimConfig::default()),
        Some(text) => SimConfig::from_toml_str(text).map_err(PyValueError::new_err),
    }
}

/// Result of one scenario run.
#[pyclass(name = "SimResult", frozen)]
struct PySimResult {
    inner: harness::SimResult,
}

#[pymethods]
impl PySimResult {
    #[getter]
    fn scenario(&self) -> &str {
        &self.inner.scenario
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn flow_count(&self) -> usize {
        self.inner.flows.len()
    }

    /// Delivered / capacity over `[start_s, end_s]` for the given flows
    /// (all flows by default).
    #[pyo3(signature = (start_s, end_s, flows=None))]
    fn utilization(&self, start_s: f64, end_s: f64, flows: Option<Vec<usize>>) -> PyResult<f64> {
        let flows = flows.unwrap_or_else(|| self.inner.all_flows());
        if let Some(f) = flows.iter().find(|f| **f >= self.inner.flows.len()) {
            return Err(PyValueError::new_err(format!("no flow {f}")));
        }
        Ok(self.inner.utilization(&flows, secs(start_s), secs(end_s)))
    }

    fn delivered_rate_bps(&self, flow: usize, start_s: f64, end_s: f64) -> PyResult<f64> {
        self.check_flow(flow)?;
        Ok(self
            .inner
            .delivered_rate_bps(flow, secs(start_s), secs(end_s)))
    }

    fn mean_owd_ms(&self, flow: usize) -> PyResult<Option<f64>> {
        self.check_flow(flow)?;
        Ok(self.inner.flows[flow].mean_owd_ms)
    }

    fn flows<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyList>> {
        let list = PyList::empty(py);
        for f in &self.inner.flows {
            let d = PyDict::new(py);
            d.set_item("flow_id", f.flow_id)?;
            d.set_item("controller", f.controller.name())?;
            d.set_item("start_s", f.start_s)?;
            d.set_item("stop_s", f.stop_s)?;
            d.set_item("sent_bytes", f.counters.sent_bytes)?;
            d.set_item("delivered_bytes", f.counters.delivered_bytes)?;
            d.set_item("link_drops", f.counters.link_drops)?;
            d.set_item("mean_owd_ms", f.mean_owd_ms)?;
            d.set_item("max_owd_ms", f.max_owd_ms)?;
            list.append(d)?;
        }
        Ok(list)
    }

    /// Column-oriented trace of one flow, keyed like the CSV header.
    fn trace<'py>(&self, py: Python<'py>, flow_id: u32) -> PyResult<Bound<'py, PyDict>> {
        let rows: Vec<_> = self.inner.flow_trace(flow_id).collect();
        if rows.is_empty() {
            return Err(PyValueError::new_err(format!(
                "no trace for flow {flow_id}"
            )));
        }
        let d = PyDict::new(py);
        d.set_item("t_ms", rows.iter().map(|r| r.t_ms).collect::<Vec<_>>())?;
        d.set_item(
            "target_kbps",
            rows.iter().map(|r| r.target_kbps).collect::<Vec<_>>(),
        )?;
        d.set_item(
            "send_kbps",
            rows.iter().map(|r| r.send_kbps).collect::<Vec<_>>(),
        )?;
        d.set_item(
            "recv_kbps",
            rows.iter().map(|r| r.recv_kbps).collect::<Vec<_>>(),
        )?;
        d.set_item("owd_ms", rows.iter().map(|r| r.owd_ms).collect::<Vec<_>>())?;
        d.set_item(
            "cwnd_bytes",
            rows.iter().map(|r| r.cwnd_bytes).collect::<Vec<_>>(),
        )?;
        d.set_item(
            "queue_backlog_bytes",
            rows.iter()
                .map(|r| r.queue_backlog_bytes)
                .collect::<Vec<_>>(),
        )?;
        d.set_item(
            "drops_cum",
            rows.iter().map(|r| r.drops_cum).collect::<Vec<_>>(),
        )?;
        Ok(d)
    }

    /// Rows of `summary.csv`.
    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyList>> {
        let list = PyList::empty(py);
        for r in output::summary_rows(&self.inner) {
            let d = PyDict::new(py);
            d.set_item("flow", r.flow)?;
            d.set_item("controller", r.controller)?;
            d.set_item("start_s", r.start_s)?;
            d.set_item("end_s", r.end_s)?;
            d.set_item("delivered_bytes", r.delivered_bytes)?;
            d.set_item("utilization", r.utilization)?;
            d.set_item("mean_owd_ms", r.mean_owd_ms)?;
            list.append(d)?;
        }
        Ok(list)
    }

    fn invariants<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let inv = &self.inner.invariants;
        let d = PyDict::new(py);
        d.set_item("conservation_ok", inv.conservation_ok)?;
        d.set_item("fifo_order_ok", inv.fifo_order_ok)?;
        d.set_item("max_backlog_bytes", inv.max_backlog_bytes)?;
        d.set_item("queue_capacity_bytes", inv.queue_capacity_bytes)?;
        d.set_item("min_owd_ms", inv.min_owd_ms)?;
        d.set_item("window_violated", inv.window_violated)?;
        d.set_item("all_ok", inv.all_ok())?;
        Ok(d)
    }

    /// Writes the CSV artifacts and returns their paths.
    fn write_outputs(&self, dir: PathBuf) -> PyResult<Vec<PathBuf>> {
        harness::write_outputs(&self.inner, &dir).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "SimResult(scenario={:?}, seed={}, flows={})",
            self.inner.scenario,
            self.inner.seed,
            self.inner.flows.len()
        )
    }
}

impl PySimResult {
    fn check_flow(&self, flow: usize) -> PyResult<()> {
        if flow < self.inner.flows.len() {
            Ok(())
        } else {
            Err(PyValueError::new_err(format!("no flow {flow}")))
        }
    }
}

/// Runs a named scenario (`responsiveness`, `fairness`, `competence`,
/// `loss-<pct>`). `config` is optional TOML text.
#[pyfunction]
#[pyo3(signature = (scenario, controller="gcc", seed=1, config=None))]
fn run_scenario(
    py: Python<'_>,
    scenario: &str,
    controller: &str,
    seed: u64,
    config: Option<&str>,
) -> PyResult<PySimResult> {
    let kind: ControllerKind = controller.parse().map_err(err)?;
    let cfg = parse_config(config)?;
    let spec = harness::scenario_by_name(scenario, kind, cfg)
        .map_err(err)?
        .with_seed(seed);
    let inner = py.detach(|| harness::run_scenario(&spec)).map_err(err)?;
    Ok(PySimResult { inner })
}

#[pyfunction]
fn default_config() -> String {
    SimConfig::default().to_toml_string()
}

#[pyfunction]
fn jain_index(rates: Vec<f64>) -> PyResult<f64> {
    harness::jain_index(&rates).map_err(err)
}

#[pyfunction]
fn least_squares_slope(points: Vec<(f64, f64)>) -> Option<f64> {
    gcc::least_squares_slope(&points.into_iter().collect::<VecDeque<_>>())
}

/// Media rate law of the window controller; returns the next target in bps.
#[pyfunction]
fn update_media_rate(
    current_bps: f64,
    rtp_queue_delay_ms: f64,
    cwnd_limited: bool,
    transmit_bps: u64,
    ack_bps: u64,
) -> f64 {
    scream::update_media_rate(
        current_bps,
        ms(rtp_queue_delay_ms),
        cwnd_limited,
        transmit_bps,
        ack_bps,
        &ScreamConfig::default(),
    )
}

/// Delay smoothing and trendline fit.
#[pyclass]
struct Trendline {
    inner: TrendlineState,
}

#[pymethods]
impl Trendline {
    #[new]
    #[pyo3(signature = (smoothing_coef=0.9, window=20, min_points=2))]
    fn new(smoothing_coef: f64, window: usize, min_points: usize) -> PyResult<Self> {
        if window < 2 || min_points < 2 || min_points > window {
            return Err(PyValueError::new_err("need 2 <= min_points <= window"));
        }
        Ok(Self {
            inner: TrendlineState::new(smoothing_coef, window, min_points),
        })
    }

    /// Feeds one delay variation for a group; returns the slope once enough
    /// points are in the window.
    fn update(&mut self, delay_ms: f64, timestamp_ms: f64, complete_ms: f64) -> Option<f64> {
        let g = PacketGroup {
            timestamp: ms(timestamp_ms),
            complete_time: ms(complete_ms),
            size_bytes: 0,
            packets: 1,
        };
        self.inner.update(delay_ms, &g)
    }

    #[getter]
    fn smoothed_delay(&self) -> f64 {
        self.inner.smoothed_delay
    }

    #[getter]
    fn acc_delay(&self) -> f64 {
        self.inner.acc_delay
    }

    #[getter]
    fn samples(&self) -> usize {
        self.inner.samples()
    }
}

/// Adaptive-threshold overuse detector.
#[pyclass]
struct Detector {
    inner: DetectorState,
}

#[pymethods]
impl Detector {
    #[new]
    fn new() -> Self {
        Self {
            inner: DetectorState::new(&GccConfig::default()),
        }
    }

    fn detect(&mut self, slope: f64, samples: usize, dt_ms: f64) -> &'static str {
        usage_name(self.inner.detect(slope, samples, ms(dt_ms)))
    }

    #[getter]
    fn threshold(&self) -> f64 {
        self.inner.threshold_gamma
    }

    #[getter]
    fn state(&self) -> &'static str {
        usage_name(self.inner.state)
    }
}

/// AIMD rate controller.
#[pyclass]
struct Aimd {
    inner: AimdState,
}

#[pymethods]
impl Aimd {
    #[new]
    fn new() -> Self {
        Self {
            inner: AimdState::new(&GccConfig::default()),
        }
    }

    /// Applies one detector signal; returns the action taken.
    fn update(
        &mut self,
        signal: &str,
        recv_bps: u64,
        now_ms: f64,
        rtt_ms: f64,
    ) -> PyResult<String> {
        let action = self
            .inner
            .aimd_update(parse_usage(signal)?, recv_bps, ms(now_ms), ms(rtt_ms));
        Ok(format!("{action:?}").to_lowercase())
    }

    #[getter]
    fn rate_bps(&self) -> f64 {
        self.inner.rate_exact()
    }

    fn set_rate(&mut self, bps: f64) {
        self.inner.set_rate(bps);
    }
}

/// Delay-targeting congestion window.
#[pyclass]
struct Cwnd {
    inner: CwndState,
}

#[pymethods]
impl Cwnd {
    #[new]
    #[pyo3(signature = (cwnd_bytes=None))]
    fn new(cwnd_bytes: Option<f64>) -> Self {
        let mut inner = CwndState::new(&ScreamConfig::default());
        if let Some(c) = cwnd_bytes {
            inner.set_cwnd(c);
        }
        Self { inner }
    }

    fn on_sent(&mut self, size: u32, now_ms: f64) {
        self.inner.on_sent(size, ms(now_ms));
    }

    fn apply_window_update(&mut self, owd_ms: f64, acked_bytes: u64, now_ms: f64) {
        self.inner
            .apply_window_update(ms(owd_ms), acked_bytes, ms(now_ms));
    }

    fn on_loss(&mut self, now_ms: f64, rtt_ms: f64) -> bool {
        self.inner.on_loss(ms(now_ms), ms(rtt_ms))
    }

    #[getter]
    fn cwnd(&self) -> f64 {
        self.inner.cwnd_exact()
    }

    #[getter]
    fn queue_delay_ms(&self) -> f64 {
        self.inner.queue_delay.as_millis_f64()
    }
}

#[pymodule]
fn rmcat(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(jain_index, m)?)?;
    m.add_function(wrap_pyfunction!(least_squares_slope, m)?)?;
    m.add_function(wrap_pyfunction!(update_media_rate, m)?)?;
    m.add_class::<PySimResult>()?;
    m.add_class::<Trendline>()?;
    m.add_class::<Detector>()?;
    m.add_class::<Aimd>()?;
    m.add_class::<Cwnd>()?;
    m.add("SCENARIOS", harness::SCENARIO_NAMES.to_vec())?;
    Ok(())
}

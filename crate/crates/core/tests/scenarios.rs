use rmcat_core::harness::{
    run_scenario, scenario_by_name, scenario_competence, scenario_loss, write_outputs,
    ControllerKind, SimConfig,
};
use rmcat_core::SimTime;

fn s(v: u64) -> SimTime {
    SimTime::from_secs(v)
}

#[test]
fn replay_is_identical() {
    let spec = scenario_loss(ControllerKind::Gcc, 0.05, SimConfig::default()).with_seed(42);
    let a = run_scenario(&spec).unwrap();
    let b = run_scenario(&spec).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.snapshots, b.snapshots);
    assert_eq!(a.events_dispatched, b.events_dispatched);
}

#[test]
fn seed_changes_loss_draws_only() {
    let cfg = SimConfig::default;
    let a = run_scenario(&scenario_loss(ControllerKind::Scream, 0.01, cfg()).with_seed(1)).unwrap();
    let b = run_scenario(&scenario_loss(ControllerKind::Scream, 0.01, cfg()).with_seed(2)).unwrap();
    assert_ne!(a.link.dropped_random, b.link.dropped_random);
    // Without loss there is nothing random left.
    let c = run_scenario(&scenario_loss(ControllerKind::Scream, 0.0, cfg()).with_seed(1)).unwrap();
    let d = run_scenario(&scenario_loss(ControllerKind::Scream, 0.0, cfg()).with_seed(2)).unwrap();
    assert_eq!(c.trace, d.trace);
}

#[test]
fn reno_alone_saturates_and_overflows() {
    let r = run_scenario(&scenario_loss(
        ControllerKind::Reno,
        0.0,
        SimConfig::default(),
    ))
    .unwrap();
    assert!(r.utilization(&[0], s(20), s(200)) > 0.9);
    assert!(r.link.dropped_overflow > 0);
    // Drops happen only once the buffer is (within one segment of) full.
    assert!(r.invariants.max_backlog_bytes > 75_000 - 1_200);
    assert!(r.invariants.all_ok());
}

#[test]
fn scream_owd_stays_near_target() {
    let r = run_scenario(&scenario_loss(
        ControllerKind::Scream,
        0.0,
        SimConfig::default(),
    ))
    .unwrap();
    let mean = r.flows[0].mean_owd_ms.unwrap();
    // Propagation + queue delay target + 50 ms.
    assert!(mean <= 100.0 + 100.0 + 50.0, "mean owd {mean}");
    assert!(!r.invariants.window_violated);
}

#[test]
fn utilization_matches_hand_sum() {
    let r = run_scenario(&scenario_competence(
        ControllerKind::Gcc,
        SimConfig::default(),
    ))
    .unwrap();
    let total: u64 = r.flows.iter().map(|f| f.counters.delivered_bytes).sum();
    let whole = r.utilization(&r.all_flows(), s(0), s(200));
    assert!((whole - total as f64 * 8.0 / (2e6 * 200.0)).abs() < 1e-12);

    // Interval rows sum to the whole run.
    let rows = r.interval_utilization();
    let parts: u64 = rows[1..]
        .iter()
        .filter(|u| u.flow_id.is_none())
        .map(|u| u.delivered_bytes)
        .sum();
    assert_eq!(parts, total);
}

#[test]
fn trace_rows_cover_flow_lifetimes() {
    let r = run_scenario(&scenario_competence(
        ControllerKind::Scream,
        SimConfig::default(),
    ))
    .unwrap();
    let reno: Vec<u64> = r.flow_trace(1).map(|t| t.t_ms).collect();
    assert_eq!(*reno.first().unwrap(), 20_000);
    assert_eq!(*reno.last().unwrap(), 100_000);
    assert_eq!(reno.len(), 801);
    assert!(r
        .flow_trace(1)
        .all(|t| t.target_kbps.is_none() && t.owd_ms.is_none()));
    assert_eq!(r.flow_trace(0).count(), 2001);
}

#[test]
fn outputs_written() {
    let dir = tempfile::tempdir().unwrap();
    let spec = scenario_by_name("fairness", ControllerKind::Gcc, SimConfig::default()).unwrap();
    let r = run_scenario(&spec).unwrap();
    let files = write_outputs(&r, dir.path()).unwrap();
    let names: Vec<String> = files
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(
        names,
        [
            "flow_0.csv",
            "flow_1.csv",
            "flow_2.csv",
            "summary.csv",
            "config.toml"
        ]
    );
    let head = std::fs::read_to_string(dir.path().join("flow_0.csv")).unwrap();
    assert!(head.starts_with(
        "t_ms,flow_id,controller,target_kbps,send_kbps,recv_kbps,owd_ms,cwnd_bytes,queue_backlog_bytes,drops_cum\n"
    ));
    let written = SimConfig::load(&dir.path().join("config.toml")).unwrap();
    assert_eq!(written, SimConfig::default());
}

#[test]
fn config_override_changes_run() {
    let cfg = SimConfig::from_toml_str("[link]\nbuffer_ms = 100\n").unwrap();
    let spec = scenario_loss(ControllerKind::Reno, 0.0, cfg);
    assert_eq!(spec.link.queue_capacity_bytes, 25_000);
    let r = run_scenario(&spec).unwrap();
    assert!(r.invariants.max_backlog_bytes <= 25_000);
}

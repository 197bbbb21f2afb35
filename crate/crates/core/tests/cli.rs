use std::process::Command;

fn rmcat() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rmcat"))
}

#[test]
fn run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("loss1");
    let st = rmcat()
        .args([
            "run",
            "--scenario",
            "loss-1",
            "--controller",
            "scream",
            "--seed",
            "3",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(st.success());
    assert!(out.join("flow_0.csv").is_file());

    let rep = rmcat()
        .args(["report", "--in"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(rep.status.success());
    let table = String::from_utf8(rep.stdout).unwrap();
    assert!(table.contains("loss-1"));
    assert!(dir.path().join("utilization.csv").is_file());
}

#[test]
fn config_file_is_applied_and_validated() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    std::fs::write(&good, "[scream]\nqueue_delay_target_ms = 50\n").unwrap();
    let st = rmcat()
        .args([
            "run",
            "--scenario",
            "responsiveness",
            "--controller",
            "scream",
            "--config",
        ])
        .arg(&good)
        .arg("--out")
        .arg(dir.path().join("r"))
        .status()
        .unwrap();
    assert!(st.success());
    let used = std::fs::read_to_string(dir.path().join("r/config.toml")).unwrap();
    assert!(used.contains("queue_delay_target_ms = 50"));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[scream]\nqueue_delay_targt_ms = 50\n").unwrap();
    let out = rmcat()
        .args(["run", "--scenario", "loss-0", "--config"])
        .arg(&bad)
        .arg("--out")
        .arg(dir.path().join("b"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("queue_delay_targt_ms"));
}

#[test]
fn unknown_scenario_and_controller_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        ["--scenario", "nope", "--controller", "gcc"],
        ["--scenario", "loss-0", "--controller", "nada"],
        ["--scenario", "loss-0", "--controller", "reno"],
    ] {
        let st = rmcat()
            .arg("run")
            .args(args)
            .arg("--out")
            .arg(dir.path())
            .output()
            .unwrap();
        assert!(!st.status.success(), "{args:?}");
    }
}

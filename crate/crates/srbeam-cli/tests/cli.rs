use std::process::Command;

fn srbeam() -> Command {
    Command::new(env!("CARGO_BIN_EXE_srbeam"))
}

#[test]
fn complexity_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let st = srbeam().args(["complexity", "--svg", "--out"]).arg(dir.path()).output().unwrap().status;
    assert_eq!(st.code(), Some(0));
    assert!(dir.path().join("complexity.csv").exists());
    assert!(dir.path().join("complexity.svg").exists());
}

#[test]
fn unknown_experiment_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let st = srbeam().args(["fig99", "--out"]).arg(dir.path()).output().unwrap().status;
    assert_eq!(st.code(), Some(1));
}

#[test]
fn unknown_config_key_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[scene]\nantenas = 4\n").unwrap();
    let st = srbeam().args(["rate_sweep", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).output().unwrap().status;
    assert_eq!(st.code(), Some(1));
}

#[test]
fn config_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "trials = 5\n[sweep]\nc_values = [0.0]\nmethods = [\"CQR\"]\n").unwrap();
    let st = srbeam()
        .args(["rate_sweep", "--config"])
        .arg(&cfg)
        .args(["--trials", "2", "--seed", "9", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("rate_sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn unconverged_runs_exit_two_with_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[sweep]\nc_values = [0.1]\nmethods = [\"CQR\"]\n[algorithm]\ncounter_max = 1\n").unwrap();
    let st = srbeam()
        .args(["rate_sweep", "--trials", "1", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(2));
    let text = std::fs::read_to_string(dir.path().join("rate_sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
}

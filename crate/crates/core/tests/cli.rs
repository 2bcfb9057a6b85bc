use std::process::{Command, Output};

fn dse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dse")).args(args).output().expect("spawn dse")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_preset_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("wecc");
    let o = dse(&["run", "wecc9-fault8", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("ekf") && text.contains("ukf"), "{text}");
    assert!(text.contains("wall time"));
    for f in ["trajectory.csv", "measurements.csv", "estimate_ekf.csv", "estimate_ukf.csv", "report.txt"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(text.starts_with(&report));
}

#[test]
fn seed_flag_changes_measurements() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(dse(&["run", "wecc9-fault8", "--seed", "1", "--out", a.to_str().unwrap()]).status.success());
    assert!(dse(&["run", "wecc9-fault8", "--seed", "2", "--out", b.to_str().unwrap()]).status.success());
    let read = |d: &std::path::Path| std::fs::read(d.join("measurements.csv")).unwrap();
    assert_ne!(read(&a), read(&b));
}

#[test]
fn powerflow_prints_bus_table() {
    let o = dse(&["powerflow", "wecc9"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("bus,kind,v_mag,v_ang_deg,p_inj,q_inj"));
    assert_eq!(lines.clone().take_while(|l| !l.starts_with("converged")).count(), 9);
    assert!(text.contains("converged in"));
}

#[test]
fn powerflow_reports_non_convergence() {
    let o = dse(&["powerflow", "ne39", "--max-iter", "1"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("[powerflow]"), "{}", stderr(&o));
}

#[test]
fn simulate_writes_trajectory_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traj.csv");
    let o = dse(&[
        "simulate",
        "wecc9",
        "--fault-bus",
        "8",
        "--clear-line",
        "8-9",
        "--t-end",
        "2",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,delta_1,delta_2,delta_3,omega_1,omega_2,omega_3,regime"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 201);
    assert!(rows[0].ends_with(",pre") && rows[101].ends_with(",fault") && rows[200].ends_with(",post"));
}

#[test]
fn reduce_writes_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let o = dse(&["reduce", "wecc9", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let y = std::fs::read_to_string(dir.path().join("y_red.csv")).unwrap();
    assert_eq!(y.lines().count(), 3);
    assert!(y.lines().all(|l| l.split(',').count() == 3));
    let r = std::fs::read_to_string(dir.path().join("r_v.csv")).unwrap();
    assert_eq!(r.lines().count(), 9);
}

#[test]
fn bad_inputs_fail_with_stage_message() {
    let o = dse(&["powerflow", "nowhere.toml"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("error: [case]"), "{}", stderr(&o));

    let o = dse(&["simulate", "wecc9", "--fault-bus", "99", "--clear-line", "8-9"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("[reduction]"), "{}", stderr(&o));

    let o = dse(&["run", "missing-config.toml"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("[config]"), "{}", stderr(&o));

    let o = dse(&["simulate", "wecc9", "--fault-bus", "8", "--clear-line", "eight"]);
    assert!(!o.status.success());
}

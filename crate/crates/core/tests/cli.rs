mod common;

use std::fs;
use std::process::Command;

use mams_sim::builders::commute;
use mams_sim::orchestrator::{run, Mode, RunConfig, RunOutcome, SUMMARY_FILE, TRAJECTORY_FILE, TRIPS_FILE};
use mams_sim::scenario::save_scenario;
use mams_sim::trip::TRIPS_CSV_HEADER;

fn sim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sim"))
}

#[test]
fn validate_and_route() {
    let out = sim().arg("validate").arg(common::grid_path()).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok: 9 junctions (2 lit), 24 streets"));

    let out = sim().args(["route"]).arg(common::grid_path()).args(["j00", "j22"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().next().unwrap().starts_with("j00-"));

    let out = sim().args(["route"]).arg(common::grid_path()).args(["j00", "nowhere"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn validate_rejects_broken_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"junctions": []}"#).unwrap();
    let out = sim().arg("validate").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("commute.json");
    save_scenario(&commute(100.0, 10.0, 0, 40, 1000), &path).unwrap();

    let out_dir = dir.path().join("ok");
    let status = sim().arg("run").arg(&path).arg("--out").arg(&out_dir).output().unwrap().status;
    assert_eq!(status.code(), Some(0));
    let trips = fs::read_to_string(out_dir.join(TRIPS_FILE)).unwrap();
    assert_eq!(trips.lines().next(), Some(TRIPS_CSV_HEADER));
    assert_eq!(trips.lines().count(), 3);
    assert!(out_dir.join(TRAJECTORY_FILE).exists());
    assert!(fs::read_to_string(out_dir.join(SUMMARY_FILE)).unwrap().contains("agentsCompleted=1"));

    let status = sim()
        .arg("run")
        .arg(&path)
        .args(["--max-ticks", "5", "--out"])
        .arg(dir.path().join("short"))
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(2));
}

#[test]
fn multiprocess_matches_in_process() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = commute(150.0, 14.0, 3, 60, 1000);
    let mut config = RunConfig::new(Mode::Inprocess, dir.path().join("a"));
    let a = run(&scenario, &config).unwrap();
    config.mode = Mode::Multiprocess;
    config.out_dir = dir.path().join("b");
    config.sim_binary = Some(env!("CARGO_BIN_EXE_sim").into());
    let b = run(&scenario, &config).unwrap();
    assert_eq!(a.outcome, RunOutcome::Completed);
    assert_eq!(b.outcome, RunOutcome::Completed, "{b:?}");
    for file in [TRIPS_FILE, TRAJECTORY_FILE] {
        assert_eq!(
            fs::read(dir.path().join("a").join(file)).unwrap(),
            fs::read(dir.path().join("b").join(file)).unwrap(),
            "{file}"
        );
    }
}

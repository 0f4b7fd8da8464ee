use std::path::Path;
use std::process::{Command, Output};

use proptest::prelude::*;

use attractorscope::{StateSample, Trajectory, TrajectorySet};
use attractorscope_cli::io::{format_trajectories, parse_trajectories};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_attractorscope"))
        .args(args)
        .env("ATTRACTORSCOPE_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn metrics(dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("metrics.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn trajectory_set() -> impl Strategy<Value = TrajectorySet> {
    (1usize..=3, 1usize..=4).prop_flat_map(|(d, n_traj)| {
        let sample = (
            prop::collection::vec(-1e3f64..1e3, d),
            prop::collection::vec(-1e3f64..1e3, d),
        );
        prop::collection::vec(prop::collection::vec(sample, 2..8), n_traj).prop_map(|trajs| {
            let trajectories = trajs
                .into_iter()
                .map(|samples| {
                    let samples = samples
                        .into_iter()
                        .map(|(x, v)| StateSample::new(x, v).unwrap())
                        .collect();
                    Trajectory::new(samples, 0.05).unwrap()
                })
                .collect();
            TrajectorySet::new(trajectories, 20.0).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn csv_round_trip(data in trajectory_set()) {
        let text = format_trajectories(&data);
        let back = parse_trajectories(&text, 20.0).unwrap();
        prop_assert_eq!(back, data);
    }
}

#[test]
fn malformed_csv_names_line() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    std::fs::write(&input, "traj_id,x0,x1,v0,v1\n0,0,0,1,0\n0,1,0,1,0\n0,2,oops,1,0\n").unwrap();
    let out = dir.path().join("out");
    let res = run(&["--input", input.to_str().unwrap(), "--freq", "10", "--out", out.to_str().unwrap()]);
    assert!(!res.status.success());
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("line 4"), "{stderr}");
    let m = metrics(&out);
    assert_eq!(m["partial"], true);
    assert_eq!(m["error"]["module"], "cli");
}

#[test]
fn invalid_flag_value_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let res = run(&["--benchmark", "heart", "--epsilon", "abc", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn unknown_benchmark_fails() {
    let dir = tempfile::tempdir().unwrap();
    let res = run(&["--benchmark", "lorenz", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    assert_eq!(metrics(dir.path())["partial"], true);
}

#[test]
fn stationary_data_writes_partial_results() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("still.csv");
    std::fs::write(&input, "traj_id,x0,v0\n0,1,0\n0,1,0\n0,1,0\n1,2,0\n1,2,0\n").unwrap();
    let out = dir.path().join("out");
    let res = run(&["--input", input.to_str().unwrap(), "--freq", "10", "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    let m = metrics(&out);
    assert_eq!(m["partial"], true);
    assert_eq!(m["total_samples"], 5);
    assert_ne!(m["error"]["module"], "cli");
    let manifest = std::fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"partial\": true"));
}

#[test]
fn benchmark_run_exports_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let res = run(&["--benchmark", "pendulum", "--seed", "3", "--out", dir.path().to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for name in ["spectrum.csv", "labels.csv", "attractors.json", "metrics.json", "manifest.json"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let m = metrics(dir.path());
    assert_eq!(m["partial"], false);
    assert_eq!(m["q"], 2);
    let labels = std::fs::read_to_string(dir.path().join("labels.csv")).unwrap();
    assert_eq!(labels.lines().count(), 1 + m["total_samples"].as_u64().unwrap() as usize);
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# pendulum with a coarser stride\nbenchmark = pendulum\nstride = 6\n").unwrap();
    let out = dir.path().join("out");
    let res = run(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(metrics(&out)["total_samples"], 606);
}

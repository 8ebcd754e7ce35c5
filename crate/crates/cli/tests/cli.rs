use std::path::Path;
use std::process::{Command, Output};

fn tunnelmpc(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tunnelmpc"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("TUNNELMPC_OUT")
        .output()
        .expect("binary runs")
}

#[test]
fn run_writes_records_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let o = tunnelmpc(dir.path(), &["run", "--set", "total_time=2", "--seed", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("records.csv")).unwrap();
    assert!(csv.starts_with("time,px,py,pz,vx,vy,vz,roll,pitch,yaw,ux,uy,uz,uyaw,refx,refy,refz,h_min,"));
    assert_eq!(csv.lines().count(), 21);
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
    for key in ["T_e", "c_e", "c_s", "min_wall_distance", "boundary_violations", "config_hash", "seed"] {
        assert!(m.get(key).is_some(), "{key}");
    }
    assert_eq!(m["seed"], 5);
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["run", "--set", "total_time=2", "--set", "case=close_proximity"];
    tunnelmpc(a.path(), &args);
    tunnelmpc(b.path(), &args);
    for f in ["records.csv", "metrics.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn config_file_and_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"uav": {"mass": -1.0}}"#).unwrap();
    let o = tunnelmpc(dir.path(), &["run", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("uav.mass"));
    assert!(!dir.path().join("records.csv").exists());

    let o = tunnelmpc(dir.path(), &["run", "--set", "mpc.horizn=3"]);
    assert_eq!(o.status.code(), Some(1));
    let o = tunnelmpc(dir.path(), &["run", "--config", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let o = tunnelmpc(dir.path(), &["bench", "--case-set", "sideways:seed=1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn collision_exits_three_and_still_logs() {
    let dir = tempfile::tempdir().unwrap();
    let o = tunnelmpc(dir.path(), &["run", "--set", "case=close_proximity", "--set", "controller=naive"]);
    assert_eq!(o.status.code(), Some(3));
    let csv = std::fs::read_to_string(dir.path().join("records.csv")).unwrap();
    assert!(csv.trim_end().ends_with("collision"));
    assert!(dir.path().join("metrics.json").exists());
}

#[test]
fn field_grid_has_documented_header() {
    let dir = tempfile::tempdir().unwrap();
    let o = tunnelmpc(dir.path(), &["field", "--step", "0.1"]);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(dir.path().join("field.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("y,z,fx,fy,fz"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 19 * 19);
    assert!(rows.iter().all(|r| r.len() == 5 && r.iter().all(|x| x.is_finite())));
}

#[test]
fn calibrate_without_disturbance_needs_no_margin() {
    let dir = tempfile::tempdir().unwrap();
    let o = tunnelmpc(dir.path(), &["calibrate-lambda", "--set", "wind.d_m=0", "--episodes", "200"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("lambda* = 0"));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("lambda.json")).unwrap()).unwrap();
    assert_eq!(v["lambda"], 0.0);
    assert!(!v["trace"].as_array().unwrap().is_empty());
}

#[test]
fn bench_with_three_seeds_has_27_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let o = tunnelmpc(
        dir.path(),
        &["bench", "--seeds", "3", "--jobs", "2", "--set", "total_time=5", "--case-set", "close_proximity:cbf.lambda=2"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("bench.json")).unwrap()).unwrap();
    assert_eq!(v["runs"].as_array().unwrap().len(), 27);
    let text = std::fs::read_to_string(dir.path().join("bench.txt")).unwrap();
    assert!(text.starts_with("case") && text.contains("bound_region") && text.contains("close_proximity"));
}

#[test]
fn out_dir_falls_back_to_env() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_tunnelmpc"))
        .args(["field", "--step", "0.5"])
        .env("TUNNELMPC_OUT", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("field.csv").exists());
}

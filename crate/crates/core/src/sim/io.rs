//! Record and metric serialization.
//!
//! `records.csv` has one row per [`StepRecord`] with the columns of
//! [`CSV_COLUMNS`]; floats use 17 significant digits so a reload reproduces
//! every value exactly. Body rates are not logged.

use std::io::{Read, Write};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{RunMetrics, ScenarioConfig, StepRecord};
use crate::dynamics::{UavState, Wrench};
use crate::linalg::Vec3;
use crate::mpc::MpcInput;

pub const CSV_COLUMNS: [&str; 26] = [
    "time", "px", "py", "pz", "vx", "vy", "vz", "roll", "pitch", "yaw", "ux", "uy", "uz", "uyaw", "refx", "refy", "refz", "h_min",
    "d_floor", "d_ceiling", "d_left", "d_right", "dist_fx", "dist_fy", "dist_fz", "solver_status",
];

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("record file: {0}")]
    Format(String),
}

/// `{:.16e}`: 17 significant digits, enough to round-trip any f64.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_records_csv<W: Write>(records: &[StepRecord<f64>], out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in records {
        let s = &r.plant_state;
        let u = r.mpc_input.to_array();
        let mut row: Vec<String> = [
            r.time,
            s.position.x,
            s.position.y,
            s.position.z,
            s.velocity.x,
            s.velocity.y,
            s.velocity.z,
            s.attitude.x,
            s.attitude.y,
            s.attitude.z,
            u[0],
            u[1],
            u[2],
            u[3],
            r.reference_position.x,
            r.reference_position.y,
            r.reference_position.z,
            r.h_min(),
            r.wall_distances[0],
            r.wall_distances[1],
            r.wall_distances[2],
            r.wall_distances[3],
            r.disturbance.force.x,
            r.disturbance.force.y,
            r.disturbance.force.z,
        ]
        .iter()
        .map(|&x| format_float(x))
        .collect();
        row.push(r.solver_status.clone());
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reloads a record file. The logged `h_min` becomes the single entry of
/// `h_values`; body rates and disturbance torques come back as zero.
pub fn read_records_csv<R: Read>(input: R) -> Result<Vec<StepRecord<f64>>, IoError> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers()?.clone();
    if header.iter().ne(CSV_COLUMNS.iter().copied()) {
        return Err(IoError::Format("unexpected header".into()));
    }
    let mut out = Vec::new();
    for (line, row) in rd.records().enumerate() {
        let row = row?;
        let f = |i: usize| -> Result<f64, IoError> {
            row[i].parse::<f64>().map_err(|e| IoError::Format(format!("row {line}, column {}: {e}", CSV_COLUMNS[i])))
        };
        let v3 = |i: usize| -> Result<Vec3<f64>, IoError> { Ok(Vec3::new(f(i)?, f(i + 1)?, f(i + 2)?)) };
        out.push(StepRecord {
            time: f(0)?,
            plant_state: UavState { position: v3(1)?, velocity: v3(4)?, attitude: v3(7)?, body_rates: Vec3::zeros() },
            mpc_input: MpcInput { accel: v3(10)?, yaw_accel: f(13)? },
            reference_position: v3(14)?,
            h_values: vec![f(17)?],
            wall_distances: [f(18)?, f(19)?, f(20)?, f(21)?],
            disturbance: Wrench { force: v3(22)?, torque: Vec3::zeros() },
            solver_status: row[25].to_string(),
        });
    }
    Ok(out)
}

/// SHA-256 of the config's canonical JSON, hex encoded.
pub fn config_hash(config: &ScenarioConfig<f64>) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    #[serde(flatten)]
    metrics: &'a RunMetrics<f64>,
    config_hash: String,
    seed: u64,
}

/// `metrics.json` body: the run metrics plus the config hash and seed.
pub fn metrics_json(metrics: &RunMetrics<f64>, config: &ScenarioConfig<f64>) -> Result<String, IoError> {
    let mut s = serde_json::to_string_pretty(&MetricsFile { metrics, config_hash: config_hash(config), seed: config.seed })?;
    s.push('\n');
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::compute_metrics;

    fn sample() -> Vec<StepRecord<f64>> {
        (0..5)
            .map(|k| {
                let t = k as f64 * 0.1;
                StepRecord {
                    time: t,
                    plant_state: UavState { position: Vec3::new(1.0 / 3.0 + t, 1.0, 0.7), velocity: Vec3::new(0.1, -1e-17, 2.0), attitude: Vec3::new(0.01, -0.02, 0.0), body_rates: Vec3::zeros() },
                    mpc_input: MpcInput { accel: Vec3::new(t.sin(), 0.5, -0.25), yaw_accel: 0.0 },
                    reference_position: Vec3::new(t, 1.0, 1.0),
                    h_values: vec![if k == 3 { f64::NEG_INFINITY } else { 0.1 * k as f64 }],
                    wall_distances: [0.7, 1.3, 1.0, 1.0],
                    disturbance: Wrench { force: Vec3::new(0.0, 0.0, std::f64::consts::PI), torque: Vec3::zeros() },
                    solver_status: "converged".into(),
                }
            })
            .collect()
    }

    #[test]
    fn header_matches_documented_order() {
        let mut buf = Vec::new();
        write_records_csv(&sample(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time,px,py,pz,vx,vy,vz,roll,pitch,yaw,ux,uy,uz,uyaw,refx,refy,refz,h_min,d_floor,d_ceiling,d_left,d_right,dist_fx,dist_fy,dist_fz,solver_status\n"));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let recs = sample();
        let mut buf = Vec::new();
        write_records_csv(&recs, &mut buf).unwrap();
        let back = read_records_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), recs.len());
        for (a, b) in recs.iter().zip(&back) {
            assert_eq!(a.plant_state.position, b.plant_state.position);
            assert_eq!(a.mpc_input, b.mpc_input);
            assert_eq!(a.h_min().to_bits(), b.h_min().to_bits());
            assert_eq!(a.disturbance.force, b.disturbance.force);
        }
        let cfg = ScenarioConfig::default();
        assert_eq!(compute_metrics(&recs, &cfg), compute_metrics(&back, &cfg));
    }

    #[test]
    fn metrics_json_carries_hash_and_seed() {
        let cfg = ScenarioConfig { seed: 42, ..ScenarioConfig::default() };
        let m = compute_metrics(&sample(), &cfg);
        let v: serde_json::Value = serde_json::from_str(&metrics_json(&m, &cfg).unwrap()).unwrap();
        for key in ["T_e", "c_e", "c_s", "min_wall_distance", "boundary_violations", "collided", "config_hash", "seed"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["seed"], 42);
        assert_eq!(v["config_hash"].as_str().unwrap().len(), 64);
    }

    #[test]
    fn hash_tracks_config_changes() {
        let a = ScenarioConfig::default();
        let mut b = a;
        b.mpc.horizon = 20;
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a), config_hash(&ScenarioConfig::default()));
    }
}

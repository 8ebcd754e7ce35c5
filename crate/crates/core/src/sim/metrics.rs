use serde::{Deserialize, Serialize};

use super::{ScenarioConfig, StepRecord};
use crate::aero::Wall;
use crate::mpc::ScenarioCase;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics<T> {
    /// RMS tracking error, m.
    #[serde(rename = "T_e")]
    pub t_e: T,
    /// `Σ‖u_k‖²` over the commanded inputs.
    pub c_e: T,
    /// `Σ‖u_k − u_{k−1}‖₁`, first step excluded.
    pub c_s: T,
    /// Floor, ceiling, left, right, m.
    pub min_wall_distance: [T; 4],
    /// Steps with the vehicle outside the moving safe sphere (bound-region
    /// case only).
    pub boundary_violations: usize,
    pub collided: bool,
}

/// Aggregates a run's records.
///
/// Tracking error and input sums cover the control steps; the terminal
/// collision record, when present, only contributes its wall distances and
/// sphere check.
pub fn compute_metrics<T: Real>(records: &[StepRecord<T>], config: &ScenarioConfig<T>) -> RunMetrics<T> {
    let control: Vec<&StepRecord<T>> = records.iter().filter(|r| !r.is_collision()).collect();
    let sq_err: T = control.iter().map(|r| (r.plant_state.position - r.reference_position).norm_squared()).sum();
    let t_e = if control.is_empty() { T::zero() } else { (sq_err / T::of(control.len() as f64)).sqrt() };
    let c_e = control.iter().map(|r| r.mpc_input.to_array().iter().map(|&u| u * u).sum::<T>()).sum();
    let c_s = control
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0].mpc_input.to_array(), w[1].mpc_input.to_array());
            a.iter().zip(&b).map(|(x, y)| (*y - *x).abs()).sum::<T>()
        })
        .sum();
    let mut min_wall_distance = [T::infinity(); 4];
    for r in records {
        for (m, d) in min_wall_distance.iter_mut().zip(r.wall_distances) {
            *m = m.min(d);
        }
    }
    let boundary_violations = match config.case {
        ScenarioCase::BoundRegion => records
            .iter()
            .filter(|r| (r.plant_state.position - r.reference_position).norm() > config.cbf.r)
            .count(),
        _ => 0,
    };
    RunMetrics { t_e, c_e, c_s, min_wall_distance, boundary_violations, collided: records.iter().any(|r| r.is_collision()) }
}

/// Outcome of one hover dwell of the standoff protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StandoffDwell<T> {
    pub commanded: T,
    /// Norm of the per-axis position standard deviations, m.
    pub position_std: T,
    pub mean_distance: T,
    pub min_distance: T,
    /// The run covered the whole dwell.
    pub complete: bool,
    /// A collision, or the vehicle closer to the wall than the safe standoff.
    pub violation: bool,
    pub stable: bool,
}

/// Standard-deviation bound of a stable dwell, m.
pub const STABLE_DWELL_STD: f64 = 0.05;

/// Splits a standoff run into its dwells and grades each.
///
/// A dwell is stable when the run covers it, the position spread stays below
/// [`STABLE_DWELL_STD`], and the vehicle neither collides nor comes closer to
/// the approached wall than the safe standoff `cbf.d_s`.
pub fn standoff_dwells<T: Real>(records: &[StepRecord<T>], config: &ScenarioConfig<T>, standoffs: &[T]) -> Vec<StandoffDwell<T>> {
    let wall: Wall = config.trajectory.standoff.wall;
    let dwell = config.trajectory.standoff.dwell;
    let eps = config.mpc.t_s * T::of(1e-6);
    standoffs
        .iter()
        .enumerate()
        .map(|(k, &commanded)| {
            let start = dwell * T::of(k as f64);
            let end = start + dwell;
            let in_dwell: Vec<&StepRecord<T>> =
                records.iter().filter(|r| r.time + eps >= start && r.time + eps < end).collect();
            let expected = (dwell / config.mpc.t_s + T::half()).floor().to_f64_lossy() as usize;
            let collided = in_dwell.iter().any(|r| r.is_collision());
            let held: Vec<&&StepRecord<T>> = in_dwell.iter().filter(|r| !r.is_collision()).collect();
            let complete = !collided && held.len() >= expected;
            let n = T::of(held.len().max(1) as f64);
            let mean = held.iter().fold(crate::linalg::Vec3::zeros(), |a, r| a + r.plant_state.position) / n;
            let var = held
                .iter()
                .map(|r| (r.plant_state.position - mean).norm_squared())
                .sum::<T>()
                / n;
            let distances: Vec<T> = in_dwell.iter().map(|r| r.wall_distances[wall.index()]).collect();
            let min_distance = distances.iter().fold(T::infinity(), |m, &d| m.min(d));
            let mean_distance = distances.iter().copied().sum::<T>() / T::of(distances.len().max(1) as f64);
            let violation = collided || min_distance < config.cbf.d_s;
            let position_std = var.sqrt();
            StandoffDwell {
                commanded,
                position_std,
                mean_distance,
                min_distance,
                complete,
                violation,
                stable: complete && !violation && position_std < T::of(STABLE_DWELL_STD),
            }
        })
        .collect()
}

/// Smallest commanded standoff whose dwell is stable.
pub fn minimum_stable_standoff<T: Real>(dwells: &[StandoffDwell<T>]) -> Option<T> {
    dwells.iter().filter(|d| d.stable).map(|d| d.commanded).fold(None, |m: Option<T>, c| Some(m.map_or(c, |m| m.min(c))))
}

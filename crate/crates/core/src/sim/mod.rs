//! Closed-loop scenario engine: outer MPC, inner PID, full plant, tunnel
//! aerodynamics and wind.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aero::{tunnel_disturbance, AeroConfig, TunnelGeometry, WindProcess};
use crate::cbf::CbfParams;
use crate::dynamics::{inner_loop_step, step_plant, DynamicsError, InnerLoopState, PidGains, UavParams, UavState, Wrench};
use crate::error::{ensure, ValidationError};
use crate::linalg::Vec3;
use crate::mpc::{measured_barriers, ControllerMode, MpcConfig, MpcController, MpcError, MpcInput, MpcState, ScenarioCase};
use crate::scalar::Real;

pub mod bench;
pub mod io;
mod metrics;
pub mod reference;

pub use metrics::{compute_metrics, minimum_stable_standoff, standoff_dwells, RunMetrics, StandoffDwell, STABLE_DWELL_STD};
pub use reference::{generate_reference, Reference, TrajectoryConfig};

/// Status label of the record appended when a run ends in a collision.
pub const COLLISION_STATUS: &str = "collision";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindConfig<T> {
    /// Bound on the wind acceleration magnitude, m/s².
    pub d_m: T,
    /// Time each wind draw is held, s.
    pub hold: T,
}

impl<T: Real> Default for WindConfig<T> {
    fn default() -> Self {
        Self { d_m: T::of(0.8), hold: T::one() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig<T> {
    pub case: ScenarioCase,
    pub controller: ControllerMode,
    pub geometry: TunnelGeometry<T>,
    pub uav: UavParams<T>,
    pub pid: PidGains<T>,
    pub mpc: MpcConfig<T>,
    pub cbf: CbfParams<T>,
    pub aero: AeroConfig<T>,
    pub wind: WindConfig<T>,
    pub total_time: T,
    /// Inner-loop and plant integration step, s.
    pub inner_dt: T,
    pub seed: u64,
    pub trajectory: TrajectoryConfig<T>,
}

impl<T: Real> Default for ScenarioConfig<T> {
    fn default() -> Self {
        Self {
            case: ScenarioCase::BoundRegion,
            controller: ControllerMode::Cbf,
            geometry: TunnelGeometry::default(),
            uav: UavParams::default(),
            pid: PidGains::default(),
            mpc: MpcConfig::default(),
            cbf: CbfParams::default(),
            aero: AeroConfig::default(),
            wind: WindConfig::default(),
            total_time: T::of(100.0),
            inner_dt: T::of(0.01),
            seed: 0,
            trajectory: TrajectoryConfig::default(),
        }
    }
}

impl<T: Real> ScenarioConfig<T> {
    /// Field invariants, then cross-field consistency.
    pub fn validate(&self) -> Result<(), ValidationError> {
        self.geometry.validate("geometry")?;
        self.uav.validate("uav")?;
        self.pid.validate("pid")?;
        self.mpc.validate("mpc")?;
        self.cbf.validate("cbf")?;
        self.aero.validate("aero")?;
        ensure(self.wind.d_m >= T::zero(), "wind", "d_m", "must be ≥ 0")?;
        ensure(self.wind.hold > T::zero(), "wind", "hold", "must be > 0")?;
        ensure(self.total_time > T::zero(), "", "total_time", "must be > 0")?;
        ensure(self.inner_dt > T::zero(), "", "inner_dt", "must be > 0")?;
        ensure(self.substeps().is_some(), "", "inner_dt", "must divide mpc.t_s into a whole number of steps")?;
        self.trajectory.validate("trajectory")?;
        self.reference().map(|_| ())
    }

    /// Inner steps per outer step, when `t_s` is a whole multiple of `inner_dt`.
    pub fn substeps(&self) -> Option<usize> {
        let ratio = (self.mpc.t_s / self.inner_dt).to_f64_lossy();
        let n = ratio.round();
        ((ratio - n).abs() < 1e-9 && n >= 1.0).then_some(n as usize)
    }

    /// Number of outer steps in a full run.
    pub fn outer_steps(&self) -> usize {
        (self.total_time / self.mpc.t_s + T::of(1e-9)).floor().to_f64_lossy() as usize
    }

    pub fn reference(&self) -> Result<Reference<T>, ValidationError> {
        generate_reference(self.case, &self.geometry, &self.trajectory, self.uav.prop_radius, self.total_time, self.mpc.t_s)
    }

    /// The MPC configuration with the scenario's controller applied.
    pub fn controller_config(&self) -> MpcConfig<T> {
        MpcConfig { mode: self.controller, ..self.mpc }
    }
}

/// FNV-1a over a label; feeds the per-stream seeds.
fn stream_hash(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Seed of the aerodynamic-noise stream: `seed ⊕ hash(case, controller)`.
pub fn aero_stream_seed(seed: u64, case: ScenarioCase, controller: ControllerMode) -> u64 {
    seed ^ stream_hash(&format!("aero/{}/{}", case.name(), controller.name()))
}

/// Seed of the wind stream, shared by all controllers on a case so they face
/// the same gusts.
pub fn wind_stream_seed(seed: u64, case: ScenarioCase) -> u64 {
    seed ^ stream_hash(&format!("wind/{}", case.name()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord<T> {
    pub time: T,
    pub plant_state: UavState<T>,
    pub mpc_input: MpcInput<T>,
    pub reference_position: Vec3<T>,
    /// Measured barrier values, `−∞` where a barrier is violated.
    pub h_values: Vec<T>,
    /// Floor, ceiling, left, right.
    pub wall_distances: [T; 4],
    /// Mean disturbance wrench applied over the step.
    pub disturbance: Wrench<T>,
    pub solver_status: String,
}

impl<T: Real> StepRecord<T> {
    pub fn h_min(&self) -> T {
        self.h_values.iter().fold(T::infinity(), |m, &h| m.min(h))
    }

    pub fn is_collision(&self) -> bool {
        self.solver_status == COLLISION_STATUS
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun<T> {
    pub records: Vec<StepRecord<T>>,
    pub metrics: RunMetrics<T>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ValidationError),
    #[error("controller failed at t = {time}: {source}")]
    Controller { time: f64, source: MpcError },
    #[error("plant integration failed at t = {time}: {source}")]
    Plant { time: f64, source: DynamicsError },
}

fn measured_h<T: Real>(config: &ScenarioConfig<T>, s: &UavState<T>, ref_p: &Vec3<T>, ref_v: &Vec3<T>) -> Vec<T> {
    measured_barriers(config.case, &s.position, &s.velocity, ref_p, ref_v, &config.geometry, &config.cbf)
        .into_iter()
        .map(|h| h.unwrap_or(T::neg_infinity()))
        .collect()
}

/// Runs one closed-loop scenario.
///
/// Each outer step reads the plant, solves the MPC, then runs the inner PID
/// and plant for `t_s / inner_dt` substeps under aerodynamic and wind
/// disturbances. A wall distance at or below a quarter propeller radius, an
/// aerodynamic singularity or a non-finite plant state ends the run; the
/// state at that instant is logged as a final record tagged
/// [`COLLISION_STATUS`].
pub fn run_scenario<T: Real>(config: &ScenarioConfig<T>) -> Result<ScenarioRun<T>, SimError> {
    config.validate()?;
    let reference = config.reference()?;
    let substeps = config.substeps().expect("validated");
    let dt = config.inner_dt;
    let t_s = config.mpc.t_s;
    let horizon = config.mpc.horizon;
    let collision_distance = config.uav.prop_radius / T::of(4.0);
    let hover = config.uav.hover_thrust();

    let mut aero_rng = ChaCha8Rng::seed_from_u64(aero_stream_seed(config.seed, config.case, config.controller));
    let mut wind_rng = ChaCha8Rng::seed_from_u64(wind_stream_seed(config.seed, config.case));
    let mut wind = WindProcess::new(config.wind.d_m, config.wind.hold);
    let mut controller = MpcController::new(config.controller_config(), config.case, config.cbf, config.geometry);

    let mut state = UavState::at_rest(reference.position(T::zero()));
    let mut inner = InnerLoopState::new(state.attitude.z);
    let mut records = Vec::with_capacity(config.outer_steps() + 1);

    for k in 0..config.outer_steps() {
        let t = t_s * T::of(k as f64);
        let window = reference.window(t, horizon);
        let (u, diag) = controller
            .step(&MpcState::from_plant(&state), &window)
            .map_err(|source| SimError::Controller { time: t.to_f64_lossy(), source })?;
        let mut record = StepRecord {
            time: t,
            plant_state: state,
            mpc_input: u,
            reference_position: window.positions[0],
            h_values: measured_h(config, &state, &window.positions[0], &window.velocities[0]),
            wall_distances: config.geometry.wall_distances(&state.position),
            disturbance: Wrench::zero(),
            solver_status: diag.label().to_string(),
        };

        let mut applied = Wrench::zero();
        let mut last = Wrench::zero();
        let mut executed = 0;
        let mut collided = false;
        for j in 0..substeps {
            let tj = t + dt * T::of(j as f64);
            let gust = wind.at(tj, &mut wind_rng) * config.uav.mass;
            let aero = match tunnel_disturbance(&state, &config.geometry, &config.uav, &config.aero, hover, &mut aero_rng) {
                Ok(w) => w,
                Err(_) => {
                    collided = true;
                    break;
                }
            };
            let wrench = aero + Wrench { force: gust, torque: Vec3::zeros() };
            let (cmd, next_inner) = inner_loop_step(&state, &inner, &u.accel, u.yaw_accel, &config.pid, &config.uav, dt)
                .map_err(|source| SimError::Plant { time: tj.to_f64_lossy(), source })?;
            inner = next_inner;
            state = step_plant(&state, cmd.thrust, &cmd.torque, &wrench, &config.uav, dt)
                .map_err(|source| SimError::Plant { time: tj.to_f64_lossy(), source })?;
            applied = applied + wrench;
            last = wrench;
            executed += 1;
            let d = config.geometry.wall_distances(&state.position);
            if !state.is_finite() || d.iter().any(|&x| !(x > collision_distance)) {
                collided = true;
                break;
            }
        }
        if executed > 0 {
            let inv = T::of(executed as f64).recip();
            record.disturbance = Wrench { force: applied.force * inv, torque: applied.torque * inv };
        }
        records.push(record);

        if collided {
            let tc = t + t_s;
            let p = reference.position(tc);
            let v = reference.velocity(tc);
            records.push(StepRecord {
                time: tc,
                plant_state: state,
                mpc_input: u,
                reference_position: p,
                h_values: measured_h(config, &state, &p, &v),
                wall_distances: config.geometry.wall_distances(&state.position),
                disturbance: last,
                solver_status: COLLISION_STATUS.to_string(),
            });
            break;
        }
    }
    let metrics = compute_metrics(&records, config);
    Ok(ScenarioRun { records, metrics })
}

/// Smallest finite barrier value of a record set, `−∞` if any record saw a
/// violated barrier.
pub fn lowest_barrier<T: Real>(records: &[StepRecord<T>]) -> T {
    records.iter().fold(T::infinity(), |m, r| m.min(r.h_min()))
}

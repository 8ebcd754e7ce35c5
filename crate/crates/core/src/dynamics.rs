//! Rigid-body quadrotor plant and the inner attitude/thrust loop.
//!
//! The plant integrates translational dynamics in the inertial frame and
//! rotational dynamics in the body frame:
//!
//! ```text
//! p̈ = g + R(η)·[0, 0, T]ᵀ/m + F_d/m
//! ω̇ = I⁻¹(τ + τ_d − ω × Iω)
//! η̇ = W(η)·ω
//! ```
//!
//! with `η = (roll, pitch, yaw)` in the ZYX convention. Everything in here is
//! a pure function of explicit state values.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{ensure, ValidationError};
use crate::linalg::{Mat3, Vec3};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("integration step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("thrust must be non-negative, got {0}")]
    NegativeThrust(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UavParams<T> {
    /// kg
    pub mass: T,
    /// Principal moments (Ix, Iy, Iz) in kg·m².
    pub inertia_diag: Vec3<T>,
    /// m
    pub arm_length: T,
    /// m
    pub prop_radius: T,
    /// Roll and pitch bound in rad.
    pub max_tilt: T,
    /// m/s², acting along −z of the inertial frame.
    pub gravity: T,
    /// Maximum thrust as a multiple of the hover thrust.
    pub thrust_to_weight: T,
}

impl<T: Real> Default for UavParams<T> {
    fn default() -> Self {
        Self {
            mass: T::of(1.5),
            inertia_diag: Vec3::from_f64([0.1, 0.1, 0.2]),
            arm_length: T::of(0.20),
            prop_radius: T::of(0.12),
            max_tilt: T::PI() / T::of(10.0),
            gravity: T::of(9.81),
            thrust_to_weight: T::two(),
        }
    }
}

impl<T: Real> UavParams<T> {
    pub fn hover_thrust(&self) -> T {
        self.mass * self.gravity
    }

    pub fn thrust_max(&self) -> T {
        self.thrust_to_weight * self.hover_thrust()
    }

    pub fn validate(&self, prefix: &str) -> Result<(), ValidationError> {
        let z = T::zero();
        ensure(self.mass > z, prefix, "mass", "must be > 0")?;
        let i = self.inertia_diag;
        ensure(i.x > z && i.y > z && i.z > z, prefix, "inertia_diag", "all components must be > 0")?;
        ensure(self.arm_length > z, prefix, "arm_length", "must be > 0")?;
        ensure(self.prop_radius > z, prefix, "prop_radius", "must be > 0")?;
        ensure(
            self.max_tilt > z && self.max_tilt < T::FRAC_PI_2(),
            prefix,
            "max_tilt",
            "must lie in (0, π/2)",
        )?;
        ensure(self.gravity > z, prefix, "gravity", "must be > 0")?;
        ensure(self.thrust_to_weight >= T::one(), prefix, "thrust_to_weight", "must be ≥ 1")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UavState<T> {
    pub position: Vec3<T>,
    pub velocity: Vec3<T>,
    /// (roll φ, pitch θ, yaw ψ) in rad.
    pub attitude: Vec3<T>,
    /// Body-frame angular velocity in rad/s.
    pub body_rates: Vec3<T>,
}

impl<T: Real> UavState<T> {
    pub fn at_rest(position: Vec3<T>) -> Self {
        Self { position, ..Self::zero() }
    }

    pub fn zero() -> Self {
        Self {
            position: Vec3::zeros(),
            velocity: Vec3::zeros(),
            attitude: Vec3::zeros(),
            body_rates: Vec3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.is_finite()
            && self.velocity.is_finite()
            && self.attitude.is_finite()
            && self.body_rates.is_finite()
    }

    fn axpy(&self, h: T, d: &Self) -> Self {
        Self {
            position: self.position + d.position * h,
            velocity: self.velocity + d.velocity * h,
            attitude: self.attitude + d.attitude * h,
            body_rates: self.body_rates + d.body_rates * h,
        }
    }
}

/// External force (inertial frame, N) and torque (body frame, N·m).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Wrench<T> {
    pub force: Vec3<T>,
    pub torque: Vec3<T>,
}

impl<T: Real> Wrench<T> {
    pub fn zero() -> Self {
        Self { force: Vec3::zeros(), torque: Vec3::zeros() }
    }

    pub fn is_finite(&self) -> bool {
        self.force.is_finite() && self.torque.is_finite()
    }
}

impl<T: Real> std::ops::Add for Wrench<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self { force: self.force + o.force, torque: self.torque + o.torque }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidGains<T> {
    /// Attitude gains per axis (roll, pitch, yaw).
    pub kp: Vec3<T>,
    pub ki: Vec3<T>,
    pub kd: Vec3<T>,
    /// Vertical-acceleration feedback gains of the thrust channel.
    pub kp_t: T,
    pub ki_t: T,
    pub kd_t: T,
    /// Anti-windup bound applied to every integrator.
    pub integrator_limit: T,
}

impl<T: Real> Default for PidGains<T> {
    fn default() -> Self {
        Self {
            kp: Vec3::from_f64([100.0, 100.0, 20.0]),
            ki: Vec3::from_f64([0.2, 0.2, 0.1]),
            kd: Vec3::from_f64([6.3, 6.3, 4.0]),
            kp_t: T::zero(),
            ki_t: T::zero(),
            kd_t: T::zero(),
            integrator_limit: T::of(0.5),
        }
    }
}

impl<T: Real> PidGains<T> {
    pub fn validate(&self, prefix: &str) -> Result<(), ValidationError> {
        let nonneg = |v: &Vec3<T>| v.x >= T::zero() && v.y >= T::zero() && v.z >= T::zero();
        ensure(nonneg(&self.kp), prefix, "kp", "gains must be ≥ 0")?;
        ensure(nonneg(&self.ki), prefix, "ki", "gains must be ≥ 0")?;
        ensure(nonneg(&self.kd), prefix, "kd", "gains must be ≥ 0")?;
        ensure(self.kp_t >= T::zero(), prefix, "kp_t", "must be ≥ 0")?;
        ensure(self.ki_t >= T::zero(), prefix, "ki_t", "must be ≥ 0")?;
        ensure(self.kd_t >= T::zero(), prefix, "kd_t", "must be ≥ 0")?;
        ensure(self.integrator_limit > T::zero(), prefix, "integrator_limit", "must be > 0")
    }
}

/// Body→inertial rotation `R = Rz(ψ)·Ry(θ)·Rx(φ)`.
pub fn rotation_matrix<T: Real>(attitude: &Vec3<T>) -> Mat3<T> {
    let (sr, cr) = attitude.x.sin_cos();
    let (sp, cp) = attitude.y.sin_cos();
    let (sy, cy) = attitude.z.sin_cos();
    Mat3 {
        rows: [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ],
    }
}

/// ZYX Euler-angle rates from body rates.
pub fn euler_rates<T: Real>(attitude: &Vec3<T>, omega: &Vec3<T>) -> Vec3<T> {
    let (sr, cr) = attitude.x.sin_cos();
    let cp = attitude.y.cos();
    let tp = attitude.y.tan();
    Vec3::new(
        omega.x + sr * tp * omega.y + cr * tp * omega.z,
        cr * omega.y - sr * omega.z,
        (sr * omega.y + cr * omega.z) / cp,
    )
}

fn derivative<T: Real>(
    s: &UavState<T>,
    thrust: T,
    torque: &Vec3<T>,
    dist: &Wrench<T>,
    params: &UavParams<T>,
) -> UavState<T> {
    let r = rotation_matrix(&s.attitude);
    let gravity = Vec3::new(T::zero(), T::zero(), -params.gravity);
    let accel = gravity + r.column(2) * (thrust / params.mass) + dist.force * params.mass.recip();

    let inertia = params.inertia_diag;
    let w = s.body_rates;
    let gyro = w.cross(&w.component_mul(&inertia));
    let net = *torque + dist.torque - gyro;
    let omega_dot = Vec3::new(net.x / inertia.x, net.y / inertia.y, net.z / inertia.z);

    UavState {
        position: s.velocity,
        velocity: accel,
        attitude: euler_rates(&s.attitude, &w),
        body_rates: omega_dot,
    }
}

/// Advances the plant by one fixed RK4 step, holding thrust, torque and the
/// disturbance constant over the step.
pub fn step_plant<T: Real>(
    state: &UavState<T>,
    thrust: T,
    torque: &Vec3<T>,
    disturbance: &Wrench<T>,
    params: &UavParams<T>,
    dt: T,
) -> Result<UavState<T>, DynamicsError> {
    if !(dt > T::zero()) {
        return Err(DynamicsError::NonPositiveStep(dt.to_f64_lossy()));
    }
    if thrust < T::zero() {
        return Err(DynamicsError::NegativeThrust(thrust.to_f64_lossy()));
    }
    let f = |s: &UavState<T>| derivative(s, thrust, torque, disturbance, params);
    let half = dt * T::half();
    let k1 = f(state);
    let k2 = f(&state.axpy(half, &k1));
    let k3 = f(&state.axpy(half, &k2));
    let k4 = f(&state.axpy(dt, &k3));
    let six = T::of(6.0);
    let mut out = *state;
    let combine = |a: Vec3<T>, b: Vec3<T>, c: Vec3<T>, d: Vec3<T>| {
        (a + b * T::two() + c * T::two() + d) * (dt / six)
    };
    out.position += combine(k1.position, k2.position, k3.position, k4.position);
    out.velocity += combine(k1.velocity, k2.velocity, k3.velocity, k4.velocity);
    out.attitude += combine(k1.attitude, k2.attitude, k3.attitude, k4.attitude);
    out.body_rates += combine(k1.body_rates, k2.body_rates, k3.body_rates, k4.body_rates);
    Ok(out)
}

/// Desired attitude and collective thrust for an acceleration command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeThrust<T> {
    pub roll: T,
    pub pitch: T,
    pub thrust: T,
}

/// Small-angle inversion of the translational dynamics.
///
/// The horizontal command is rotated into the yaw frame; pitch produces +x
/// and roll produces −y acceleration. Angles saturate at `max_tilt` and the
/// thrust at `[0, thrust_max]`.
pub fn accel_to_attitude_thrust<T: Real>(
    accel_cmd: &Vec3<T>,
    yaw: T,
    params: &UavParams<T>,
) -> AttitudeThrust<T> {
    let (sy, cy) = yaw.sin_cos();
    let ax = cy * accel_cmd.x + sy * accel_cmd.y;
    let ay = -sy * accel_cmd.x + cy * accel_cmd.y;
    let g = params.gravity;
    let tilt = params.max_tilt;
    AttitudeThrust {
        roll: (-ay / g).atan().clamp_to(-tilt, tilt),
        pitch: (ax / g).atan().clamp_to(-tilt, tilt),
        thrust: (params.mass * (accel_cmd.z + g)).clamp_to(T::zero(), params.thrust_max()),
    }
}

/// Forward small-angle map matching [`accel_to_attitude_thrust`].
pub fn attitude_thrust_to_accel<T: Real>(cmd: &AttitudeThrust<T>, yaw: T, params: &UavParams<T>) -> Vec3<T> {
    let g = params.gravity;
    let ax = g * cmd.pitch.tan();
    let ay = -g * cmd.roll.tan();
    let (sy, cy) = yaw.sin_cos();
    Vec3::new(cy * ax - sy * ay, sy * ax + cy * ay, cmd.thrust / params.mass - g)
}

/// Integrator and reference state carried between inner-loop ticks.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InnerLoopState<T> {
    pub attitude_integral: Vec3<T>,
    pub thrust_integral: T,
    pub prev_accel_error: Option<T>,
    pub prev_vertical_velocity: Option<T>,
    pub yaw_ref: T,
    pub yaw_rate_ref: T,
}

impl<T: Real> InnerLoopState<T> {
    /// Fresh controller state holding the current heading.
    pub fn new(yaw: T) -> Self {
        Self {
            attitude_integral: Vec3::zeros(),
            thrust_integral: T::zero(),
            prev_accel_error: None,
            prev_vertical_velocity: None,
            yaw_ref: yaw,
            yaw_rate_ref: T::zero(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActuatorCommand<T> {
    pub thrust: T,
    pub torque: Vec3<T>,
}

fn wrap_angle<T: Real>(a: T) -> T {
    let two_pi = T::TAU();
    let mut w = a % two_pi;
    if w > T::PI() {
        w -= two_pi;
    } else if w < -T::PI() {
        w += two_pi;
    }
    w
}

/// One tick of the cascaded inner loop.
///
/// The acceleration part of the command sets the desired roll/pitch/thrust,
/// the yaw acceleration is integrated into a heading reference. Attitude is
/// tracked by per-axis PID (derivative on the measured Euler rates) and the
/// thrust channel adds tilt compensation plus PID feedback on the vertical
/// acceleration error estimated from successive velocity samples.
pub fn inner_loop_step<T: Real>(
    state: &UavState<T>,
    ctrl: &InnerLoopState<T>,
    accel_cmd: &Vec3<T>,
    yaw_accel_cmd: T,
    gains: &PidGains<T>,
    params: &UavParams<T>,
    dt: T,
) -> Result<(ActuatorCommand<T>, InnerLoopState<T>), DynamicsError> {
    if !(dt > T::zero()) {
        return Err(DynamicsError::NonPositiveStep(dt.to_f64_lossy()));
    }
    let mut next = *ctrl;
    next.yaw_rate_ref += yaw_accel_cmd * dt;
    next.yaw_ref = wrap_angle(next.yaw_ref + next.yaw_rate_ref * dt);

    let att = state.attitude;
    let desired = accel_to_attitude_thrust(accel_cmd, att.z, params);
    let error = Vec3::new(desired.roll - att.x, desired.pitch - att.y, wrap_angle(next.yaw_ref - att.z));

    let lim = gains.integrator_limit;
    next.attitude_integral = (ctrl.attitude_integral + error * dt).map(|v| v.clamp_to(-lim, lim));

    let rates = euler_rates(&att, &state.body_rates);
    let rate_error = Vec3::new(-rates.x, -rates.y, next.yaw_rate_ref - rates.z);
    let torque = gains.kp.component_mul(&error)
        + gains.ki.component_mul(&next.attitude_integral)
        + gains.kd.component_mul(&rate_error);

    // Thrust channel.
    let vz = state.velocity.z;
    let accel_error = match ctrl.prev_vertical_velocity {
        Some(prev) => accel_cmd.z - (vz - prev) / dt,
        None => T::zero(),
    };
    next.prev_vertical_velocity = Some(vz);
    next.thrust_integral = (ctrl.thrust_integral + accel_error * dt).clamp_to(-lim, lim);
    let accel_error_rate = match ctrl.prev_accel_error {
        Some(prev) => (accel_error - prev) / dt,
        None => T::zero(),
    };
    next.prev_accel_error = Some(accel_error);
    let correction =
        gains.kp_t * accel_error + gains.ki_t * next.thrust_integral + gains.kd_t * accel_error_rate;
    let tilt = (att.x.cos() * att.y.cos()).max(T::of(0.5));
    let thrust = ((desired.thrust + params.mass * correction) / tilt).clamp_to(T::zero(), params.thrust_max());

    Ok((ActuatorCommand { thrust, torque }, next))
}

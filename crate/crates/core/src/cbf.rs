//! Braking-distance control barrier functions and their discrete invariance
//! residuals.
//!
//! Each barrier has the form `√(2·a_max·clearance) ± radial speed`, which is
//! non-negative exactly when the vehicle can still stop before the boundary
//! with deceleration `a_max`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{ensure, ValidationError};
use crate::linalg::Vec3;
use crate::scalar::Real;

pub mod harness;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CbfError {
    #[error("{barrier} barrier violated: clearance {clearance} m")]
    BarrierViolated { barrier: &'static str, clearance: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CbfParams<T> {
    /// Maximum recoverable acceleration, m/s².
    pub a_max: T,
    /// Relaxation coefficient γ, 1/s.
    pub gamma: T,
    /// Odd exponent applied to h in the relaxation term.
    pub z_exp: u32,
    /// Disturbance-rejection margin λ.
    pub lambda: T,
    /// Safe standoff distance, m.
    pub d_s: T,
    /// Safe-region radius, m.
    pub r: T,
}

impl<T: Real> Default for CbfParams<T> {
    fn default() -> Self {
        Self {
            a_max: T::of(3.0),
            gamma: T::of(3.0),
            z_exp: 3,
            lambda: T::of(8.0),
            d_s: T::of(0.12),
            r: T::of(0.2),
        }
    }
}

impl<T: Real> CbfParams<T> {
    pub fn validate(&self, prefix: &str) -> Result<(), ValidationError> {
        ensure(self.a_max > T::zero(), prefix, "a_max", "must be > 0")?;
        ensure(self.gamma > T::zero(), prefix, "gamma", "must be > 0")?;
        ensure(self.z_exp >= 1 && self.z_exp % 2 == 1, prefix, "z_exp", "must be an odd integer ≥ 1")?;
        ensure(self.lambda >= T::zero(), prefix, "lambda", "must be ≥ 0")?;
        ensure(self.d_s >= T::zero(), prefix, "d_s", "must be ≥ 0")?;
        ensure(self.r > T::zero(), prefix, "r", "must be > 0")
    }

    /// `h^z` with the configured odd exponent.
    pub fn relax_power(&self, h: T) -> T {
        h.powi(self.z_exp as i32)
    }
}

/// Barrier value with its partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierEval<T> {
    pub value: T,
    /// ∂h/∂p
    pub d_p: Vec3<T>,
    /// ∂h/∂v
    pub d_v: Vec3<T>,
}

fn violated<T: Real>(barrier: &'static str, clearance: T) -> CbfError {
    CbfError::BarrierViolated { barrier, clearance: clearance.to_f64_lossy() }
}

/// `(I − p̂p̂ᵀ)·w / ‖p‖`, the derivative of `p̂ᵀw` with respect to `p`.
fn radial_projection_grad<T: Real>(unit: &Vec3<T>, w: &Vec3<T>, norm: T) -> Vec3<T> {
    (*w - *unit * unit.dot(w)) * norm.recip()
}

/// Shared form of the point and wall barriers: `√(2a(‖p‖ − d_s)) + p̂ᵀv`.
fn standoff_barrier<T: Real>(p: &Vec3<T>, vel: &Vec3<T>, params: &CbfParams<T>, name: &'static str) -> Result<BarrierEval<T>, CbfError> {
    let n = p.norm();
    let clearance = n - params.d_s;
    if !(clearance > T::zero()) || !(n > T::zero()) {
        return Err(violated(name, clearance));
    }
    let unit = *p * n.recip();
    let root = (T::two() * params.a_max * clearance).sqrt();
    Ok(BarrierEval {
        value: root + unit.dot(vel),
        d_p: unit * (params.a_max / root) + radial_projection_grad(&unit, vel, n),
        d_v: unit,
    })
}

/// Point-obstacle barrier; `p_rel` points from the obstacle to the vehicle.
pub fn h_point_obstacle<T: Real>(p_rel: &Vec3<T>, vel: &Vec3<T>, params: &CbfParams<T>) -> Result<T, CbfError> {
    standoff_barrier(p_rel, vel, params, "point-obstacle").map(|e| e.value)
}

pub fn h_point_obstacle_grad<T: Real>(p_rel: &Vec3<T>, vel: &Vec3<T>, params: &CbfParams<T>) -> Result<BarrierEval<T>, CbfError> {
    standoff_barrier(p_rel, vel, params, "point-obstacle")
}

/// Wall barrier; `d` is the perpendicular vector from the wall to the vehicle.
pub fn h_wall<T: Real>(d: &Vec3<T>, vel: &Vec3<T>, params: &CbfParams<T>) -> Result<T, CbfError> {
    standoff_barrier(d, vel, params, "wall").map(|e| e.value)
}

pub fn h_wall_grad<T: Real>(d: &Vec3<T>, vel: &Vec3<T>, params: &CbfParams<T>) -> Result<BarrierEval<T>, CbfError> {
    standoff_barrier(d, vel, params, "wall")
}

/// Safe-region barrier `√(2a(r − ‖p‖)) − p̂ᵀ(v − v_t)`; `p_rel` points from
/// the region center to the vehicle. At the center the radial term is 0.
pub fn h_bounding<T: Real>(p_rel: &Vec3<T>, vel: &Vec3<T>, vel_target: &Vec3<T>, params: &CbfParams<T>) -> Result<T, CbfError> {
    h_bounding_grad(p_rel, vel, vel_target, params).map(|e| e.value)
}

/// As [`h_bounding`]; `d_v` is the derivative with respect to `vel` (the
/// derivative with respect to `vel_target` is its negation).
pub fn h_bounding_grad<T: Real>(
    p_rel: &Vec3<T>,
    vel: &Vec3<T>,
    vel_target: &Vec3<T>,
    params: &CbfParams<T>,
) -> Result<BarrierEval<T>, CbfError> {
    let n = p_rel.norm();
    let clearance = params.r - n;
    if !(clearance > T::zero()) {
        return Err(violated("safe-region", clearance));
    }
    let root = (T::two() * params.a_max * clearance).sqrt();
    if n == T::zero() {
        return Ok(BarrierEval { value: root, d_p: Vec3::zeros(), d_v: Vec3::zeros() });
    }
    let unit = *p_rel * n.recip();
    let w = *vel - *vel_target;
    Ok(BarrierEval {
        value: root - unit.dot(&w),
        d_p: -(unit * (params.a_max / root)) - radial_projection_grad(&unit, &w, n),
        d_v: -unit,
    })
}

/// Forward-difference invariance residual
/// `(h_next − h_now)/dt + γ·(h_now^z − λ)`; satisfied iff ≥ 0.
pub fn invariance_residual<T: Real>(h_now: T, h_next: T, dt: T, params: &CbfParams<T>) -> T {
    (h_next - h_now) / dt + params.gamma * (params.relax_power(h_now) - params.lambda)
}

/// Continuous-time invariance condition for the point barrier, expanded and
/// multiplied through by `‖p‖`:
/// `a·vᵀp/√(2a(‖p‖−d_s)) − (pᵀv/‖p‖)² + ‖v‖² + pᵀu + γ·h^z·‖p‖`.
pub fn expanded_invariance_point<T: Real>(p_rel: &Vec3<T>, vel: &Vec3<T>, u: &Vec3<T>, params: &CbfParams<T>) -> Result<T, CbfError> {
    let h = h_point_obstacle(p_rel, vel, params)?;
    let n = p_rel.norm();
    let root = (T::two() * params.a_max * (n - params.d_s)).sqrt();
    let radial = p_rel.dot(vel) / n;
    Ok(params.a_max * vel.dot(p_rel) / root - radial * radial
        + vel.norm_squared()
        + p_rel.dot(u)
        + params.gamma * params.relax_power(h) * n)
}

/// `√(2a·s)` continued linearly below `s = eps`, so it stays finite (and
/// negative for negative clearance) inside an optimizer. Returns the value
/// and its derivative with respect to `s`.
pub fn smooth_braking_root<T: Real>(a_max: T, s: T, eps: T) -> (T, T) {
    if s >= eps {
        let root = (T::two() * a_max * s).sqrt();
        (root, a_max / root)
    } else {
        let root = (T::two() * a_max * eps).sqrt();
        let slope = a_max / root;
        (root + slope * (s - eps), slope)
    }
}

/// Wall barrier for a planar wall with inward unit `normal` at signed
/// distance `dist`, using [`smooth_braking_root`]. Gradient is with respect
/// to `(dist, v)`: `∂h/∂dist` and `normal`.
pub fn h_wall_smooth<T: Real>(dist: T, normal: &Vec3<T>, vel: &Vec3<T>, params: &CbfParams<T>, eps: T) -> (T, T) {
    let (root, slope) = smooth_braking_root(params.a_max, dist - params.d_s, eps);
    (root + normal.dot(vel), slope)
}

/// Safe-region barrier with the norm smoothed as `√(‖p‖² + eps²)` and the
/// braking root continued linearly past the boundary.
pub fn h_bounding_smooth<T: Real>(p_rel: &Vec3<T>, rel_vel: &Vec3<T>, params: &CbfParams<T>, eps: T) -> BarrierEval<T> {
    let n = (p_rel.norm_squared() + eps * eps).sqrt();
    let (root, slope) = smooth_braking_root(params.a_max, params.r - n, eps);
    let unit = *p_rel * n.recip();
    let radial = unit.dot(rel_vel);
    // ∂(pᵀw/n)/∂p = w/n − (pᵀw) p / n³
    let d_radial = *rel_vel * n.recip() - *p_rel * (p_rel.dot(rel_vel) / (n * n * n));
    BarrierEval { value: root - radial, d_p: -(unit * slope) - d_radial, d_v: -unit }
}

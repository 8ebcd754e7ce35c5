//! Reference trajectories for the three scenario cases.

use serde::{Deserialize, Serialize};

use crate::aero::{TunnelGeometry, Wall};
use crate::error::{ensure, join, ValidationError};
use crate::linalg::Vec3;
use crate::mpc::{ReferenceWindow, ScenarioCase};
use crate::scalar::Real;

/// Lissajous weave about the tunnel axis while sweeping back and forth
/// along it: `x = start_x + sweep_x·(1 − cos ω_x t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeaveParams<T> {
    pub start_x: T,
    /// Half the axial travel, m.
    pub sweep_x: T,
    pub omega_x: T,
    pub amplitude_y: T,
    pub amplitude_z: T,
    /// Angular frequencies, rad/s.
    pub omega_y: T,
    pub omega_z: T,
    /// Time over which the weave amplitude grows from zero.
    pub ramp_time: T,
}

impl<T: Real> Default for WeaveParams<T> {
    fn default() -> Self {
        Self {
            start_x: T::of(2.0),
            sweep_x: T::of(8.0),
            omega_x: T::of(0.2),
            amplitude_y: T::of(0.5),
            amplitude_z: T::of(0.5),
            omega_y: T::of(1.6),
            omega_z: T::of(2.0),
            ramp_time: T::of(4.0),
        }
    }
}

/// Hover setpoints stepping toward one wall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StandoffParams<T> {
    pub wall: Wall,
    /// Standoff decrement between dwells, m.
    pub step: T,
    /// Dwell duration, s.
    pub dwell: T,
    pub x: T,
}

impl<T: Real> Default for StandoffParams<T> {
    fn default() -> Self {
        Self { wall: Wall::Floor, step: T::of(0.05), dwell: T::of(5.0), x: T::of(5.0) }
    }
}

/// Waypoint path grazing the floor, the left sidewall and the ceiling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProximityParams<T> {
    /// Wall clearance of the grazing segments, m.
    pub clearance: T,
    /// Mean speed along each segment, m/s.
    pub speed: T,
    pub start_x: T,
    /// Length of each grazing segment along x, m.
    pub graze_length: T,
}

impl<T: Real> Default for ProximityParams<T> {
    fn default() -> Self {
        Self { clearance: T::of(0.1), speed: T::of(0.25), start_x: T::of(1.5), graze_length: T::of(2.0) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryConfig<T> {
    pub weave: WeaveParams<T>,
    pub standoff: StandoffParams<T>,
    pub proximity: ProximityParams<T>,
}

impl<T: Real> Default for TrajectoryConfig<T> {
    fn default() -> Self {
        Self { weave: WeaveParams::default(), standoff: StandoffParams::default(), proximity: ProximityParams::default() }
    }
}

impl<T: Real> TrajectoryConfig<T> {
    pub fn validate(&self, prefix: &str) -> Result<(), ValidationError> {
        let w = join(prefix, "weave");
        ensure(self.weave.ramp_time >= T::zero(), &w, "ramp_time", "must be ≥ 0")?;
        ensure(self.weave.amplitude_y >= T::zero(), &w, "amplitude_y", "must be ≥ 0")?;
        ensure(self.weave.amplitude_z >= T::zero(), &w, "amplitude_z", "must be ≥ 0")?;
        let s = join(prefix, "standoff");
        ensure(self.standoff.step > T::zero(), &s, "step", "must be > 0")?;
        ensure(self.standoff.dwell > T::zero(), &s, "dwell", "must be > 0")?;
        let p = join(prefix, "proximity");
        ensure(self.proximity.clearance > T::zero(), &p, "clearance", "must be > 0")?;
        ensure(self.proximity.speed > T::zero(), &p, "speed", "must be > 0")?;
        ensure(self.proximity.graze_length >= T::zero(), &p, "graze_length", "must be ≥ 0")
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Path<T> {
    Weave { center: Vec3<T>, params: WeaveParams<T> },
    Dwells { base: Vec3<T>, axis: usize, toward: T, wall_coord: T, standoffs: Vec<T>, dwell: T },
    Waypoints { points: Vec<Vec3<T>>, times: Vec<T> },
}

/// A time-parameterized desired position with finite-difference velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference<T> {
    path: Path<T>,
    t_s: T,
}

/// `10s³ − 15s⁴ + 6s⁵`: zero velocity and acceleration at both ends.
fn smoothstep<T: Real>(s: T) -> T {
    let s = s.clamp_to(T::zero(), T::one());
    s * s * s * (T::of(10.0) + s * (T::of(-15.0) + s * T::of(6.0)))
}

impl<T: Real> Reference<T> {
    pub fn position(&self, t: T) -> Vec3<T> {
        match &self.path {
            Path::Weave { center, params } => {
                let env = if params.ramp_time > T::zero() { smoothstep(t / params.ramp_time) } else { T::one() };
                Vec3::new(
                    params.start_x + params.sweep_x * (T::one() - (params.omega_x * t).cos()),
                    center.y + env * params.amplitude_y * (params.omega_y * t).sin(),
                    center.z + env * params.amplitude_z * (params.omega_z * t).sin(),
                )
            }
            Path::Dwells { base, axis, toward, wall_coord, standoffs, dwell } => {
                let k = (t.max(T::zero()) / *dwell).floor().to_f64_lossy() as usize;
                let d = standoffs[k.min(standoffs.len() - 1)];
                let mut p = *base;
                p[*axis] = *wall_coord - *toward * d;
                p
            }
            Path::Waypoints { points, times } => {
                if t <= times[0] {
                    return points[0];
                }
                for w in 1..times.len() {
                    if t < times[w] {
                        let s = smoothstep((t - times[w - 1]) / (times[w] - times[w - 1]));
                        return points[w - 1] + (points[w] - points[w - 1]) * s;
                    }
                }
                points[points.len() - 1]
            }
        }
    }

    /// Central difference of the position over one sample period.
    pub fn velocity(&self, t: T) -> Vec3<T> {
        let h = self.t_s * T::half();
        (self.position(t + h) - self.position(t - h)) / self.t_s
    }

    /// Samples `horizon + 1` points starting at `t`.
    pub fn window(&self, t: T, horizon: usize) -> ReferenceWindow<T> {
        let times: Vec<T> = (0..=horizon).map(|i| t + self.t_s * T::of(i as f64)).collect();
        ReferenceWindow {
            positions: times.iter().map(|&ti| self.position(ti)).collect(),
            velocities: times.iter().map(|&ti| self.velocity(ti)).collect(),
            yaws: vec![T::zero(); horizon + 1],
        }
    }

    /// Commanded standoffs of a dwell schedule, in order.
    pub fn standoffs(&self) -> Option<&[T]> {
        match &self.path {
            Path::Dwells { standoffs, .. } => Some(standoffs),
            _ => None,
        }
    }
}

/// Builds the reference for `case`.
///
/// Case I weaves about the tunnel axis from the centerline; Case II holds
/// `floor(total_time / dwell)` setpoints stepping toward one wall, ending one
/// step from it; Case III visits the floor, the left sidewall and the ceiling
/// at the configured clearance.
pub fn generate_reference<T: Real>(
    case: ScenarioCase,
    geometry: &TunnelGeometry<T>,
    params: &TrajectoryConfig<T>,
    prop_radius: T,
    total_time: T,
    t_s: T,
) -> Result<Reference<T>, ValidationError> {
    let center = geometry.center();
    let path = match case {
        ScenarioCase::BoundRegion => {
            let w = &params.weave;
            let margin = T::of(4.0) * prop_radius;
            let path = "trajectory.weave";
            ensure(geometry.width * T::half() - w.amplitude_y >= margin, path, "amplitude_y", "weave comes closer than two propeller diameters to a sidewall")?;
            ensure(geometry.height * T::half() - w.amplitude_z >= margin, path, "amplitude_z", "weave comes closer than two propeller diameters to the floor or ceiling")?;
            ensure(w.sweep_x >= T::zero(), path, "sweep_x", "must be ≥ 0")?;
            ensure(
                w.start_x >= T::zero() && w.start_x + T::two() * w.sweep_x <= geometry.length,
                path,
                "sweep_x",
                "weave leaves the tunnel along x",
            )?;
            Path::Weave { center: Vec3::new(w.start_x, center.y, center.z), params: *w }
        }
        ScenarioCase::MinStandoff => {
            let s = &params.standoff;
            let count = (total_time / s.dwell).floor().to_f64_lossy() as usize;
            ensure(count >= 1, "", "total_time", "shorter than one standoff dwell")?;
            let (axis, toward, wall_coord, half) = match s.wall {
                Wall::Floor => (2, -T::one(), T::zero(), geometry.height * T::half()),
                Wall::Ceiling => (2, T::one(), geometry.height, geometry.height * T::half()),
                Wall::Left => (1, -T::one(), T::zero(), geometry.width * T::half()),
                Wall::Right => (1, T::one(), geometry.width, geometry.width * T::half()),
            };
            let standoffs: Vec<T> = (0..count).map(|k| s.step * T::of((count - k) as f64)).collect();
            ensure(
                standoffs[0] <= half * T::two() - s.step,
                "trajectory.standoff",
                "step",
                "dwell schedule starts beyond the opposite wall",
            )?;
            ensure(s.x >= T::zero() && s.x <= geometry.length, "trajectory.standoff", "x", "outside the tunnel")?;
            Path::Dwells { base: Vec3::new(s.x, center.y, center.z), axis, toward, wall_coord, standoffs, dwell: s.dwell }
        }
        ScenarioCase::CloseProximity => {
            let p = &params.proximity;
            let c = p.clearance;
            ensure(c < geometry.height * T::half() && c < geometry.width * T::half(), "trajectory.proximity", "clearance", "larger than half the tunnel section")?;
            let g = p.graze_length;
            let gap = T::two();
            let mut x = p.start_x;
            let mut pts = vec![Vec3::new(x, center.y, center.z)];
            let mut push = |dx: T, y: T, z: T| {
                x += dx;
                pts.push(Vec3::new(x, y, z));
            };
            push(gap, center.y, c);
            push(g, center.y, c);
            push(gap, center.y, center.z);
            push(gap, c, center.z);
            push(g, c, center.z);
            push(gap, center.y, center.z);
            push(gap, center.y, geometry.height - c);
            push(g, center.y, geometry.height - c);
            push(gap, center.y, center.z);
            ensure(x <= geometry.length, "trajectory.proximity", "start_x", "path leaves the tunnel along x")?;
            let mut times = vec![T::zero()];
            for w in 1..pts.len() {
                let d = (pts[w] - pts[w - 1]).norm();
                let last = times[w - 1];
                times.push(last + d / p.speed);
            }
            Path::Waypoints { points: pts, times }
        }
    };
    Ok(Reference { path, t_s })
}

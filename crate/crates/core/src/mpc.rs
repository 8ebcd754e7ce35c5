//! Receding-horizon outer-loop controller over a per-axis double-integrator
//! model, with Naive, hard-constraint (HC) and CBF constraint modes.
//!
//! The decision vector stacks `[ax, ay, az, yaw_acc]` for each of the `N`
//! steps. Predicted states are linear in the inputs, so costs, their
//! gradients and the (constant) cost Hessian are evaluated in closed form.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aero::{TunnelGeometry, Wall};
use crate::cbf::{self, h_bounding_smooth, h_wall_smooth, invariance_residual, CbfParams};
use crate::dynamics::{euler_rates, UavState};
use crate::error::{ensure, join, ValidationError};
use crate::linalg::Vec3;
use crate::optimizer::{solve, EvalError, NlpProblem, NlpSolution, SolveOptions, SolveStatus};
use crate::scalar::Real;

/// Inputs per horizon step.
pub const INPUTS: usize = 4;

/// Smoothing length for barrier square roots and norms inside the optimizer.
const SMOOTHING: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerMode {
    #[default]
    Naive,
    Hc,
    Cbf,
}

impl ControllerMode {
    pub const ALL: [ControllerMode; 3] = [ControllerMode::Naive, ControllerMode::Hc, ControllerMode::Cbf];

    pub fn name(self) -> &'static str {
        match self {
            ControllerMode::Naive => "naive",
            ControllerMode::Hc => "hc",
            ControllerMode::Cbf => "cbf",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioCase {
    /// Track a trajectory while staying inside a moving safe sphere.
    BoundRegion,
    /// Hover ever closer to a surface.
    MinStandoff,
    /// Fly a path grazing the floor, a sidewall and the ceiling.
    CloseProximity,
}

impl ScenarioCase {
    pub const ALL: [ScenarioCase; 3] = [ScenarioCase::BoundRegion, ScenarioCase::MinStandoff, ScenarioCase::CloseProximity];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioCase::BoundRegion => "bound_region",
            ScenarioCase::MinStandoff => "min_standoff",
            ScenarioCase::CloseProximity => "close_proximity",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MpcState<T> {
    pub position: Vec3<T>,
    pub velocity: Vec3<T>,
    pub yaw: T,
    pub yaw_rate: T,
}

impl<T: Real> MpcState<T> {
    /// Collapses the full plant state onto the outer-loop model.
    pub fn from_plant(s: &UavState<T>) -> Self {
        Self {
            position: s.position,
            velocity: s.velocity,
            yaw: s.attitude.z,
            yaw_rate: euler_rates(&s.attitude, &s.body_rates).z,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.is_finite() && self.velocity.is_finite() && self.yaw.is_finite() && self.yaw_rate.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MpcInput<T> {
    pub accel: Vec3<T>,
    pub yaw_accel: T,
}

impl<T: Real> MpcInput<T> {
    pub fn zero() -> Self {
        Self { accel: Vec3::zeros(), yaw_accel: T::zero() }
    }

    pub fn to_array(&self) -> [T; 4] {
        [self.accel.x, self.accel.y, self.accel.z, self.yaw_accel]
    }

    fn from_slice(u: &[T]) -> Self {
        Self { accel: Vec3::new(u[0], u[1], u[2]), yaw_accel: u[3] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcConfig<T> {
    pub horizon: usize,
    pub t_s: T,
    /// Diagonal of the stage position weight.
    pub w1: Vec3<T>,
    /// Diagonal of the terminal position weight.
    pub ws1: Vec3<T>,
    /// Diagonal of the stage velocity weight.
    pub w2: Vec3<T>,
    /// Diagonal of the terminal velocity weight.
    pub ws2: Vec3<T>,
    /// Per-axis bound on predicted velocity, m/s.
    pub velocity_max: T,
    /// Per-axis bound on commanded acceleration, m/s².
    pub accel_max: T,
    /// Bound on commanded yaw acceleration, rad/s².
    pub yaw_accel_max: T,
    /// Weight on predicted yaw error, every step.
    pub w_yaw: T,
    /// Weight on predicted yaw rate, every step.
    pub w_yaw_rate: T,
    /// Set from the scenario's controller choice.
    #[serde(skip)]
    pub mode: ControllerMode,
    pub solver: SolveOptions<T>,
}

impl<T: Real> Default for MpcConfig<T> {
    fn default() -> Self {
        Self {
            horizon: 10,
            t_s: T::of(0.1),
            w1: Vec3::splat(T::of(10.0)),
            ws1: Vec3::splat(T::of(50.0)),
            w2: Vec3::splat(T::two()),
            ws2: Vec3::splat(T::of(10.0)),
            velocity_max: T::two(),
            accel_max: T::of(3.0),
            yaw_accel_max: T::two(),
            w_yaw: T::one(),
            w_yaw_rate: T::of(0.2),
            mode: ControllerMode::Naive,
            solver: SolveOptions::default(),
        }
    }
}

impl<T: Real> MpcConfig<T> {
    pub fn validate(&self, prefix: &str) -> Result<(), ValidationError> {
        ensure(self.horizon >= 1, prefix, "horizon", "must be ≥ 1")?;
        ensure(self.t_s > T::zero(), prefix, "t_s", "must be > 0")?;
        for (name, w) in [("w1", &self.w1), ("ws1", &self.ws1), ("w2", &self.w2), ("ws2", &self.ws2)] {
            ensure(w.x >= T::zero() && w.y >= T::zero() && w.z >= T::zero(), prefix, name, "weights must be ≥ 0")?;
        }
        ensure(self.velocity_max > T::zero(), prefix, "velocity_max", "must be > 0")?;
        ensure(self.accel_max > T::zero(), prefix, "accel_max", "must be > 0")?;
        ensure(self.yaw_accel_max > T::zero(), prefix, "yaw_accel_max", "must be > 0")?;
        ensure(self.w_yaw >= T::zero(), prefix, "w_yaw", "must be ≥ 0")?;
        ensure(self.w_yaw_rate >= T::zero(), prefix, "w_yaw_rate", "must be ≥ 0")?;
        let s = join(prefix, "solver");
        ensure(self.solver.max_iter >= 1, &s, "max_iter", "must be ≥ 1")?;
        ensure(self.solver.tol_opt > T::zero(), &s, "tol_opt", "must be > 0")?;
        ensure(self.solver.tol_feas > T::zero(), &s, "tol_feas", "must be > 0")?;
        ensure(self.solver.infeasible_threshold >= self.solver.tol_feas, &s, "infeasible_threshold", "must be ≥ tol_feas")
    }

    pub fn decision_len(&self) -> usize {
        self.horizon * INPUTS
    }
}

/// Desired trajectory samples over the horizon (N + 1 each).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReferenceWindow<T> {
    pub positions: Vec<Vec3<T>>,
    pub velocities: Vec<Vec3<T>>,
    pub yaws: Vec<T>,
}

impl<T: Real> ReferenceWindow<T> {
    /// Constant reference at `p` with zero velocity.
    pub fn hold(p: Vec3<T>, horizon: usize) -> Self {
        Self { positions: vec![p; horizon + 1], velocities: vec![Vec3::zeros(); horizon + 1], yaws: vec![T::zero(); horizon + 1] }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MpcError {
    #[error("non-finite measured state")]
    NonFiniteState,
    #[error("reference window has {got} samples, expected {expected}")]
    ReferenceLength { got: usize, expected: usize },
    #[error("optimizer failure: {0}")]
    Solver(String),
}

/// Coefficient of `u_j` in `p_i`: `(i − j − ½)·t²` for `j < i`.
#[inline]
fn pos_coeff<T: Real>(i: usize, j: usize, t: T) -> T {
    (T::of((i - j) as f64) - T::half()) * t * t
}

/// Rolls the double integrator forward under piecewise-constant inputs.
pub fn predict<T: Real>(state: &MpcState<T>, inputs: &[MpcInput<T>], t_s: T) -> Vec<MpcState<T>> {
    let mut out = Vec::with_capacity(inputs.len() + 1);
    let mut s = *state;
    out.push(s);
    let half = T::half() * t_s * t_s;
    for u in inputs {
        s = MpcState {
            position: s.position + s.velocity * t_s + u.accel * half,
            velocity: s.velocity + u.accel * t_s,
            yaw: s.yaw + s.yaw_rate * t_s + u.yaw_accel * half,
            yaw_rate: s.yaw_rate + u.yaw_accel * t_s,
        };
        out.push(s);
    }
    out
}

fn weighted<T: Real>(e: &Vec3<T>, w: &Vec3<T>) -> T {
    e.x * e.x * w.x + e.y * e.y * w.y + e.z * e.z * w.z
}

/// `Σ_{i<N} ‖p_i − pᵈ_i‖²_{W1} + ‖p_N − pᵈ_N‖²_{Ws1}`.
pub fn tracking_cost<T: Real>(predicted: &[MpcState<T>], reference: &ReferenceWindow<T>, config: &MpcConfig<T>) -> T {
    let n = predicted.len() - 1;
    predicted
        .iter()
        .zip(&reference.positions)
        .enumerate()
        .map(|(i, (s, r))| weighted(&(s.position - *r), if i == n { &config.ws1 } else { &config.w1 }))
        .sum()
}

/// `Σ_{i<N} ‖ṗ_i‖²_{W2} + ‖ṗ_N‖²_{Ws2}`.
pub fn velocity_cost<T: Real>(predicted: &[MpcState<T>], config: &MpcConfig<T>) -> T {
    let n = predicted.len() - 1;
    predicted
        .iter()
        .enumerate()
        .map(|(i, s)| weighted(&s.velocity, if i == n { &config.ws2 } else { &config.w2 }))
        .sum()
}

/// One inequality of the assembled constraint set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    /// `±v_i[axis] ≤ v_max`, `upper` selects the sign.
    Velocity { step: usize, axis: usize, upper: bool },
    /// `r − ‖p_i − c_i‖ ≥ 0`
    HcRegion { step: usize },
    /// `dist_wall(p_i) − d_s ≥ 0`
    HcWall { step: usize, wall: Wall },
    /// Safe-region invariance residual between steps `i` and `i + 1`.
    CbfRegion { step: usize },
    /// Wall invariance residual between steps `i` and `i + 1`.
    CbfWall { step: usize, wall: Wall },
}

impl ConstraintKind {
    pub fn is_safety(&self) -> bool {
        !matches!(self, ConstraintKind::Velocity { .. })
    }
}

/// Velocity-bound rows followed by the mode/case safety rows.
pub fn assemble_constraints(mode: ControllerMode, case: ScenarioCase, horizon: usize) -> Vec<ConstraintKind> {
    let mut rows = Vec::new();
    for step in 1..=horizon {
        for axis in 0..3 {
            rows.push(ConstraintKind::Velocity { step, axis, upper: true });
            rows.push(ConstraintKind::Velocity { step, axis, upper: false });
        }
    }
    match (mode, case) {
        (ControllerMode::Naive, _) => {}
        (ControllerMode::Hc, ScenarioCase::BoundRegion) => rows.extend((1..=horizon).map(|step| ConstraintKind::HcRegion { step })),
        (ControllerMode::Hc, _) => {
            for step in 1..=horizon {
                rows.extend(Wall::ALL.iter().map(|&wall| ConstraintKind::HcWall { step, wall }));
            }
        }
        (ControllerMode::Cbf, ScenarioCase::BoundRegion) => rows.extend((0..horizon).map(|step| ConstraintKind::CbfRegion { step })),
        (ControllerMode::Cbf, _) => {
            for step in 0..horizon {
                rows.extend(Wall::ALL.iter().map(|&wall| ConstraintKind::CbfWall { step, wall }));
            }
        }
    }
    rows
}

/// Barriers of `case` evaluated exactly at a measured state; errors mark a
/// barrier already violated.
pub fn measured_barriers<T: Real>(
    case: ScenarioCase,
    position: &Vec3<T>,
    velocity: &Vec3<T>,
    ref_position: &Vec3<T>,
    ref_velocity: &Vec3<T>,
    geometry: &TunnelGeometry<T>,
    params: &CbfParams<T>,
) -> Vec<Result<T, cbf::CbfError>> {
    match case {
        ScenarioCase::BoundRegion => vec![cbf::h_bounding(&(*position - *ref_position), velocity, ref_velocity, params)],
        _ => Wall::ALL.iter().map(|&w| cbf::h_wall(&geometry.wall_vector(w, position), velocity, params)).collect(),
    }
}

/// Smallest measured barrier value, `−∞` when any is violated.
pub fn min_barrier<T: Real>(values: &[Result<T, cbf::CbfError>]) -> T {
    values.iter().fold(T::infinity(), |m, v| match v {
        Ok(h) => m.min(*h),
        Err(_) => T::neg_infinity(),
    })
}

/// The outer-loop optimal control problem for one step.
pub struct MpcProblem<'a, T> {
    pub state: MpcState<T>,
    pub reference: &'a ReferenceWindow<T>,
    pub config: &'a MpcConfig<T>,
    pub cbf: &'a CbfParams<T>,
    pub geometry: &'a TunnelGeometry<T>,
    pub rows: Vec<ConstraintKind>,
}

/// `(step, ∂/∂p, ∂/∂v)` of one constraint row.
type Sensitivity<T> = (usize, Vec3<T>, Vec3<T>);

struct Rollout<T> {
    p: Vec<Vec3<T>>,
    v: Vec<Vec3<T>>,
}

/// Per-step barrier value with its sensitivity to the step's position and
/// velocity.
struct BarrierPoint<T> {
    h: T,
    d_p: Vec3<T>,
    d_v: Vec3<T>,
}

impl<'a, T: Real> MpcProblem<'a, T> {
    pub fn new(
        state: MpcState<T>,
        reference: &'a ReferenceWindow<T>,
        config: &'a MpcConfig<T>,
        cbf: &'a CbfParams<T>,
        geometry: &'a TunnelGeometry<T>,
        case: ScenarioCase,
    ) -> Self {
        Self { state, reference, config, cbf, geometry, rows: assemble_constraints(config.mode, case, config.horizon) }
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn rollout(&self, u: &[T]) -> Rollout<T> {
        let n = self.horizon();
        let t = self.config.t_s;
        let mut p = Vec::with_capacity(n + 1);
        let mut v = Vec::with_capacity(n + 1);
        let (mut pi, mut vi) = (self.state.position, self.state.velocity);
        p.push(pi);
        v.push(vi);
        let half = T::half() * t * t;
        for j in 0..n {
            let a = Vec3::new(u[j * INPUTS], u[j * INPUTS + 1], u[j * INPUTS + 2]);
            pi = pi + vi * t + a * half;
            vi += a * t;
            p.push(pi);
            v.push(vi);
        }
        Rollout { p, v }
    }

    /// Predicted `(yaw, yaw rate)` at steps `0..=N`.
    fn yaw_rollout(&self, u: &[T]) -> Vec<(T, T)> {
        let t = self.config.t_s;
        let mut out = Vec::with_capacity(self.horizon() + 1);
        let (mut y, mut r) = (self.state.yaw, self.state.yaw_rate);
        out.push((y, r));
        for j in 0..self.horizon() {
            let a = u[j * INPUTS + 3];
            y = y + r * t + T::half() * a * t * t;
            r += a * t;
            out.push((y, r));
        }
        out
    }

    fn stage_weights(&self, i: usize) -> (Vec3<T>, Vec3<T>) {
        if i == self.horizon() {
            (self.config.ws1, self.config.ws2)
        } else {
            (self.config.w1, self.config.w2)
        }
    }

    fn yaw_error(&self, yaw: &[(T, T)]) -> Vec<(T, T)> {
        yaw.iter().zip(&self.reference.yaws).map(|(&(y, r), &yd)| (y - yd, r)).collect()
    }

    fn barrier(&self, kind: ConstraintKind, i: usize, ro: &Rollout<T>) -> BarrierPoint<T> {
        let eps = T::of(SMOOTHING);
        match kind {
            ConstraintKind::CbfRegion { .. } => {
                let e = h_bounding_smooth(
                    &(ro.p[i] - self.reference.positions[i]),
                    &(ro.v[i] - self.reference.velocities[i]),
                    self.cbf,
                    eps,
                );
                BarrierPoint { h: e.value, d_p: e.d_p, d_v: e.d_v }
            }
            ConstraintKind::CbfWall { wall, .. } => {
                let normal = TunnelGeometry::inward_normal(wall);
                let dist = self.geometry.wall_distance(wall, &ro.p[i]);
                let (h, slope) = h_wall_smooth(dist, &normal, &ro.v[i], self.cbf, eps);
                BarrierPoint { h, d_p: normal * slope, d_v: normal }
            }
            _ => unreachable!("not a barrier row"),
        }
    }

    /// Value of row `kind` and its sensitivities `(∂/∂p_i, ∂/∂v_i)` for the
    /// steps it depends on.
    fn row(&self, kind: ConstraintKind, ro: &Rollout<T>) -> (T, Vec<Sensitivity<T>>) {
        let z = Vec3::zeros();
        match kind {
            ConstraintKind::Velocity { step, axis, upper } => {
                let sign = if upper { -T::one() } else { T::one() };
                let mut dv = Vec3::zeros();
                match axis {
                    0 => dv.x = sign,
                    1 => dv.y = sign,
                    _ => dv.z = sign,
                }
                (self.config.velocity_max + sign * ro.v[step][axis], vec![(step, z, dv)])
            }
            ConstraintKind::HcRegion { step } => {
                let e = ro.p[step] - self.reference.positions[step];
                let n = e.norm();
                let grad = if n > T::zero() { -(e * n.recip()) } else { Vec3::zeros() };
                (self.cbf.r - n, vec![(step, grad, z)])
            }
            ConstraintKind::HcWall { step, wall } => {
                let d = self.geometry.wall_distance(wall, &ro.p[step]);
                (d - self.cbf.d_s, vec![(step, TunnelGeometry::inward_normal(wall), z)])
            }
            ConstraintKind::CbfRegion { step } | ConstraintKind::CbfWall { step, .. } => {
                let now = self.barrier(kind, step, ro);
                let next = self.barrier(kind, step + 1, ro);
                let t = self.config.t_s;
                let value = invariance_residual(now.h, next.h, t, self.cbf);
                let inv_t = t.recip();
                let z_exp = self.cbf.z_exp as i32;
                let relax = self.cbf.gamma * T::of(z_exp as f64) * now.h.powi(z_exp - 1);
                let k_now = relax - inv_t;
                (value, vec![(step, now.d_p * k_now, now.d_v * k_now), (step + 1, next.d_p * inv_t, next.d_v * inv_t)])
            }
        }
    }

    /// Scatters step sensitivities into a row of `∂/∂u`.
    fn scatter(&self, sens: &[(usize, Vec3<T>, Vec3<T>)], out: &mut [T]) {
        let t = self.config.t_s;
        for &(i, dp, dv) in sens {
            for j in 0..i {
                let k = pos_coeff(i, j, t);
                let g = dp * k + dv * t;
                out[j * INPUTS] += g.x;
                out[j * INPUTS + 1] += g.y;
                out[j * INPUTS + 2] += g.z;
            }
        }
    }
}

impl<T: Real> NlpProblem<T> for MpcProblem<'_, T> {
    fn dim(&self) -> usize {
        self.config.decision_len()
    }

    fn num_constraints(&self) -> usize {
        self.rows.len()
    }

    fn lower_bounds(&self) -> Vec<T> {
        let c = self.config;
        (0..self.dim()).map(|k| if k % INPUTS == 3 { -c.yaw_accel_max } else { -c.accel_max }).collect()
    }

    fn upper_bounds(&self) -> Vec<T> {
        let c = self.config;
        (0..self.dim()).map(|k| if k % INPUTS == 3 { c.yaw_accel_max } else { c.accel_max }).collect()
    }

    fn objective(&self, u: &[T]) -> Result<T, EvalError> {
        let ro = self.rollout(u);
        let mut cost = T::zero();
        for i in 0..=self.horizon() {
            let (wp, wv) = self.stage_weights(i);
            cost += weighted(&(ro.p[i] - self.reference.positions[i]), &wp) + weighted(&ro.v[i], &wv);
        }
        let (wy, wr) = (self.config.w_yaw, self.config.w_yaw_rate);
        for &(e, r) in self.yaw_error(&self.yaw_rollout(u)).iter().skip(1) {
            cost += wy * e * e + wr * r * r;
        }
        Ok(cost)
    }

    fn gradient(&self, u: &[T]) -> Result<Vec<T>, EvalError> {
        let n = self.horizon();
        let t = self.config.t_s;
        let ro = self.rollout(u);
        let mut g = vec![T::zero(); self.dim()];
        let sens: Vec<(usize, Vec3<T>, Vec3<T>)> = (1..=n)
            .map(|i| {
                let (wp, wv) = self.stage_weights(i);
                let ep = (ro.p[i] - self.reference.positions[i]).component_mul(&wp) * T::two();
                let ev = ro.v[i].component_mul(&wv) * T::two();
                (i, ep, ev)
            })
            .collect();
        self.scatter(&sens, &mut g);
        let (wy, wr) = (self.config.w_yaw * T::two(), self.config.w_yaw_rate * T::two());
        for (i, &(e, r)) in self.yaw_error(&self.yaw_rollout(u)).iter().enumerate().skip(1) {
            for j in 0..i {
                g[j * INPUTS + 3] += wy * e * pos_coeff(i, j, t) + wr * r * t;
            }
        }
        Ok(g)
    }

    fn constraints(&self, u: &[T], out: &mut [T]) -> Result<(), EvalError> {
        let ro = self.rollout(u);
        for (o, &kind) in out.iter_mut().zip(&self.rows) {
            *o = self.row(kind, &ro).0;
        }
        Ok(())
    }

    fn jacobian(&self, u: &[T]) -> Result<Vec<T>, EvalError> {
        let ro = self.rollout(u);
        let n = self.dim();
        let mut jac = vec![T::zero(); self.rows.len() * n];
        for (r, &kind) in self.rows.iter().enumerate() {
            let (_, sens) = self.row(kind, &ro);
            self.scatter(&sens, &mut jac[r * n..(r + 1) * n]);
        }
        Ok(jac)
    }

    fn initial_hessian(&self) -> Option<Vec<T>> {
        Some(cost_hessian(self.config))
    }
}

/// Exact Hessian of the MPC objective (constant in the inputs).
pub fn cost_hessian<T: Real>(config: &MpcConfig<T>) -> Vec<T> {
    let n = config.horizon;
    let t = config.t_s;
    let dim = n * INPUTS;
    let mut h = vec![T::zero(); dim * dim];
    for i in 1..=n {
        let (wp, wv) = if i == n { (config.ws1, config.ws2) } else { (config.w1, config.w2) };
        for j in 0..i {
            for l in 0..i {
                let (cj, cl) = (pos_coeff(i, j, t), pos_coeff(i, l, t));
                for a in 0..3 {
                    let v = T::two() * (wp[a] * cj * cl + wv[a] * t * t);
                    h[(j * INPUTS + a) * dim + l * INPUTS + a] += v;
                }
                let yw = T::two() * (config.w_yaw * cj * cl + config.w_yaw_rate * t * t);
                h[(j * INPUTS + 3) * dim + l * INPUTS + 3] += yw;
            }
        }
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcDiagnostics<T> {
    /// `None` when the solver was skipped.
    pub status: Option<SolveStatus>,
    pub iterations: usize,
    pub objective: T,
    pub max_constraint_violation: T,
    pub relaxed: bool,
    /// A barrier was already violated at the measured state.
    pub infeasible_at_start: bool,
    /// The braking fallback replaced the optimizer output.
    pub fallback: bool,
    /// Full decision vector (for warm starting).
    pub solution: Vec<T>,
    pub message: Option<String>,
}

impl<T: Real> MpcDiagnostics<T> {
    /// Short status label for logs.
    pub fn label(&self) -> &'static str {
        match (self.fallback, self.infeasible_at_start, self.status) {
            (true, true, _) => "fallback_start",
            (true, false, _) => "fallback",
            (false, _, Some(s)) => s.as_str(),
            (false, _, None) => "skipped",
        }
    }
}

/// Maximal braking against `rel_vel`, clamped per axis.
pub fn braking_input<T: Real>(rel_vel: &Vec3<T>, a_max: T, config: &MpcConfig<T>) -> MpcInput<T> {
    let speed = rel_vel.norm();
    if speed == T::zero() {
        return MpcInput::zero();
    }
    let lim = config.accel_max;
    let a = (*rel_vel * (-a_max / speed)).map(|v| v.clamp_to(-lim, lim));
    MpcInput { accel: a, yaw_accel: T::zero() }
}

/// Shifts a previous plan one step forward, repeating the final input.
pub fn shift_warm_start<T: Real>(prev: &[T]) -> Vec<T> {
    if prev.len() <= INPUTS {
        return prev.to_vec();
    }
    let mut out = prev[INPUTS..].to_vec();
    out.extend_from_slice(&prev[prev.len() - INPUTS..]);
    out
}

/// One receding-horizon step: solve, return the first input.
///
/// In CBF mode a barrier already violated at the measured state skips the
/// solve; that and an infeasible solve both return maximal braking (relative
/// to the reference velocity for the moving safe region).
pub fn solve_step<T: Real>(
    state: &MpcState<T>,
    reference: &ReferenceWindow<T>,
    config: &MpcConfig<T>,
    case: ScenarioCase,
    cbf_params: &CbfParams<T>,
    geometry: &TunnelGeometry<T>,
    warm_start: Option<&[T]>,
) -> Result<(MpcInput<T>, MpcDiagnostics<T>), MpcError> {
    if !state.is_finite() {
        return Err(MpcError::NonFiniteState);
    }
    let expected = config.horizon + 1;
    if reference.positions.len() != expected || reference.velocities.len() != expected || reference.yaws.len() != expected {
        return Err(MpcError::ReferenceLength { got: reference.len(), expected });
    }
    let brake_against = match case {
        ScenarioCase::BoundRegion => state.velocity - reference.velocities[0],
        _ => state.velocity,
    };
    let dim = config.decision_len();
    if config.mode == ControllerMode::Cbf {
        let measured = measured_barriers(
            case,
            &state.position,
            &state.velocity,
            &reference.positions[0],
            &reference.velocities[0],
            geometry,
            cbf_params,
        );
        if let Some(Err(e)) = measured.into_iter().find(|m| m.is_err()) {
            return Ok((
                braking_input(&brake_against, cbf_params.a_max, config),
                MpcDiagnostics {
                    status: None,
                    iterations: 0,
                    objective: T::nan(),
                    max_constraint_violation: T::infinity(),
                    relaxed: false,
                    infeasible_at_start: true,
                    fallback: true,
                    solution: vec![T::zero(); dim],
                    message: Some(e.to_string()),
                },
            ));
        }
    }
    let problem = MpcProblem::new(*state, reference, config, cbf_params, geometry, case);
    let x0 = match warm_start {
        Some(w) if w.len() == dim => w.to_vec(),
        _ => vec![T::zero(); dim],
    };
    let sol: NlpSolution<T> = solve(&problem, &x0, &config.solver).map_err(|e| MpcError::Solver(e.to_string()))?;
    let mut diag = MpcDiagnostics {
        status: Some(sol.status),
        iterations: sol.iterations,
        objective: sol.objective_value,
        max_constraint_violation: sol.max_constraint_violation,
        relaxed: sol.relaxed,
        infeasible_at_start: false,
        fallback: false,
        solution: sol.x_opt,
        message: sol.message,
    };
    if sol.status == SolveStatus::Infeasible {
        diag.fallback = true;
        return Ok((braking_input(&brake_against, cbf_params.a_max, config), diag));
    }
    Ok((MpcInput::from_slice(&diag.solution[..INPUTS]), diag))
}

/// Stateful wrapper carrying the warm start between steps.
#[derive(Debug, Clone)]
pub struct MpcController<T> {
    pub config: MpcConfig<T>,
    pub case: ScenarioCase,
    pub cbf: CbfParams<T>,
    pub geometry: TunnelGeometry<T>,
    warm: Option<Vec<T>>,
}

impl<T: Real> MpcController<T> {
    pub fn new(config: MpcConfig<T>, case: ScenarioCase, cbf: CbfParams<T>, geometry: TunnelGeometry<T>) -> Self {
        Self { config, case, cbf, geometry, warm: None }
    }

    pub fn step(&mut self, state: &MpcState<T>, reference: &ReferenceWindow<T>) -> Result<(MpcInput<T>, MpcDiagnostics<T>), MpcError> {
        let warm = self.warm.as_deref().map(shift_warm_start);
        let out = solve_step(state, reference, &self.config, self.case, &self.cbf, &self.geometry, warm.as_deref())?;
        self.warm = if out.1.fallback { None } else { Some(out.1.solution.clone()) };
        Ok(out)
    }
}

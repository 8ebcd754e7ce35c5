//! Near-surface aerodynamic disturbances inside a rectangular tunnel.
//!
//! Ground and ceiling effects are thrust ratios `T_surface / T_∞`; they are
//! turned into net vertical forces as `hover_thrust · (ratio − 1)`. The
//! sidewall effect is a random pull toward the wall whose magnitude ramps
//! linearly from the wall out to a cutoff distance. All randomness goes
//! through the caller's RNG.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, UnitSphere};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{UavParams, UavState, Wrench};
use crate::error::{ensure, join, ValidationError};
use crate::linalg::Vec3;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AeroError {
    #[error("inside ground-effect singularity: height {height} ≤ R/4 = {limit}")]
    GroundSingularity { height: f64, limit: f64 },
    #[error("inside ceiling-effect singularity: clearance {clearance} m")]
    CeilingSingularity { clearance: f64 },
    #[error("position ({y}, {z}) is outside the tunnel cross-section")]
    OutsideTunnel { y: f64, z: f64 },
}

/// Least-squares coefficients of the ceiling-effect curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CeilingCoeffs<T> {
    pub a1: T,
    /// m
    pub a2: T,
}

impl<T: Real> Default for CeilingCoeffs<T> {
    fn default() -> Self {
        Self { a1: T::two(), a2: T::of(0.04) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SidewallParams<T> {
    /// Mean pull toward the wall, N.
    pub mean_xy: T,
    pub std_xy: T,
    /// Bound on the vertical component beyond its 3σ spread, N.
    pub mean_z: T,
    pub std_z: T,
    /// Cutoff distance as a multiple of the propeller diameter.
    pub cutoff_mult: T,
}

impl<T: Real> Default for SidewallParams<T> {
    fn default() -> Self {
        Self {
            mean_xy: T::of(0.052),
            std_xy: T::of(0.022),
            mean_z: T::of(0.062),
            std_z: T::of(0.065),
            cutoff_mult: T::two(),
        }
    }
}

impl<T: Real> SidewallParams<T> {
    pub fn cutoff(&self, prop_radius: T) -> T {
        self.cutoff_mult * T::two() * prop_radius
    }

    /// Largest wall-normal pull a single sample can produce.
    pub fn max_normal_force(&self) -> T {
        self.mean_xy + T::of(3.0) * self.std_xy
    }

    pub fn zeroed() -> Self {
        Self {
            mean_xy: T::zero(),
            std_xy: T::zero(),
            mean_z: T::zero(),
            std_z: T::zero(),
            cutoff_mult: T::one(),
        }
    }
}

/// Rectangular cross-section: sidewalls at `y = 0` and `y = width`, floor at
/// `z = 0`, ceiling at `z = height`; open along x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TunnelGeometry<T> {
    pub width: T,
    pub height: T,
    pub length: T,
}

impl<T: Real> Default for TunnelGeometry<T> {
    fn default() -> Self {
        Self { width: T::two(), height: T::two(), length: T::of(20.0) }
    }
}

/// The four bounding surfaces, in logging order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Wall {
    Floor,
    Ceiling,
    Left,
    Right,
}

impl Wall {
    pub const ALL: [Wall; 4] = [Wall::Floor, Wall::Ceiling, Wall::Left, Wall::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Wall::Floor => "floor",
            Wall::Ceiling => "ceiling",
            Wall::Left => "left",
            Wall::Right => "right",
        }
    }
}

impl<T: Real> TunnelGeometry<T> {
    pub fn validate(&self, prefix: &str) -> Result<(), ValidationError> {
        ensure(self.width > T::zero(), prefix, "width", "must be > 0")?;
        ensure(self.height > T::zero(), prefix, "height", "must be > 0")?;
        ensure(self.length > T::zero(), prefix, "length", "must be > 0")
    }

    /// Distances to floor, ceiling, left and right walls.
    pub fn wall_distances(&self, p: &Vec3<T>) -> [T; 4] {
        [p.z, self.height - p.z, p.y, self.width - p.y]
    }

    pub fn wall_distance(&self, wall: Wall, p: &Vec3<T>) -> T {
        self.wall_distances(p)[wall.index()]
    }

    /// Unit normal of `wall` pointing into the tunnel.
    pub fn inward_normal(wall: Wall) -> Vec3<T> {
        match wall {
            Wall::Floor => Vec3::unit_z(),
            Wall::Ceiling => -Vec3::unit_z(),
            Wall::Left => Vec3::unit_y(),
            Wall::Right => -Vec3::unit_y(),
        }
    }

    /// Perpendicular vector from `wall` to `p`.
    pub fn wall_vector(&self, wall: Wall, p: &Vec3<T>) -> Vec3<T> {
        Self::inward_normal(wall) * self.wall_distance(wall, p)
    }

    pub fn center(&self) -> Vec3<T> {
        Vec3::new(self.length * T::half(), self.width * T::half(), self.height * T::half())
    }

    pub fn contains_cross_section(&self, p: &Vec3<T>) -> bool {
        p.y > T::zero() && p.y < self.width && p.z > T::zero() && p.z < self.height
    }
}

/// Which effects are active plus their coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AeroConfig<T> {
    pub ground_effect: bool,
    pub ceiling_effect: bool,
    pub sidewall_effect: bool,
    pub ceiling: CeilingCoeffs<T>,
    pub sidewall: SidewallParams<T>,
    /// Multiplier on the total force when a sidewall and a horizontal
    /// surface are both within the sidewall cutoff.
    pub corner_gain: T,
}

impl<T: Real> Default for AeroConfig<T> {
    fn default() -> Self {
        Self {
            ground_effect: true,
            ceiling_effect: true,
            sidewall_effect: true,
            ceiling: CeilingCoeffs::default(),
            sidewall: SidewallParams::default(),
            corner_gain: T::one(),
        }
    }
}

impl<T: Real> AeroConfig<T> {
    pub fn disabled() -> Self {
        Self { ground_effect: false, ceiling_effect: false, sidewall_effect: false, ..Self::default() }
    }

    pub fn validate(&self, prefix: &str) -> Result<(), ValidationError> {
        let c = join(prefix, "ceiling");
        ensure(self.ceiling.a1 > T::zero(), &c, "a1", "must be > 0")?;
        ensure(self.ceiling.a2 >= T::zero(), &c, "a2", "must be ≥ 0")?;
        let s = join(prefix, "sidewall");
        let sw = &self.sidewall;
        ensure(sw.mean_xy >= T::zero(), &s, "mean_xy", "must be ≥ 0")?;
        ensure(sw.mean_z >= T::zero(), &s, "mean_z", "must be ≥ 0")?;
        ensure(sw.std_xy >= T::zero(), &s, "std_xy", "must be ≥ 0")?;
        ensure(sw.std_z >= T::zero(), &s, "std_z", "must be ≥ 0")?;
        ensure(sw.cutoff_mult > T::zero(), &s, "cutoff_mult", "must be > 0")?;
        ensure(self.corner_gain >= T::zero(), prefix, "corner_gain", "must be ≥ 0")
    }
}

/// Thrust ratio in ground effect, `1 / (1 − (R/4z)²)`.
pub fn ground_effect_ratio<T: Real>(z: T, prop_radius: T) -> Result<T, AeroError> {
    let limit = prop_radius / T::of(4.0);
    if !(z > limit) {
        return Err(AeroError::GroundSingularity { height: z.to_f64_lossy(), limit: limit.to_f64_lossy() });
    }
    let q = limit / z;
    Ok((T::one() - q * q).recip())
}

/// Thrust ratio below a ceiling, `1 / (1 − (1/a1)(R/(a2 + dz))²)`.
pub fn ceiling_effect_ratio<T: Real>(dz: T, prop_radius: T, coeffs: &CeilingCoeffs<T>) -> Result<T, AeroError> {
    let singular = || AeroError::CeilingSingularity { clearance: dz.to_f64_lossy() };
    let gap = coeffs.a2 + dz;
    if !(gap > T::zero()) {
        return Err(singular());
    }
    let q = prop_radius / gap;
    let denom = T::one() - q * q / coeffs.a1;
    if !(denom > T::zero()) {
        return Err(singular());
    }
    Ok(denom.recip())
}

fn normal_sample<T: Real, R: Rng + ?Sized>(rng: &mut R) -> T {
    let n: f64 = StandardNormal.sample(rng);
    T::of(n)
}

fn proximity_ramp<T: Real>(distance: T, cutoff: T) -> T {
    if distance >= cutoff {
        T::zero()
    } else {
        T::one() - distance.max(T::zero()) / cutoff
    }
}

/// Random pull toward a vertical wall.
///
/// `wall_normal` points from the wall into the tunnel. Beyond the cutoff the
/// force is exactly zero and no random numbers are consumed.
pub fn sidewall_force<T: Real, R: Rng + ?Sized>(
    wall_distance: T,
    wall_normal: &Vec3<T>,
    params: &SidewallParams<T>,
    prop_radius: T,
    rng: &mut R,
) -> Vec3<T> {
    let ramp = proximity_ramp(wall_distance, params.cutoff(prop_radius));
    if ramp <= T::zero() {
        return Vec3::zeros();
    }
    let three = T::of(3.0);
    let pull = (params.mean_xy + params.std_xy * normal_sample::<T, _>(rng)).clamp_to(T::zero(), params.max_normal_force());
    let zmax = params.mean_z + three * params.std_z;
    let vertical = (params.std_z * normal_sample::<T, _>(rng)).clamp_to(-zmax, zmax);
    (*wall_normal * -pull + Vec3::unit_z() * vertical) * ramp
}

/// Total near-surface wrench on the vehicle at `state`.
///
/// Ground push and ceiling pull are deterministic; each sidewall within its
/// cutoff contributes a random pull plus a random torque whose spread scales
/// with `std_xy · arm_length`. Effects superpose, so corners see the sum of
/// both surfaces.
pub fn tunnel_disturbance<T: Real, R: Rng + ?Sized>(
    state: &UavState<T>,
    geometry: &TunnelGeometry<T>,
    params: &UavParams<T>,
    aero: &AeroConfig<T>,
    hover_thrust: T,
    rng: &mut R,
) -> Result<Wrench<T>, AeroError> {
    let p = state.position;
    if !geometry.contains_cross_section(&p) {
        return Err(AeroError::OutsideTunnel { y: p.y.to_f64_lossy(), z: p.z.to_f64_lossy() });
    }
    let [d_floor, d_ceiling, d_left, d_right] = geometry.wall_distances(&p);
    let r = params.prop_radius;
    let mut force = Vec3::zeros();
    if aero.ground_effect {
        force.z += hover_thrust * (ground_effect_ratio(d_floor, r)? - T::one());
    }
    if aero.ceiling_effect {
        force.z += hover_thrust * (ceiling_effect_ratio(d_ceiling, r, &aero.ceiling)? - T::one());
    }
    let mut torque = Vec3::zeros();
    if aero.sidewall_effect {
        let sw = &aero.sidewall;
        let cutoff = sw.cutoff(r);
        let mut ramp_sum = T::zero();
        for (wall, d) in [(Wall::Left, d_left), (Wall::Right, d_right)] {
            let normal = TunnelGeometry::inward_normal(wall);
            force += sidewall_force(d, &normal, sw, r, rng);
            ramp_sum += proximity_ramp(d, cutoff);
        }
        if ramp_sum > T::zero() {
            let spread = sw.std_xy * params.arm_length * ramp_sum;
            torque = Vec3::new(normal_sample(rng), normal_sample(rng), normal_sample(rng)) * spread;
            let near_horizontal = d_floor < cutoff || d_ceiling < cutoff;
            if near_horizontal {
                force = force * aero.corner_gain;
            }
        }
    }
    Ok(Wrench { force, torque })
}

/// Mean (noise-free) near-surface force at `position`, for field tabulation.
pub fn expected_tunnel_force<T: Real>(
    position: &Vec3<T>,
    geometry: &TunnelGeometry<T>,
    params: &UavParams<T>,
    aero: &AeroConfig<T>,
    hover_thrust: T,
) -> Result<Vec3<T>, AeroError> {
    if !geometry.contains_cross_section(position) {
        return Err(AeroError::OutsideTunnel { y: position.y.to_f64_lossy(), z: position.z.to_f64_lossy() });
    }
    let [d_floor, d_ceiling, d_left, d_right] = geometry.wall_distances(position);
    let r = params.prop_radius;
    let mut force = Vec3::zeros();
    if aero.ground_effect {
        force.z += hover_thrust * (ground_effect_ratio(d_floor, r)? - T::one());
    }
    if aero.ceiling_effect {
        force.z += hover_thrust * (ceiling_effect_ratio(d_ceiling, r, &aero.ceiling)? - T::one());
    }
    if aero.sidewall_effect {
        let sw = &aero.sidewall;
        let cutoff = sw.cutoff(r);
        let mut any = false;
        for (wall, d) in [(Wall::Left, d_left), (Wall::Right, d_right)] {
            let ramp = proximity_ramp(d, cutoff);
            if ramp > T::zero() {
                any = true;
                force += TunnelGeometry::inward_normal(wall) * (-sw.mean_xy * ramp);
            }
        }
        if any && (d_floor < cutoff || d_ceiling < cutoff) {
            force = force * aero.corner_gain;
        }
    }
    Ok(force)
}

/// Mean force over a cross-section grid with spacing `step`, at axial
/// position `x`. Grid nodes lie strictly inside the tunnel; nodes inside an
/// aerodynamic singularity are skipped.
pub fn force_field<T: Real>(
    geometry: &TunnelGeometry<T>,
    params: &UavParams<T>,
    aero: &AeroConfig<T>,
    x: T,
    step: T,
) -> Vec<(T, T, Vec3<T>)> {
    let hover = params.hover_thrust();
    let count = |extent: T| ((extent / step).ceil().to_f64_lossy() as usize).saturating_sub(1);
    let mut out = Vec::new();
    for j in 1..=count(geometry.width) {
        let y = step * T::of(j as f64);
        for k in 1..=count(geometry.height) {
            let z = step * T::of(k as f64);
            let p = Vec3::new(x, y, z);
            if let Ok(f) = expected_tunnel_force(&p, geometry, params, aero, hover) {
                out.push((y, z, f));
            }
        }
    }
    out
}

/// One draw of the ambient wind acceleration: uniform direction on the
/// sphere, magnitude uniform on `[0, d_m]`.
pub fn wind_disturbance<T: Real, R: Rng + ?Sized>(d_m: T, rng: &mut R) -> Vec3<T> {
    let dir: [f64; 3] = UnitSphere.sample(rng);
    let mag = T::of(rng.random::<f64>()) * d_m;
    Vec3::from_f64(dir) * mag
}

/// Piecewise-constant wind, redrawn every `hold` seconds.
#[derive(Debug, Clone)]
pub struct WindProcess<T> {
    d_m: T,
    hold: T,
    current: Vec3<T>,
    next_switch: Option<T>,
}

impl<T: Real> WindProcess<T> {
    pub fn new(d_m: T, hold: T) -> Self {
        Self { d_m, hold, current: Vec3::zeros(), next_switch: None }
    }

    /// Wind acceleration at time `t`; `t` must be non-decreasing across calls.
    pub fn at<R: Rng + ?Sized>(&mut self, t: T, rng: &mut R) -> Vec3<T> {
        let eps = T::of(1e-9);
        loop {
            match self.next_switch {
                Some(ts) if t + eps < ts => return self.current,
                Some(ts) => {
                    self.current = wind_disturbance(self.d_m, rng);
                    self.next_switch = Some(ts + self.hold);
                }
                None => {
                    self.current = wind_disturbance(self.d_m, rng);
                    self.next_switch = Some(t + self.hold);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const R: f64 = 0.12;

    #[test]
    fn ground_ratio_far_field_and_unit_value() {
        assert!((ground_effect_ratio(1e6 * R, R).unwrap() - 1.0).abs() < 1e-9);
        let oracle = 1.0 / (1.0 - (0.12_f64 / 0.96).powi(2));
        let v = ground_effect_ratio(0.24, R).unwrap();
        assert!((v - oracle).abs() < 1e-12);
        assert!((v - 1.015873).abs() < 1e-6);
    }

    #[test]
    fn ground_ratio_singularity_at_quarter_radius() {
        assert!(matches!(ground_effect_ratio(0.03, R), Err(AeroError::GroundSingularity { .. })));
        assert!(ground_effect_ratio(0.030001, R).is_ok());
    }

    #[test]
    fn ceiling_ratio_values() {
        let unit = CeilingCoeffs { a1: 1.0, a2: 0.0 };
        assert!((ceiling_effect_ratio(1e6 * R, R, &unit).unwrap() - 1.0).abs() < 1e-9);
        assert!((ceiling_effect_ratio(2.0 * R, R, &unit).unwrap() - 4.0 / 3.0).abs() < 1e-6);
        assert!(matches!(ceiling_effect_ratio(R, R, &unit), Err(AeroError::CeilingSingularity { .. })));
    }

    #[test]
    fn ratios_are_monotone_and_at_least_one() {
        let coeffs = CeilingCoeffs::default();
        let mut prev_g = f64::INFINITY;
        let mut prev_c = f64::INFINITY;
        for i in 0..100 {
            let d = 0.05 + 0.02 * i as f64;
            let g = ground_effect_ratio(d, R).unwrap();
            let c = ceiling_effect_ratio(d, R, &coeffs).unwrap();
            assert!(g >= 1.0 && c >= 1.0);
            assert!(g < prev_g && c < prev_c);
            prev_g = g;
            prev_c = c;
        }
    }

    #[test]
    fn sidewall_zero_beyond_cutoff() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = sidewall_force(10.0, &Vec3::unit_y(), &SidewallParams::default(), R, &mut rng);
        assert_eq!(f, Vec3::zeros());
    }

    #[test]
    fn sidewall_mean_pull_at_the_wall() {
        let sw = SidewallParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 10_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let f = sidewall_force(0.0, &Vec3::unit_y(), &sw, R, &mut rng);
            assert!(f.y.abs() <= sw.max_normal_force() + 1e-15);
            assert!(f.y <= 0.0);
            sum += f.y;
        }
        let mean = sum / n as f64;
        assert!((mean + sw.mean_xy).abs() < 3.0 * sw.std_xy / 100.0, "mean {mean}");
    }

    fn hover_state(y: f64, z: f64) -> UavState<f64> {
        UavState::at_rest(Vec3::new(5.0, y, z))
    }

    #[test]
    fn tunnel_center_is_quiet() {
        let g = TunnelGeometry::default();
        let p = UavParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = tunnel_disturbance(&hover_state(1.0, 1.0), &g, &p, &AeroConfig::default(), p.hover_thrust(), &mut rng)
            .unwrap();
        // Residual ceiling and ground pull at 1 m is well under 1 % of hover thrust.
        assert!(w.force.norm() < 0.01 * p.hover_thrust());
        assert_eq!((w.force.x, w.force.y), (0.0, 0.0));
        assert_eq!(w.torque, Vec3::zeros());
    }

    #[test]
    fn low_hover_matches_ground_ratio() {
        let g = TunnelGeometry::default();
        let p = UavParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let aero = AeroConfig { ceiling_effect: false, ..AeroConfig::default() };
        let w = tunnel_disturbance(&hover_state(1.0, 0.24), &g, &p, &aero, p.hover_thrust(), &mut rng).unwrap();
        let expected = p.hover_thrust() * (ground_effect_ratio(0.24, R).unwrap() - 1.0);
        assert!((w.force.z - expected).abs() < 1e-12);
        assert_eq!(w.force.y, 0.0);
    }

    #[test]
    fn corner_force_exceeds_single_surface_forces() {
        let g = TunnelGeometry::default();
        let p = UavParams::default();
        let aero = AeroConfig::default();
        let ht = p.hover_thrust();
        for &(y, dz) in &[(0.1, 0.2), (0.05, 0.15), (0.3, 0.4)] {
            let z = g.height - dz;
            let at = |y: f64, z: f64, a: &AeroConfig<f64>| expected_tunnel_force(&Vec3::new(5.0, y, z), &g, &p, a, ht).unwrap().norm();
            let corner = at(y, z, &aero);
            let ceiling = at(1.0, z, &AeroConfig { sidewall_effect: false, ..aero });
            let wall = at(y, 1.0, &AeroConfig { ground_effect: false, ceiling_effect: false, ..aero });
            assert!(corner > ceiling && corner > wall, "{corner} {ceiling} {wall}");
        }
    }

    #[test]
    fn corner_samples_combine_both_surfaces() {
        let g = TunnelGeometry::default();
        let p = UavParams::default();
        let aero = AeroConfig::default();
        let ht = p.hover_thrust();
        let state = hover_state(0.1, g.height - 0.2);
        let ceiling_pull = ht * (ceiling_effect_ratio(0.2, R, &aero.ceiling).unwrap() - 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let w = tunnel_disturbance(&state, &g, &p, &aero, ht, &mut rng).unwrap();
            assert!(w.force.y <= 0.0);
            assert!((w.force.z - ceiling_pull).abs() <= aero.sidewall.mean_z + 3.0 * aero.sidewall.std_z);
        }
    }

    #[test]
    fn zeroed_effects_give_exact_zero() {
        let g = TunnelGeometry::default();
        let p = UavParams::default();
        let aero = AeroConfig { sidewall: SidewallParams::zeroed(), ..AeroConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(y, z) in &[(0.05, 0.1), (1.0, 1.0), (1.95, 1.9)] {
            let w = tunnel_disturbance(&hover_state(y, z), &g, &p, &aero, 0.0, &mut rng).unwrap();
            assert!(w.force == Vec3::zeros() && w.torque == Vec3::zeros());
        }
        let off = AeroConfig::disabled();
        let w = tunnel_disturbance(&hover_state(0.05, 0.1), &g, &p, &off, p.hover_thrust(), &mut rng).unwrap();
        assert!(w.force == Vec3::zeros() && w.torque == Vec3::zeros());
    }

    #[test]
    fn reflection_symmetry_across_tunnel_midplane() {
        let g = TunnelGeometry::default();
        let p = UavParams::default();
        let aero = AeroConfig::default();
        let ht = p.hover_thrust();
        let (y, z) = (0.15, 0.3);
        let n = 4000;
        let (mut a, mut b) = (0.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..n {
            let l = tunnel_disturbance(&hover_state(y, z), &g, &p, &aero, ht, &mut rng).unwrap();
            let r = tunnel_disturbance(&hover_state(g.width - y, z), &g, &p, &aero, ht, &mut rng).unwrap();
            a += l.force.y;
            b += r.force.y;
        }
        // Mirror images: lateral means opposite, within Monte-Carlo error.
        assert!(((a + b) / n as f64).abs() < 3e-3);
        let det = |y: f64| expected_tunnel_force(&Vec3::new(5.0, y, z), &g, &p, &aero, ht).unwrap();
        let (fl, fr) = (det(y), det(g.width - y));
        assert!((fl.z - fr.z).abs() < 1e-15 && (fl.y + fr.y).abs() < 1e-15);
    }

    #[test]
    fn outside_and_singular_positions_error() {
        let g = TunnelGeometry::default();
        let p = UavParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let aero = AeroConfig::default();
        assert!(matches!(
            tunnel_disturbance(&hover_state(-0.1, 1.0), &g, &p, &aero, 1.0, &mut rng),
            Err(AeroError::OutsideTunnel { .. })
        ));
        assert!(matches!(
            tunnel_disturbance(&hover_state(1.0, 0.02), &g, &p, &aero, 1.0, &mut rng),
            Err(AeroError::GroundSingularity { .. })
        ));
        assert!(matches!(
            tunnel_disturbance(&hover_state(1.0, 1.97), &g, &p, &aero, 1.0, &mut rng),
            Err(AeroError::CeilingSingularity { .. })
        ));
    }

    #[test]
    fn wind_bounds_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(wind_disturbance(0.0, &mut rng), Vec3::zeros());
        let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
        for _ in 0..10_000 {
            let n = wind_disturbance(0.8, &mut rng).norm();
            lo = lo.min(n);
            hi = hi.max(n);
        }
        assert!(hi <= 0.8 + 1e-12 && lo >= 0.0);
        let draw = |seed| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            (0..20).map(|_| wind_disturbance(0.8, &mut r)).collect::<Vec<Vec3<f64>>>()
        };
        assert_eq!(draw(42), draw(42));
    }

    #[test]
    fn wind_process_holds_for_one_second() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut w = WindProcess::new(0.8, 1.0);
        let a = w.at(0.0, &mut rng);
        assert_eq!(w.at(0.5, &mut rng), a);
        assert_eq!(w.at(0.99, &mut rng), a);
        let b = w.at(1.0, &mut rng);
        assert_ne!(a, b);
        assert_eq!(w.at(1.7, &mut rng), b);
    }
}

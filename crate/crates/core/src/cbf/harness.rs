//! Closed-loop certification harness: a double integrator approaching a
//! planar wall under a CBF safety filter and bounded random disturbance.
//!
//! The filter passes the desired input through when the invariance residual
//! (evaluated on the disturbance-free prediction) is non-negative, and
//! otherwise applies the least-braking input that satisfies it. All random
//! draws are independent of the filter's decisions, so runs with different
//! λ on the same seed see identical commands and disturbances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{invariance_residual, CbfParams};
use crate::aero::wind_disturbance;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HarnessConfig {
    pub params: CbfParams<f64>,
    pub dt: f64,
    pub steps: usize,
    pub episodes: usize,
    /// Disturbance bound, m/s².
    pub d_m: f64,
    /// Steps each disturbance draw is held for.
    pub disturbance_hold: usize,
    /// Steps each desired-input draw is held for.
    pub command_hold: usize,
    /// Episodes start with h at least this large.
    pub min_initial_h: f64,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            params: CbfParams::default(),
            dt: 0.1,
            steps: 200,
            episodes: 10_000,
            d_m: 0.8,
            disturbance_hold: 10,
            command_hold: 20,
            min_initial_h: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HarnessReport {
    pub lambda: f64,
    pub episodes: usize,
    /// Episodes in which h dropped below 0 or the standoff was crossed.
    pub violations: usize,
    /// Smallest h seen over all steps; −∞ if the standoff was crossed.
    pub min_h: f64,
    /// Steps where no admissible input satisfied the residual and the
    /// filter fell back to full braking.
    pub infeasible_steps: usize,
    /// Violations in episodes where every step satisfied the residual.
    pub feasible_violations: usize,
    pub total_steps: usize,
}

/// Barrier for a wall at the origin: `s` is clearance beyond `d_s`, `v` the
/// velocity along the inward normal.
fn wall_h(s: f64, v: f64, a_max: f64) -> Option<f64> {
    (s > 0.0).then(|| (2.0 * a_max * s).sqrt() + v)
}

fn advance(s: f64, v: f64, u: f64, dt: f64) -> (f64, f64) {
    (s + v * dt + 0.5 * u * dt * dt, v + u * dt)
}

/// Least input in `[−a_max, a_max]` satisfying the residual, or `None`.
fn least_admissible(s: f64, v: f64, h: f64, p: &CbfParams<f64>, dt: f64) -> Option<f64> {
    let ok = |u: f64| {
        let (s1, v1) = advance(s, v, u, dt);
        wall_h(s1, v1, p.a_max).is_some_and(|h1| invariance_residual(h, h1, dt, p) >= 0.0)
    };
    if !ok(p.a_max) {
        return None;
    }
    if ok(-p.a_max) {
        return Some(-p.a_max);
    }
    let (mut lo, mut hi) = (-p.a_max, p.a_max);
    for _ in 0..48 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

pub fn run_harness(cfg: &HarnessConfig, seed: u64) -> HarnessReport {
    let p = &cfg.params;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = HarnessReport {
        lambda: p.lambda,
        episodes: cfg.episodes,
        violations: 0,
        min_h: f64::INFINITY,
        infeasible_steps: 0,
        feasible_violations: 0,
        total_steps: 0,
    };
    for _ in 0..cfg.episodes {
        let (mut s, mut v) = loop {
            let s = rng.random_range(0.05..1.5);
            let v = rng.random_range(-1.5..1.5);
            if wall_h(s, v, p.a_max).is_some_and(|h| h >= cfg.min_initial_h) {
                break (s, v);
            }
        };
        // Draw the whole episode up front so filter decisions never shift the stream.
        let commands: Vec<f64> = (0..cfg.steps.div_ceil(cfg.command_hold))
            .map(|_| rng.random_range(-p.a_max..0.5 * p.a_max))
            .collect();
        let winds: Vec<f64> = (0..cfg.steps.div_ceil(cfg.disturbance_hold))
            .map(|_| wind_disturbance::<f64, _>(cfg.d_m, &mut rng).z)
            .collect();
        let mut violated = false;
        let mut filtered_ok = true;
        for k in 0..cfg.steps {
            let h = wall_h(s, v, p.a_max).expect("state checked on the previous step");
            report.min_h = report.min_h.min(h);
            let desired = commands[k / cfg.command_hold];
            let u = match least_admissible(s, v, h, p, cfg.dt) {
                Some(u_min) => desired.max(u_min),
                None => {
                    report.infeasible_steps += 1;
                    filtered_ok = false;
                    p.a_max
                }
            };
            (s, v) = advance(s, v, u + winds[k / cfg.disturbance_hold], cfg.dt);
            report.total_steps += 1;
            match wall_h(s, v, p.a_max) {
                Some(h) if h >= 0.0 => {}
                Some(h) => {
                    report.min_h = report.min_h.min(h);
                    violated = true;
                }
                None => {
                    report.min_h = f64::NEG_INFINITY;
                    violated = true;
                }
            }
            if violated {
                break;
            }
        }
        if !violated {
            let h = wall_h(s, v, p.a_max).expect("no violation");
            report.min_h = report.min_h.min(h);
        }
        report.violations += usize::from(violated);
        report.feasible_violations += usize::from(violated && filtered_ok);
    }
    report
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaCalibration {
    /// Smallest λ found with zero violations.
    pub lambda: f64,
    /// Every λ evaluated, in search order.
    pub trace: Vec<HarnessReport>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("no violation-free λ up to {max_lambda}")]
pub struct CalibrationError {
    pub max_lambda: f64,
    pub trace: Vec<HarnessReport>,
}

/// Smallest λ (to within `tol`) whose harness run on `seed` has zero
/// violations: λ = 0 is tried first, then the bracket is grown by doubling
/// and refined by bisection.
pub fn calibrate_lambda(cfg: &HarnessConfig, seed: u64, tol: f64) -> Result<LambdaCalibration, CalibrationError> {
    const MAX_LAMBDA: f64 = 512.0;
    let mut trace = Vec::new();
    let trial = |lambda: f64, trace: &mut Vec<HarnessReport>| {
        let c = HarnessConfig { params: CbfParams { lambda, ..cfg.params }, ..*cfg };
        let r = run_harness(&c, seed);
        trace.push(r);
        r.violations == 0
    };
    if trial(0.0, &mut trace) {
        return Ok(LambdaCalibration { lambda: 0.0, trace });
    }
    let (mut lo, mut hi) = (0.0, 0.125);
    while !trial(hi, &mut trace) {
        lo = hi;
        hi *= 2.0;
        if hi > MAX_LAMBDA {
            return Err(CalibrationError { max_lambda: MAX_LAMBDA, trace });
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if trial(mid, &mut trace) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(LambdaCalibration { lambda: hi, trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(d_m: f64, lambda: f64) -> HarnessConfig {
        let params = CbfParams { lambda, ..CbfParams::default() };
        HarnessConfig { params, episodes: 300, d_m, ..HarnessConfig::default() }
    }

    #[test]
    fn undisturbed_filter_never_violates() {
        let r = run_harness(&small(0.0, 0.0), 1);
        assert_eq!(r.violations, 0);
        assert!(r.min_h >= 0.0);
    }

    #[test]
    fn same_seed_same_report() {
        assert_eq!(run_harness(&small(0.8, 0.5), 3), run_harness(&small(0.8, 0.5), 3));
    }

    #[test]
    fn zero_disturbance_calibrates_to_zero() {
        let c = calibrate_lambda(&small(0.0, 0.0), 5, 0.01).unwrap();
        assert_eq!(c.lambda, 0.0);
        assert_eq!(c.trace.len(), 1);
    }

    #[test]
    fn least_admissible_is_on_the_boundary() {
        let p = CbfParams { lambda: 0.0, ..CbfParams::default() };
        let (s, v) = (0.05, -0.5);
        let h = wall_h(s, v, p.a_max).unwrap();
        let u = least_admissible(s, v, h, &p, 0.1).unwrap();
        let (s1, v1) = advance(s, v, u, 0.1);
        let res = invariance_residual(h, wall_h(s1, v1, p.a_max).unwrap(), 0.1, &p);
        assert!((0.0..1e-6).contains(&res));
    }
}

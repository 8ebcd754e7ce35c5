//! Acceptance suite. Runs every criterion at its stated tolerance, prints one
//! PASS/FAIL line each, and exits nonzero if any fails.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tunnel_mpc::aero::{ceiling_effect_ratio, ground_effect_ratio, AeroError, CeilingCoeffs, Wall};
use tunnel_mpc::cbf::harness::{calibrate_lambda, run_harness, HarnessConfig};
use tunnel_mpc::cbf::{h_bounding, h_bounding_grad, h_point_obstacle, h_point_obstacle_grad, h_wall, h_wall_grad, BarrierEval};
use tunnel_mpc::mpc::{MpcProblem, MpcState, ReferenceWindow};
use tunnel_mpc::optimizer::{qp_subproblem, solve, EvalError, FnProblem, NlpProblem, SolveOptions, SolveStatus};
use tunnel_mpc::sim::bench::standoff_run;
use tunnel_mpc::sim::io::write_records_csv;
use tunnel_mpc::{run_scenario, CbfParams, ControllerMode, MpcConfig, ScenarioCase, ScenarioConfig, StepRecord, TunnelGeometry, Vec3};

/// Margin used for the tunnel-hugging cases. The default λ = 8 keeps the
/// vehicle far from the walls and makes the discrete barrier condition
/// oscillate at its equilibrium.
const WALL_CASE_LAMBDA: f64 = 2.0;
const SEEDS: std::ops::RangeInclusive<u64> = 1..=10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn scenario(case: ScenarioCase, controller: ControllerMode, seed: u64, lambda: f64) -> ScenarioConfig {
    let mut c = ScenarioConfig { case, controller, seed, ..ScenarioConfig::default() };
    c.cbf.lambda = lambda;
    c
}

fn calibrated_lambda() -> f64 {
    calibrate_lambda(&HarnessConfig::default(), 0, 1e-3).expect("calibration converges").lambda
}

fn bound_region(lambda: f64) -> Vec<[tunnel_mpc::RunMetrics<f64>; 3]> {
    SEEDS
        .map(|seed| {
            ControllerMode::ALL.map(|ctl| run_scenario(&scenario(ScenarioCase::BoundRegion, ctl, seed, lambda)).expect("run completes").metrics)
        })
        .collect()
}

fn criterion_1(runs: &[[tunnel_mpc::RunMetrics<f64>; 3]], lambda: f64) -> Outcome {
    let cbf_violations: usize = runs.iter().map(|r| r[2].boundary_violations).sum();
    let naive_seeds = runs.iter().filter(|r| r[0].boundary_violations >= 1).count();
    outcome(
        cbf_violations == 0 && naive_seeds >= 8,
        format!("λ = {lambda:.4}; CBF violation steps {cbf_violations}; Naive seeds with violations {naive_seeds}/10"),
    )
}

fn criterion_2(runs: &[[tunnel_mpc::RunMetrics<f64>; 3]]) -> Outcome {
    let ordered = runs.iter().filter(|r| r[0].t_e > r[1].t_e && r[1].t_e > r[2].t_e).count();
    let mean = |i: usize| runs.iter().map(|r| r[i].t_e).sum::<f64>() / runs.len() as f64;
    let (n, h, c) = (mean(0), mean(1), mean(2));
    let gain = 1.0 - c / n;
    outcome(
        ordered >= 8 && gain >= 0.3,
        format!("mean T_e naive {n:.4} hc {h:.4} cbf {c:.4}; ordered seeds {ordered}/10; CBF improvement {:.1}%", 100.0 * gain),
    )
}

fn criterion_3() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for wall in [Wall::Floor, Wall::Ceiling, Wall::Left] {
        let mean_min = |ctl: ControllerMode| {
            let xs: Vec<f64> = (1..=5)
                .map(|seed| {
                    let (s, _) = standoff_run(&scenario(ScenarioCase::MinStandoff, ctl, seed, WALL_CASE_LAMBDA), wall).expect("run completes");
                    s.min_stable.unwrap_or(f64::INFINITY)
                })
                .collect();
            xs.iter().sum::<f64>() / xs.len() as f64
        };
        let (cbf, naive) = (mean_min(ControllerMode::Cbf), mean_min(ControllerMode::Naive));
        let ok = cbf <= 0.7 * naive;
        pass &= ok;
        parts.push(format!("{} cbf {cbf:.3} naive {naive:.3}", wall.name()));
    }
    outcome(pass, format!("mean min stable commanded standoff (m): {}", parts.join(", ")))
}

/// `Σ‖u‖²` over the records before `t_end`, collision records excluded.
fn effort_before(records: &[StepRecord<f64>], t_end: f64) -> f64 {
    records
        .iter()
        .filter(|r| !r.is_collision() && r.time < t_end - 1e-9)
        .map(|r| r.mpc_input.to_array().iter().map(|u| u * u).sum::<f64>())
        .sum()
}

fn criteria_4_5() -> (Outcome, Outcome) {
    let (mut naive_coll, mut hc_coll, mut cbf_ok) = (0, 0, 0);
    let (mut cbf_te, mut naive_ce, mut cbf_ce) = (0.0_f64, 0.0, 0.0);
    for seed in SEEDS {
        let runs = ControllerMode::ALL.map(|ctl| run_scenario(&scenario(ScenarioCase::CloseProximity, ctl, seed, WALL_CASE_LAMBDA)).expect("run completes"));
        naive_coll += usize::from(runs[0].metrics.collided);
        hc_coll += usize::from(runs[1].metrics.collided);
        cbf_ok += usize::from(!runs[2].metrics.collided && runs[2].metrics.t_e < 1.0);
        cbf_te = cbf_te.max(runs[2].metrics.t_e);
        let completed = |recs: &[StepRecord<f64>]| recs.iter().rfind(|r| !r.is_collision()).map_or(0.0, |r| r.time) + 0.1;
        let t_end = completed(&runs[0].records).min(completed(&runs[2].records));
        naive_ce += effort_before(&runs[0].records, t_end);
        cbf_ce += effort_before(&runs[2].records, t_end);
    }
    let c4 = outcome(
        naive_coll == 10 && hc_coll == 10 && cbf_ok == 10,
        format!("collisions naive {naive_coll}/10 hc {hc_coll}/10; CBF collision-free with T_e < 1 m {cbf_ok}/10 (max T_e {cbf_te:.3})"),
    );
    let ratio = cbf_ce / naive_ce;
    let c5 = outcome(
        ratio <= 0.9,
        format!("mean c_e over the common completed span: naive {:.1} cbf {:.1}, ratio {ratio:.3}", naive_ce / 10.0, cbf_ce / 10.0),
    );
    (c4, c5)
}

fn criterion_6() -> Outcome {
    let base = HarnessConfig::default();
    let cal = calibrate_lambda(&base, 0, 1e-3).expect("calibration converges");
    let mut feasible_violations = 0;
    let mut raised = true;
    let mut minima = Vec::new();
    for seed in [0, 11, 12] {
        let with = run_harness(&HarnessConfig { params: CbfParams { lambda: cal.lambda, ..base.params }, ..base }, seed);
        let without = run_harness(&HarnessConfig { params: CbfParams { lambda: 0.0, ..base.params }, ..base }, seed);
        feasible_violations += with.feasible_violations;
        if seed == 0 {
            feasible_violations += with.violations;
        }
        raised &= with.min_h > without.min_h;
        minima.push(format!("{:.4} vs {:.4}", with.min_h, without.min_h));
    }
    outcome(
        feasible_violations == 0 && raised,
        format!(
            "λ* = {:.4}; violations in residual-satisfying episodes {feasible_violations}; min h with λ* vs λ = 0: {}",
            cal.lambda,
            minima.join(", ")
        ),
    )
}

fn criterion_7() -> Outcome {
    let r: f64 = 0.12;
    let coeffs = CeilingCoeffs::<f64>::default();
    let ge: f64 = ground_effect_ratio(0.24, r).unwrap();
    let unit_ok = (ge - 1.015873).abs() <= 1e-6;
    let far_ok = (ground_effect_ratio(1e4, r).unwrap() - 1.0).abs() <= 1e-9
        && (ceiling_effect_ratio(1e4, r, &coeffs).unwrap() - 1.0).abs() <= 1e-9;
    let ground_limit = r / 4.0;
    let ground_ok = matches!(ground_effect_ratio(ground_limit, r), Err(AeroError::GroundSingularity { .. }))
        && ground_effect_ratio(ground_limit * (1.0 + 1e-12), r).is_ok();
    let ceiling_limit = r / coeffs.a1.sqrt() - coeffs.a2;
    let ceiling_ok = matches!(ceiling_effect_ratio(ceiling_limit * (1.0 - 1e-12), r, &coeffs), Err(AeroError::CeilingSingularity { .. }))
        && ceiling_effect_ratio(ceiling_limit * (1.0 + 1e-9), r, &coeffs).is_ok()
        && ceiling_effect_ratio(-coeffs.a2, r, &coeffs).is_err();
    outcome(
        unit_ok && far_ok && ground_ok && ceiling_ok,
        format!(
            "ground ratio at z = 0.24, R = 0.12: {ge:.7}; far field {far_ok}; singular at z ≤ {ground_limit} {ground_ok}, at ceiling clearance ≤ {ceiling_limit:.6} {ceiling_ok}"
        ),
    )
}

/// `min ½xᵀHx + gᵀx` s.t. `Jx + c ≥ 0` with exact derivatives.
struct Quadratic {
    n: usize,
    h: Vec<f64>,
    g: Vec<f64>,
    jac: Vec<f64>,
    c: Vec<f64>,
}

impl NlpProblem<f64> for Quadratic {
    fn dim(&self) -> usize {
        self.n
    }
    fn num_constraints(&self) -> usize {
        self.c.len()
    }
    fn lower_bounds(&self) -> Vec<f64> {
        vec![f64::NEG_INFINITY; self.n]
    }
    fn upper_bounds(&self) -> Vec<f64> {
        vec![f64::INFINITY; self.n]
    }
    fn objective(&self, x: &[f64]) -> Result<f64, EvalError> {
        let n = self.n;
        Ok((0..n).map(|i| x[i] * (0.5 * (0..n).map(|j| self.h[i * n + j] * x[j]).sum::<f64>() + self.g[i])).sum())
    }
    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        let n = self.n;
        Ok((0..n).map(|i| (0..n).map(|j| self.h[i * n + j] * x[j]).sum::<f64>() + self.g[i]).collect())
    }
    fn constraints(&self, x: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        let n = self.n;
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..n).map(|j| self.jac[i * n + j] * x[j]).sum::<f64>() + self.c[i];
        }
        Ok(())
    }
    fn jacobian(&self, _: &[f64]) -> Result<Vec<f64>, EvalError> {
        Ok(self.jac.clone())
    }
    fn initial_hessian(&self) -> Option<Vec<f64>> {
        Some(self.h.clone())
    }
}

/// A strictly convex QP built around a chosen KKT point: the solution `x`,
/// an active set with positive multipliers, and `g` from stationarity.
fn planted_qp(rng: &mut ChaCha8Rng) -> (Quadratic, Vec<f64>) {
    let n = rng.random_range(1..=20);
    let m = rng.random_range(0..=10);
    let a: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] = (0..n).map(|k| a[k * n + i] * a[k * n + j]).sum::<f64>() + if i == j { 0.5 } else { 0.0 };
        }
    }
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let jac: Vec<f64> = (0..m * n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let active = rng.random_range(0..=m.min(n));
    let mut c = vec![0.0; m];
    let mut mu = vec![0.0; m];
    for i in 0..m {
        let jx: f64 = (0..n).map(|j| jac[i * n + j] * x[j]).sum();
        if i < active {
            c[i] = -jx;
            mu[i] = rng.random_range(0.1..2.0);
        } else {
            c[i] = -jx + rng.random_range(0.1..2.0);
        }
    }
    let g = (0..n)
        .map(|j| (0..m).map(|i| jac[i * n + j] * mu[i]).sum::<f64>() - (0..n).map(|k| h[j * n + k] * x[k]).sum::<f64>())
        .collect();
    (Quadratic { n, h, g, jac, c }, x)
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_qp, mut worst_sqp) = (0.0_f64, 0.0_f64);
    for _ in 0..100 {
        let (q, x) = planted_qp(&mut rng);
        let n = q.n;
        let inf = vec![f64::INFINITY; n];
        let ninf = vec![f64::NEG_INFINITY; n];
        let step = qp_subproblem(&q.h, &q.g, &q.jac, &q.c, &ninf, &inf, 1e3).expect("feasible QP");
        worst_qp = worst_qp.max(step.step.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        let sol = solve(&q, &vec![0.0; n], &SolveOptions::default()).expect("solver runs");
        worst_sqp = worst_sqp.max(sol.x_opt.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    let rosen = FnProblem::new(2, |x: &[f64]| Ok((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)))
        .bounds(vec![-2.0, -2.0], vec![0.8, 2.0]);
    let s = solve(&rosen, &[-1.2, 1.0], &SolveOptions::default()).expect("solver runs");
    let rosen_err = (s.x_opt[0] - 0.8).abs().max((s.x_opt[1] - 0.64).abs());
    outcome(
        worst_qp <= 1e-6 && worst_sqp <= 1e-6 && rosen_err <= 1e-4 && s.status == SolveStatus::Converged,
        format!("max |x − x_KKT| QP {worst_qp:.2e}, SQP {worst_sqp:.2e}; Rosenbrock box optimum error {rosen_err:.2e} ({})", s.status.as_str()),
    )
}

fn central_difference(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = 1e-6 * x[i].abs().max(1.0);
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic.iter().chain(numeric).fold(1.0_f64, |m, x| m.max(x.abs()));
    analytic.iter().zip(numeric).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale
}

fn flat(e: &BarrierEval<f64>) -> Vec<f64> {
    vec![e.d_p.x, e.d_p.y, e.d_p.z, e.d_v.x, e.d_v.y, e.d_v.z]
}

fn split(x: &[f64]) -> (Vec3, Vec3) {
    (Vec3::new(x[0], x[1], x[2]), Vec3::new(x[3], x[4], x[5]))
}

fn random_direction(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let d = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if d.norm() > 0.2 {
            return d * (1.0 / d.norm());
        }
    }
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let params = CbfParams { r: 0.5, ..CbfParams::default() };
    let mut worst = [0.0_f64; 4];
    for _ in 0..100 {
        let vel = Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let p = random_direction(&mut rng) * rng.random_range(0.2..3.0);
        let x = [p.x, p.y, p.z, vel.x, vel.y, vel.z];
        let f = |x: &[f64]| {
            let (p, v) = split(x);
            h_point_obstacle(&p, &v, &params).unwrap()
        };
        worst[0] = worst[0].max(relative_error(&flat(&h_point_obstacle_grad(&p, &vel, &params).unwrap()), &central_difference(&f, &x)));

        let f = |x: &[f64]| {
            let (p, v) = split(x);
            h_wall(&p, &v, &params).unwrap()
        };
        worst[1] = worst[1].max(relative_error(&flat(&h_wall_grad(&p, &vel, &params).unwrap()), &central_difference(&f, &x)));

        let inner = random_direction(&mut rng) * rng.random_range(0.05..0.45);
        let target = Vec3::new(rng.random_range(-1.0..1.0), 0.0, rng.random_range(-1.0..1.0));
        let x = [inner.x, inner.y, inner.z, vel.x, vel.y, vel.z];
        let f = |x: &[f64]| {
            let (p, v) = split(x);
            h_bounding(&p, &v, &target, &params).unwrap()
        };
        worst[2] = worst[2].max(relative_error(&flat(&h_bounding_grad(&inner, &vel, &target, &params).unwrap()), &central_difference(&f, &x)));

        let horizon = 10;
        let config = MpcConfig { horizon, ..MpcConfig::default() };
        let geometry = TunnelGeometry::default();
        let start = Vec3::new(rng.random_range(2.0..8.0), rng.random_range(0.4..1.6), rng.random_range(0.4..1.6));
        let state = MpcState { position: start, velocity: vel * 0.5, yaw: rng.random_range(-0.5..0.5), yaw_rate: rng.random_range(-0.5..0.5) };
        let mut reference = ReferenceWindow::hold(start, horizon);
        for i in 0..=horizon {
            reference.positions[i] = start + Vec3::new(0.1 * i as f64, 0.05, -0.05);
            reference.velocities[i] = Vec3::new(1.0, 0.0, 0.0);
            reference.yaws[i] = 0.02 * i as f64;
        }
        let problem = MpcProblem::new(state, &reference, &config, &params, &geometry, ScenarioCase::BoundRegion);
        let u: Vec<f64> = (0..problem.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = |x: &[f64]| problem.objective(x).unwrap();
        worst[3] = worst[3].max(relative_error(&problem.gradient(&u).unwrap(), &central_difference(&f, &u)));
    }
    outcome(
        worst.iter().all(|&e| e <= 1e-4),
        format!(
            "max relative error: point barrier {:.1e}, wall barrier {:.1e}, safe-region barrier {:.1e}, MPC cost {:.1e}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

fn criterion_10() -> Outcome {
    let mut identical = true;
    for case in ScenarioCase::ALL {
        let mut config = scenario(case, ControllerMode::Cbf, 7, WALL_CASE_LAMBDA);
        config.total_time = 20.0;
        let csv = || {
            let run = run_scenario(&config).expect("run completes");
            let mut buf = Vec::new();
            write_records_csv(&run.records, &mut buf).expect("csv writes");
            buf
        };
        identical &= csv() == csv();
    }
    outcome(identical, "records.csv byte-identical on rerun for every case".into())
}

fn report(results: &mut Vec<bool>, n: usize, started: Instant, o: Outcome) {
    println!(
        "criterion {n:>2}: {} ({:.1} s) {}",
        if o.pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64(),
        o.detail
    );
    results.push(o.pass);
}

fn main() {
    let mut results = Vec::new();

    let t = Instant::now();
    let lambda = calibrated_lambda();
    let runs = bound_region(lambda);
    report(&mut results, 1, t, criterion_1(&runs, lambda));
    report(&mut results, 2, t, criterion_2(&runs));

    let t = Instant::now();
    report(&mut results, 3, t, criterion_3());

    let t = Instant::now();
    let (c4, c5) = criteria_4_5();
    report(&mut results, 4, t, c4);
    report(&mut results, 5, t, c5);

    for (n, check) in [(6, criterion_6 as fn() -> Outcome), (7, criterion_7), (8, criterion_8), (9, criterion_9), (10, criterion_10)] {
        let t = Instant::now();
        report(&mut results, n, t, check());
    }

    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}

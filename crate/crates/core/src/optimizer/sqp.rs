use thiserror::Error;

use super::qp::{qp_subproblem, QpError};
use super::{EvalError, NlpProblem, NlpSolution, SolveOptions, SolveStatus};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("bounds inverted at coordinate {0}")]
    InvertedBounds(usize),
    #[error("non-finite evaluation: {0}")]
    NonFinite(String),
}

struct Point<T> {
    x: Vec<T>,
    f: T,
    c: Vec<T>,
}

fn violation<T: Real>(c: &[T]) -> T {
    c.iter().fold(T::zero(), |m, &ci| m.max(-ci))
}

fn penalty<T: Real>(c: &[T], rho: &[T]) -> T {
    c.iter().zip(rho).map(|(&ci, &r)| r * (-ci).max(T::zero())).sum()
}

fn inf_norm<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

fn evaluate<T: Real, P: NlpProblem<T> + ?Sized>(problem: &P, x: &[T], m: usize) -> Result<Point<T>, EvalError> {
    let f = problem.objective(x)?;
    if !f.is_finite() {
        return Err(EvalError::NonFinite { what: "objective".into() });
    }
    let mut c = vec![T::zero(); m];
    problem.constraints(x, &mut c)?;
    if let Some(i) = c.iter().position(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite { what: format!("constraint {i}") });
    }
    Ok(Point { x: x.to_vec(), f, c })
}

fn derivatives<T: Real, P: NlpProblem<T> + ?Sized>(problem: &P, x: &[T], n: usize, m: usize) -> Result<(Vec<T>, Vec<T>), EvalError> {
    let g = problem.gradient(x)?;
    let j = problem.jacobian(x)?;
    if g.len() != n || j.len() != n * m {
        return Err(EvalError::NonFinite { what: "derivative dimensions".into() });
    }
    if g.iter().chain(&j).any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite { what: "derivatives".into() });
    }
    Ok((g, j))
}

/// `g − Jᵀμ`
fn lagrangian_gradient<T: Real>(g: &[T], jac: &[T], mu: &[T]) -> Vec<T> {
    let n = g.len();
    let mut out = g.to_vec();
    for (i, &mi) in mu.iter().enumerate() {
        if mi != T::zero() {
            for (o, &a) in out.iter_mut().zip(&jac[i * n..(i + 1) * n]) {
                *o -= mi * a;
            }
        }
    }
    out
}

fn seed_hessian<T: Real, P: NlpProblem<T> + ?Sized>(problem: &P, n: usize) -> Vec<T> {
    if let Some(h) = problem.initial_hessian() {
        if h.len() == n * n && h.iter().all(|v| v.is_finite()) {
            return h;
        }
    }
    let mut h = vec![T::zero(); n * n];
    for i in 0..n {
        h[i * n + i] = T::one();
    }
    h
}

/// Powell-damped BFGS update; returns false on breakdown.
fn bfgs_update<T: Real>(b: &mut [T], s: &[T], y: &[T]) -> bool {
    let n = s.len();
    let bs: Vec<T> = (0..n).map(|i| b[i * n..(i + 1) * n].iter().zip(s).map(|(&a, &v)| a * v).sum()).collect();
    let sbs: T = s.iter().zip(&bs).map(|(&a, &v)| a * v).sum();
    let mut sy: T = s.iter().zip(y).map(|(&a, &v)| a * v).sum();
    if !(sbs > T::epsilon() * inf_norm(s).powi(2)) || !sy.is_finite() {
        return false;
    }
    let mut yd = y.to_vec();
    let threshold = T::of(0.2) * sbs;
    if sy < threshold {
        let theta = T::of(0.8) * sbs / (sbs - sy);
        for (yi, &bsi) in yd.iter_mut().zip(&bs) {
            *yi = theta * *yi + (T::one() - theta) * bsi;
        }
        sy = s.iter().zip(&yd).map(|(&a, &v)| a * v).sum();
    }
    if !(sy > T::zero()) {
        return false;
    }
    for i in 0..n {
        for j in 0..n {
            b[i * n + j] += yd[i] * yd[j] / sy - bs[i] * bs[j] / sbs;
        }
    }
    (0..n).all(|i| b[i * n + i] > T::zero() && b[i * n + i].is_finite())
}

fn clamp_into<T: Real>(x: &mut [T], lower: &[T], upper: &[T]) {
    for ((xi, &l), &u) in x.iter_mut().zip(lower).zip(upper) {
        *xi = xi.max(l).min(u);
    }
}

fn finish<T: Real>(best: Point<T>, status: SolveStatus, iterations: usize, relaxed: bool, message: Option<String>) -> NlpSolution<T> {
    NlpSolution {
        max_constraint_violation: violation(&best.c),
        objective_value: best.f,
        x_opt: best.x,
        status,
        iterations,
        relaxed,
        message,
    }
}

/// Sequential quadratic programming with a damped-BFGS Hessian, elastic QP
/// subproblems and an ℓ1 merit line search.
///
/// Returns the best iterate found: the lowest-objective feasible one if any,
/// otherwise the least infeasible. A domain error at `x0` yields an
/// `Infeasible` solution with the error as its message; a non-finite
/// objective or constraint at `x0` is an error.
pub fn solve<T: Real, P: NlpProblem<T> + ?Sized>(problem: &P, x0: &[T], opts: &SolveOptions<T>) -> Result<NlpSolution<T>, SolveError> {
    let n = problem.dim();
    let m = problem.num_constraints();
    let lower = problem.lower_bounds();
    let upper = problem.upper_bounds();
    if x0.len() != n || lower.len() != n || upper.len() != n {
        return Err(SolveError::Dimension(format!("dim {n}, x0 {}, bounds {}/{}", x0.len(), lower.len(), upper.len())));
    }
    if let Some(i) = (0..n).find(|&i| !(lower[i] <= upper[i])) {
        return Err(SolveError::InvertedBounds(i));
    }
    let mut x = x0.to_vec();
    clamp_into(&mut x, &lower, &upper);

    let start_failure = |e: EvalError, x: Vec<T>| match e {
        EvalError::Domain(msg) => Ok(NlpSolution {
            x_opt: x,
            objective_value: T::infinity(),
            status: SolveStatus::Infeasible,
            iterations: 0,
            max_constraint_violation: T::infinity(),
            relaxed: false,
            message: Some(msg),
        }),
        EvalError::NonFinite { what } => Err(SolveError::NonFinite(what)),
    };
    let mut cur = match evaluate(problem, &x, m) {
        Ok(p) => p,
        Err(e) => return start_failure(e, x),
    };
    let (mut g, mut jac) = match derivatives(problem, &cur.x, n, m) {
        Ok(d) => d,
        Err(e) => return start_failure(e, cur.x),
    };

    let seed = seed_hessian(problem, n);
    let mut b = seed.clone();
    let mut fresh = true;
    let mut rho = vec![T::zero(); m];
    let mut best = Point { x: cur.x.clone(), f: cur.f, c: cur.c.clone() };
    let mut any_relaxed = false;
    let better = |p: &Point<T>, best: &Point<T>| {
        let (vp, vb) = (violation(&p.c), violation(&best.c));
        if vp <= opts.tol_feas && vb <= opts.tol_feas {
            p.f < best.f
        } else {
            vp < vb
        }
    };
    let lo_step = |x: &[T]| lower.iter().zip(x).map(|(&l, &xi)| l - xi).collect::<Vec<T>>();
    let hi_step = |x: &[T]| upper.iter().zip(x).map(|(&u, &xi)| u - xi).collect::<Vec<T>>();

    let mut message = None;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let elastic = T::of(1e4) * inf_norm(&g).max(inf_norm(&rho)).max(T::one());
        let qp = match qp_subproblem(&b, &g, &jac, &cur.c, &lo_step(&cur.x), &hi_step(&cur.x), elastic) {
            Ok(q) => q,
            Err(QpError::Infeasible) if !fresh => {
                b.copy_from_slice(&seed);
                fresh = true;
                continue;
            }
            Err(e) => {
                message = Some(e.to_string());
                break;
            }
        };
        any_relaxed |= qp.relaxed;
        let d = &qp.step;
        let mu = &qp.multipliers;
        let viol = violation(&cur.c);
        let gd: T = g.iter().zip(d).map(|(&a, &v)| a * v).sum();
        let complementarity: T = mu.iter().zip(&cur.c).map(|(&u, &c)| (u * c).abs()).sum();
        let x_scale = T::one() + inf_norm(&cur.x);
        if !qp.relaxed
            && viol <= opts.tol_feas
            && (inf_norm(d) <= opts.tol_opt * x_scale || gd.abs() + complementarity <= opts.tol_opt * (T::one() + cur.f.abs()))
        {
            converged = true;
            break;
        }

        for (r, &u) in rho.iter_mut().zip(mu) {
            *r = u.abs().max(T::half() * (*r + u.abs()));
        }
        let phi0 = cur.f + penalty(&cur.c, &rho);
        // Predicted merit change from the linearized constraints.
        let linearized: Vec<T> = (0..m)
            .map(|i| cur.c[i] + jac[i * n..(i + 1) * n].iter().zip(d).map(|(&a, &v)| a * v).sum::<T>())
            .collect();
        let slope = (gd + penalty(&linearized, &rho) - penalty(&cur.c, &rho)).min(T::zero());
        let mut alpha = T::one();
        let mut accepted = None;
        for _ in 0..40 {
            let mut xt: Vec<T> = cur.x.iter().zip(d).map(|(&xi, &di)| xi + alpha * di).collect();
            clamp_into(&mut xt, &lower, &upper);
            if let Ok(p) = evaluate(problem, &xt, m) {
                let phi = p.f + penalty(&p.c, &rho);
                if phi <= phi0 + T::of(1e-4) * alpha * slope {
                    debug_assert!(phi <= phi0 + T::epsilon() * phi0.abs().max(T::one()), "merit increased");
                    accepted = Some(p);
                    break;
                }
            }
            alpha *= T::half();
        }
        let Some(next) = accepted else {
            if !fresh {
                b.copy_from_slice(&seed);
                fresh = true;
                continue;
            }
            message = Some("line search stalled".into());
            break;
        };
        let (g_new, jac_new) = match derivatives(problem, &next.x, n, m) {
            Ok(dv) => dv,
            Err(e) => {
                message = Some(e.to_string());
                if better(&next, &best) {
                    best = next;
                }
                break;
            }
        };
        let s: Vec<T> = next.x.iter().zip(&cur.x).map(|(&a, &b)| a - b).collect();
        let y: Vec<T> = lagrangian_gradient(&g_new, &jac_new, mu)
            .iter()
            .zip(&lagrangian_gradient(&g, &jac, mu))
            .map(|(&a, &b)| a - b)
            .collect();
        if bfgs_update(&mut b, &s, &y) {
            fresh = false;
        } else {
            b.copy_from_slice(&seed);
            fresh = true;
        }
        let small_step = inf_norm(&s) <= opts.tol_opt * (T::one() + inf_norm(&next.x));
        cur = next;
        g = g_new;
        jac = jac_new;
        if better(&cur, &best) {
            best = Point { x: cur.x.clone(), f: cur.f, c: cur.c.clone() };
        }
        if small_step && violation(&cur.c) <= opts.tol_feas {
            converged = true;
            break;
        }
    }

    if converged {
        return Ok(finish(cur, SolveStatus::Converged, iterations, any_relaxed, None));
    }
    let status = if violation(&best.c) <= opts.infeasible_threshold { SolveStatus::MaxIterations } else { SolveStatus::Infeasible };
    Ok(finish(best, status, iterations, any_relaxed, message))
}

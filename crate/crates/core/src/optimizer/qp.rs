//! Dense convex QP solver (Goldfarb–Idnani dual active set) for the SQP
//! subproblem
//!
//! ```text
//! minimize ½ dᵀHd + gᵀd   s.t.  A d + c ≥ 0,  lower ≤ d ≤ upper
//! ```
//!
//! When the linearized constraints are inconsistent the problem is re-solved
//! in elastic mode with a single non-negative slack added to every general
//! constraint and penalized in the objective.

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("QP dimensions inconsistent: {0}")]
    Dimension(String),
    #[error("QP data not finite")]
    NonFinite,
    #[error("QP constraints are inconsistent even in elastic mode")]
    Infeasible,
}

/// Result of the QP subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct QpStep<T> {
    pub step: Vec<T>,
    /// Multipliers of the general constraints (bounds excluded).
    pub multipliers: Vec<T>,
    /// True when elastic mode was needed.
    pub relaxed: bool,
    /// Elastic slack (0 unless relaxed).
    pub slack: T,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Row {
    General(usize),
    Lower(usize),
    Upper(usize),
    /// Elastic slack `t ≥ 0`.
    Slack,
}

struct Constraints<'a, T> {
    n: usize,
    jac: &'a [T],
    c: &'a [T],
    lower: &'a [T],
    upper: &'a [T],
    /// Column of the elastic slack, if present.
    slack: Option<usize>,
    rows: Vec<Row>,
}

impl<T: Real> Constraints<'_, T> {
    fn len(&self) -> usize {
        self.rows.len()
    }

    fn dot(&self, k: usize, v: &[T]) -> T {
        match self.rows[k] {
            Row::General(i) => {
                let row = &self.jac[i * self.n..(i + 1) * self.n];
                let base = row.iter().zip(v).map(|(&a, &b)| a * b).sum::<T>();
                base + self.slack.map_or(T::zero(), |s| v[s])
            }
            Row::Lower(i) => v[i],
            Row::Upper(i) => -v[i],
            Row::Slack => v[self.slack.expect("slack row requires slack column")],
        }
    }

    /// Right-hand side `b` of `nᵀv ≥ b`.
    fn rhs(&self, k: usize) -> T {
        match self.rows[k] {
            Row::General(i) => -self.c[i],
            Row::Lower(i) => self.lower[i],
            Row::Upper(i) => -self.upper[i],
            Row::Slack => T::zero(),
        }
    }

    /// `Jᵀ n_k`, where `J` is stored by columns.
    fn project(&self, k: usize, jcols: &[Vec<T>], out: &mut [T]) {
        match self.rows[k] {
            Row::General(_) => {
                for (o, col) in out.iter_mut().zip(jcols) {
                    *o = self.dot(k, col);
                }
            }
            Row::Lower(i) => {
                for (o, col) in out.iter_mut().zip(jcols) {
                    *o = col[i];
                }
            }
            Row::Upper(i) => {
                for (o, col) in out.iter_mut().zip(jcols) {
                    *o = -col[i];
                }
            }
            Row::Slack => {
                let s = self.slack.expect("slack row requires slack column");
                for (o, col) in out.iter_mut().zip(jcols) {
                    *o = col[s];
                }
            }
        }
    }
}

/// Lower-triangular Cholesky factor of a row-major SPD matrix, with a
/// diagonal shift retried if the matrix is not numerically positive
/// definite.
fn cholesky<T: Real>(h: &[T], n: usize) -> Vec<T> {
    let scale = (0..n).map(|i| h[i * n + i].abs()).fold(T::one(), T::max);
    let mut shift = T::zero();
    loop {
        let mut l = vec![T::zero(); n * n];
        let mut ok = true;
        'outer: for j in 0..n {
            let mut d = h[j * n + j] + shift;
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > T::epsilon() * scale) {
                ok = false;
                break 'outer;
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in j + 1..n {
                let mut s = (h[i * n + j] + h[j * n + i]) * T::half();
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        if ok {
            return l;
        }
        shift = if shift == T::zero() { T::of(1e-10) * scale } else { shift * T::of(100.0) };
    }
}

/// Columns of `L⁻ᵀ` (upper triangular), so that `J Jᵀ = H⁻¹`.
fn inverse_transpose_columns<T: Real>(l: &[T], n: usize) -> Vec<Vec<T>> {
    // Solve Lᵀ X = I column by column; Lᵀ is upper triangular.
    let mut cols = vec![vec![T::zero(); n]; n];
    for (j, col) in cols.iter_mut().enumerate() {
        for i in (0..=j).rev() {
            let mut s = if i == j { T::one() } else { T::zero() };
            for k in i + 1..=j {
                s -= l[k * n + i] * col[k];
            }
            col[i] = s / l[i * n + i];
        }
    }
    cols
}

struct DualSolution<T> {
    x: Vec<T>,
    active: Vec<usize>,
    u: Vec<T>,
}

fn rotate<T: Real>(a: T, b: T) -> Option<(T, T, T)> {
    let h = a.hypot(b);
    if h == T::zero() {
        None
    } else {
        Some((a / h, b / h, h))
    }
}

/// Goldfarb–Idnani dual active-set method for `min ½xᵀHx + gᵀx` subject to
/// `n_kᵀx ≥ b_k`. Returns `None` when the constraints are inconsistent.
fn dual_active_set<T: Real>(h: &[T], g: &[T], cons: &Constraints<'_, T>) -> Option<DualSolution<T>> {
    let n = g.len();
    let l = cholesky(h, n);
    let mut jcols = inverse_transpose_columns(&l, n);
    // Unconstrained minimizer x = −J Jᵀ g.
    let jtg: Vec<T> = jcols.iter().map(|c| c.iter().zip(g).map(|(&a, &b)| a * b).sum()).collect();
    let mut x = vec![T::zero(); n];
    for (col, &w) in jcols.iter().zip(&jtg) {
        for (xi, &ci) in x.iter_mut().zip(col) {
            *xi -= ci * w;
        }
    }
    let mut r = vec![vec![T::zero(); n]; n];
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<T> = Vec::new();
    let mut is_active = vec![false; cons.len()];
    let mut d = vec![T::zero(); n];
    let mut z = vec![T::zero(); n];
    let mut rv = vec![T::zero(); n];
    let tol = T::of(1e-11);
    let max_iter = 20 * (n + cons.len()) + 100;
    let mut iter = 0;

    loop {
        // Most violated inactive constraint, scaled by its right-hand side.
        let mut pick: Option<(usize, T)> = None;
        for k in 0..cons.len() {
            if is_active[k] {
                continue;
            }
            let b = cons.rhs(k);
            let s = cons.dot(k, &x) - b;
            let scaled = s / (T::one() + b.abs());
            if scaled < -tol && pick.is_none_or(|(_, best)| scaled < best) {
                pick = Some((k, scaled));
            }
        }
        let Some((p, _)) = pick else {
            return Some(DualSolution { x, active, u });
        };
        let mut u_plus = T::zero();
        loop {
            iter += 1;
            if iter > max_iter {
                return None;
            }
            let q = active.len();
            cons.project(p, &jcols, &mut d);
            z.iter_mut().for_each(|v| *v = T::zero());
            for k in q..n {
                for (zi, &ci) in z.iter_mut().zip(&jcols[k]) {
                    *zi += ci * d[k];
                }
            }
            for i in (0..q).rev() {
                let mut s = d[i];
                for k in i + 1..q {
                    s -= r[i][k] * rv[k];
                }
                rv[i] = s / r[i][i];
            }
            let mut t1 = T::infinity();
            let mut drop_at = None;
            for j in 0..q {
                if rv[j] > T::zero() {
                    let ratio = u[j] / rv[j];
                    if ratio < t1 {
                        t1 = ratio;
                        drop_at = Some(j);
                    }
                }
            }
            let d2: T = d[q..].iter().map(|&v| v * v).sum();
            let dn: T = d.iter().map(|&v| v * v).sum();
            let t2 = if d2 <= T::of(1e-14) * dn.max(T::one()) {
                T::infinity()
            } else {
                (cons.rhs(p) - cons.dot(p, &x)) / d2
            };
            if t1.is_infinite() && t2.is_infinite() {
                return None;
            }
            if t2.is_infinite() {
                for j in 0..q {
                    u[j] -= t1 * rv[j];
                }
                u_plus += t1;
                drop_constraint(drop_at.expect("finite dual step"), &mut active, &mut u, &mut is_active, &mut r, &mut jcols, cons);
                continue;
            }
            let t = t1.min(t2);
            for (xi, &zi) in x.iter_mut().zip(&z) {
                *xi += t * zi;
            }
            for j in 0..q {
                u[j] -= t * rv[j];
            }
            u_plus += t;
            if t2 <= t1 {
                // Full step: add p, triangularize Jᵀn_p with Givens rotations.
                for k in (q + 1..n).rev() {
                    if let Some((c, s, hyp)) = rotate(d[k - 1], d[k]) {
                        d[k - 1] = hyp;
                        d[k] = T::zero();
                        let (left, right) = jcols.split_at_mut(k);
                        for (a, b) in left[k - 1].iter_mut().zip(right[0].iter_mut()) {
                            let (ja, jb) = (*a, *b);
                            *a = c * ja + s * jb;
                            *b = -s * ja + c * jb;
                        }
                    }
                }
                for i in 0..=q {
                    r[i][q] = d[i];
                }
                active.push(p);
                u.push(u_plus);
                is_active[p] = true;
                break;
            }
            drop_constraint(drop_at.expect("finite dual step"), &mut active, &mut u, &mut is_active, &mut r, &mut jcols, cons);
        }
    }
}

fn drop_constraint<T: Real>(
    at: usize,
    active: &mut Vec<usize>,
    u: &mut Vec<T>,
    is_active: &mut [bool],
    r: &mut [Vec<T>],
    jcols: &mut [Vec<T>],
    _cons: &Constraints<'_, T>,
) {
    let q = active.len();
    is_active[active[at]] = false;
    active.remove(at);
    u.remove(at);
    for row in r.iter_mut() {
        for k in at..q - 1 {
            row[k] = row[k + 1];
        }
        row[q - 1] = T::zero();
    }
    for j in at..q - 1 {
        if let Some((c, s, hyp)) = rotate(r[j][j], r[j + 1][j]) {
            r[j][j] = hyp;
            r[j + 1][j] = T::zero();
            for l in j + 1..q - 1 {
                let (a, b) = (r[j][l], r[j + 1][l]);
                r[j][l] = c * a + s * b;
                r[j + 1][l] = -s * a + c * b;
            }
            let (left, right) = jcols.split_at_mut(j + 1);
            for (a, b) in left[j].iter_mut().zip(right[0].iter_mut()) {
                let (ja, jb) = (*a, *b);
                *a = c * ja + s * jb;
                *b = -s * ja + c * jb;
            }
        }
    }
}

fn bound_rows<T: Real>(lower: &[T], upper: &[T]) -> Vec<Row> {
    let mut rows = Vec::new();
    for i in 0..lower.len() {
        if lower[i].is_finite() {
            rows.push(Row::Lower(i));
        }
        if upper[i].is_finite() {
            rows.push(Row::Upper(i));
        }
    }
    rows
}

/// Solves the SQP subproblem for a step `d`.
///
/// `hessian` is row-major `n × n`, `jacobian` row-major `m × n`; bounds may
/// be infinite. Falls back to elastic mode when the constraints are
/// inconsistent, penalizing the slack with weight `elastic_penalty`.
#[allow(clippy::too_many_arguments)]
pub fn qp_subproblem<T: Real>(
    hessian: &[T],
    grad: &[T],
    jacobian: &[T],
    constraint_values: &[T],
    lower: &[T],
    upper: &[T],
    elastic_penalty: T,
) -> Result<QpStep<T>, QpError> {
    let n = grad.len();
    let m = constraint_values.len();
    if hessian.len() != n * n || jacobian.len() != m * n || lower.len() != n || upper.len() != n {
        return Err(QpError::Dimension(format!("n = {n}, m = {m}")));
    }
    let finite = |v: &[T]| v.iter().all(|x| x.is_finite());
    if !finite(hessian) || !finite(grad) || !finite(jacobian) || !finite(constraint_values) {
        return Err(QpError::NonFinite);
    }
    let mut rows: Vec<Row> = (0..m).map(Row::General).collect();
    rows.extend(bound_rows(lower, upper));
    let cons = Constraints { n, jac: jacobian, c: constraint_values, lower, upper, slack: None, rows };
    if let Some(sol) = dual_active_set(hessian, grad, &cons) {
        let mut multipliers = vec![T::zero(); m];
        for (&k, &uk) in sol.active.iter().zip(&sol.u) {
            if let Row::General(i) = cons.rows[k] {
                multipliers[i] = uk;
            }
        }
        return Ok(QpStep { step: sol.x, multipliers, relaxed: false, slack: T::zero() });
    }

    // Elastic mode: variables (d, t), constraints A d + c + t ≥ 0, t ≥ 0.
    let ne = n + 1;
    let mut he = vec![T::zero(); ne * ne];
    for i in 0..n {
        he[i * ne..i * ne + n].copy_from_slice(&hessian[i * n..(i + 1) * n]);
    }
    he[ne * ne - 1] = T::one();
    let mut ge = grad.to_vec();
    ge.push(elastic_penalty);
    let mut lower_e = lower.to_vec();
    lower_e.push(T::neg_infinity());
    let mut upper_e = upper.to_vec();
    upper_e.push(T::infinity());
    let mut rows: Vec<Row> = (0..m).map(Row::General).collect();
    rows.extend(bound_rows(lower, upper));
    rows.push(Row::Slack);
    let cons = Constraints { n, jac: jacobian, c: constraint_values, lower: &lower_e, upper: &upper_e, slack: Some(n), rows };
    let sol = dual_active_set(&he, &ge, &cons).ok_or(QpError::Infeasible)?;
    let mut multipliers = vec![T::zero(); m];
    for (&k, &uk) in sol.active.iter().zip(&sol.u) {
        if let Row::General(i) = cons.rows[k] {
            multipliers[i] = uk;
        }
    }
    let slack = sol.x[n];
    let mut step = sol.x;
    step.truncate(n);
    Ok(QpStep { step, multipliers, relaxed: true, slack })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn eye(n: usize) -> Vec<f64> {
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            h[i * n + i] = 1.0;
        }
        h
    }

    const INF: f64 = f64::INFINITY;

    #[test]
    fn unconstrained_newton_step() {
        let s = qp_subproblem(&eye(2), &[1.0, 0.0], &[], &[], &[-INF; 2], &[INF; 2], 1e3).unwrap();
        assert!((s.step[0] + 1.0).abs() < 1e-12 && s.step[1].abs() < 1e-12);
        assert!(!s.relaxed);
    }

    #[test]
    fn active_halfspace_projects_newton_step() {
        let s = qp_subproblem(&eye(2), &[1.0, 1.0], &[1.0, 0.0], &[0.0], &[-INF; 2], &[INF; 2], 1e3).unwrap();
        assert!(s.step[0].abs() < 1e-12 && (s.step[1] + 1.0).abs() < 1e-12, "{:?}", s.step);
        assert!((s.multipliers[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bounds_are_respected() {
        let s = qp_subproblem(&eye(2), &[-5.0, 5.0], &[], &[], &[-1.0, -1.0], &[1.0, 1.0], 1e3).unwrap();
        assert_eq!(s.step, vec![1.0, -1.0]);
    }

    #[test]
    fn contradictory_constraints_go_elastic() {
        // d ≥ 1 and −d ≥ 1 cannot both hold.
        let s = qp_subproblem(&eye(1), &[0.0], &[1.0, -1.0], &[-1.0, -1.0], &[-INF], &[INF], 1e3).unwrap();
        assert!(s.relaxed);
        assert!(s.step[0].is_finite() && s.slack > 0.0);
        assert!((s.slack - 1.0).abs() < 1e-6);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        assert!(matches!(
            qp_subproblem(&eye(2), &[1.0], &[], &[], &[-INF], &[INF], 1e3),
            Err(QpError::Dimension(_))
        ));
    }

    /// `(H, g, J, c, x*)`.
    type Planted = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>);

    /// Builds a strictly convex QP whose KKT point is known by construction.
    fn planted(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Planted {
        let mut a = vec![0.0; n * n];
        for v in a.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                h[i * n + j] = (0..n).map(|k| a[k * n + i] * a[k * n + j]).sum::<f64>() + if i == j { 0.5 } else { 0.0 };
            }
        }
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let jac: Vec<f64> = (0..m * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n_active = m.min(n).min(rng.random_range(0..=m));
        let mut c = vec![0.0; m];
        let mut mu = vec![0.0; m];
        for i in 0..m {
            let ax: f64 = (0..n).map(|j| jac[i * n + j] * x[j]).sum();
            if i < n_active {
                c[i] = -ax;
                mu[i] = rng.random_range(0.1..2.0);
            } else {
                c[i] = -ax + rng.random_range(0.1..2.0);
            }
        }
        // Stationarity: H x + g − Aᵀμ = 0.
        let g: Vec<f64> = (0..n)
            .map(|j| (0..m).map(|i| jac[i * n + j] * mu[i]).sum::<f64>() - (0..n).map(|k| h[j * n + k] * x[k]).sum::<f64>())
            .collect();
        (h, g, jac, c, x)
    }

    #[test]
    fn matches_planted_kkt_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let n = rng.random_range(1..=20);
            let m = rng.random_range(0..=10);
            let (h, g, jac, c, x) = planted(&mut rng, n, m);
            let s = qp_subproblem(&h, &g, &jac, &c, &vec![-INF; n], &vec![INF; n], 1e3).unwrap();
            assert!(!s.relaxed);
            let err = s.step.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-8, "n={n} m={m} err={err}");
        }
    }

    #[test]
    fn degenerate_duplicate_constraints() {
        let jac = [1.0, 1.0, 1.0, 1.0, 2.0, 2.0];
        let s = qp_subproblem(&eye(2), &[0.0, 0.0], &jac, &[-1.0, -1.0, -2.0], &[-INF; 2], &[INF; 2], 1e3).unwrap();
        assert!((s.step[0] - 0.5).abs() < 1e-10 && (s.step[1] - 0.5).abs() < 1e-10);
    }
}

use super::EvalError;
use crate::scalar::Real;

/// Central-difference gradient with per-coordinate step
/// `max(step, step·|x_i|)`.
pub fn finite_difference_gradient<T: Real>(
    mut f: impl FnMut(&[T]) -> Result<T, EvalError>,
    x: &[T],
    step: T,
) -> Result<Vec<T>, EvalError> {
    let mut probe = x.to_vec();
    let mut grad = vec![T::zero(); x.len()];
    for i in 0..x.len() {
        let h = step.max(step * x[i].abs());
        let (hi, lo) = (x[i] + h, x[i] - h);
        probe[i] = hi;
        let fp = f(&probe)?;
        probe[i] = lo;
        let fm = f(&probe)?;
        probe[i] = x[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(EvalError::NonFinite { what: format!("finite-difference sample along coordinate {i}") });
        }
        // Divide by the realized step to cancel rounding in x ± h.
        grad[i] = (fp - fm) / (hi - lo);
    }
    Ok(grad)
}

/// Central-difference Jacobian of a vector function, row-major `m × n`.
pub fn finite_difference_jacobian<T: Real>(
    mut f: impl FnMut(&[T], &mut [T]) -> Result<(), EvalError>,
    x: &[T],
    m: usize,
    step: T,
) -> Result<Vec<T>, EvalError> {
    let n = x.len();
    let mut probe = x.to_vec();
    let (mut cp, mut cm) = (vec![T::zero(); m], vec![T::zero(); m]);
    let mut jac = vec![T::zero(); m * n];
    for j in 0..n {
        let h = step.max(step * x[j].abs());
        let (hi, lo) = (x[j] + h, x[j] - h);
        probe[j] = hi;
        f(&probe, &mut cp)?;
        probe[j] = lo;
        f(&probe, &mut cm)?;
        probe[j] = x[j];
        for i in 0..m {
            if !cp[i].is_finite() || !cm[i].is_finite() {
                return Err(EvalError::NonFinite { what: format!("constraint {i} sample along coordinate {j}") });
            }
            jac[i * n + j] = (cp[i] - cm[i]) / (hi - lo);
        }
    }
    Ok(jac)
}

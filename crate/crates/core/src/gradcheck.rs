//! Central finite-difference gradient checking.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Where a finite-difference probe produced a non-finite value.
#[derive(Debug, Clone)]
pub struct CheckFailure {
    pub param: usize,
    pub coord: usize,
    pub value: f64,
}

/// Compares an analytic gradient against central differences
/// (f(θ+h) − f(θ−h)) / 2h, coordinate by coordinate, and returns the max
/// relative error |a−n| / max(1e−8, |a|+|n|).
///
/// `value` must be deterministic in its parameters. `analytic` are the
/// gradients of `value` at `params`, one tensor per parameter, same shapes.
pub fn finite_diff_check<V>(
    params: &[Tensor],
    analytic: &[Tensor],
    h: f64,
    value: V,
) -> Result<f64>
where
    V: Fn(&[Tensor]) -> Result<f64>,
{
    if h <= 0.0 {
        return Err(Error::usage("finite_diff_check requires h > 0"));
    }
    if params.len() != analytic.len() {
        return Err(Error::usage(
            "finite_diff_check: one analytic gradient per parameter required",
        ));
    }
    let mut work: Vec<Tensor> = params.to_vec();
    let mut max_rel = 0.0f64;
    for pi in 0..params.len() {
        if analytic[pi].shape != params[pi].shape {
            return Err(Error::Dimension {
                op: "finite_diff_check",
                lhs: params[pi].shape.clone(),
                rhs: analytic[pi].shape.clone(),
            });
        }
        for ci in 0..params[pi].numel() {
            let orig = work[pi].data[ci];
            work[pi].data[ci] = orig + h;
            let f_plus = value(&work)?;
            work[pi].data[ci] = orig - h;
            let f_minus = value(&work)?;
            work[pi].data[ci] = orig;
            if !f_plus.is_finite() || !f_minus.is_finite() {
                let bad = if f_plus.is_finite() { f_minus } else { f_plus };
                return Err(Error::Numeric(format!(
                    "finite_diff_check: non-finite objective {bad} at parameter {pi}, coordinate {ci}"
                )));
            }
            let numeric = (f_plus - f_minus) / (2.0 * h);
            let a = analytic[pi].data[ci];
            let rel = (a - numeric).abs() / (1e-8f64).max(a.abs() + numeric.abs());
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::Tape;

    #[test]
    fn quadratic_is_exact_up_to_rounding() {
        let x = Tensor::new(vec![3], vec![1., 2., 3.]).unwrap();
        let grad = Tensor::new(vec![3], vec![2., 4., 6.]).unwrap();
        let err = finite_diff_check(&[x], &[grad], 1e-5, |p| {
            Ok(p[0].data.iter().map(|v| v * v).sum())
        })
        .unwrap();
        assert!(err < 1e-8, "err = {err}");
    }

    #[test]
    fn constant_function_both_sides_zero() {
        let x = Tensor::new(vec![2], vec![0.3, -0.4]).unwrap();
        let grad = Tensor::zeros(vec![2]);
        let err = finite_diff_check(&[x], &[grad], 1e-5, |_| Ok(42.0)).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn non_finite_objective_reports_location() {
        let x = Tensor::new(vec![2], vec![1.0, 2.0]).unwrap();
        let grad = Tensor::zeros(vec![2]);
        let err = finite_diff_check(&[x], &[grad], 1e-5, |p| {
            if p[0].data[1] != 2.0 {
                Ok(f64::NAN)
            } else {
                Ok(0.0)
            }
        })
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("parameter 0") && msg.contains("coordinate 1"), "{msg}");
    }

    #[test]
    fn agrees_with_tape_on_matmul_sum() {
        let a = Tensor::matrix(2, 3, vec![0.1, -0.2, 0.3, 0.4, -0.5, 0.6]).unwrap();
        let b = Tensor::matrix(3, 2, vec![0.7, 0.1, -0.3, 0.2, 0.5, -0.6]).unwrap();
        let mut tape = Tape::new();
        let av = tape.leaf(a.clone(), true);
        let bv = tape.leaf(b.clone(), true);
        let c = tape.matmul(av, bv).unwrap();
        let loss = tape.sum_all(c);
        tape.backward(loss).unwrap();
        let ga = tape.grad(av).unwrap();
        let gb = tape.grad(bv).unwrap();
        let err = finite_diff_check(&[a, b], &[ga, gb], 1e-5, |p| {
            let mut t = Tape::new();
            let x = t.constant(p[0].clone());
            let y = t.constant(p[1].clone());
            let c = t.matmul(x, y)?;
            let l = t.sum_all(c);
            Ok(t.value(l).data[0])
        })
        .unwrap();
        assert!(err < 1e-8, "err = {err}");
    }
}

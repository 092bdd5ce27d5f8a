//! Central finite differences, the independent oracle for every gradient
//! computed by [`Graph`](super::Graph).

use crate::error::{Error, Result};

/// `(f(x + h·e_i) - f(x - h·e_i)) / 2h` for every coordinate `i`.
pub fn finite_difference_gradient<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::invalid(format!("finite difference step must be > 0, got {h}")));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let plus = f(&probe)?;
        probe[i] = x[i] - h;
        let minus = f(&probe)?;
        probe[i] = x[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::numeric(format!(
                "non-finite objective while perturbing coordinate {i}: f(+h)={plus}, f(-h)={minus}"
            )));
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// Worst coordinate of a gradient comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientMismatch {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

/// Relative error `|a - n| / max(|a|, |n|)`; coordinates whose absolute
/// difference is within `abs_floor` pass regardless.
pub fn check_gradient(
    analytic: &[f64],
    numeric: &[f64],
    rel_tol: f64,
    abs_floor: f64,
) -> Result<(), GradientMismatch> {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    let mut worst: Option<GradientMismatch> = None;
    for (index, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let diff = (a - n).abs();
        if diff <= abs_floor {
            continue;
        }
        let rel = diff / a.abs().max(n.abs());
        if !(rel < rel_tol) && worst.as_ref().map_or(true, |w| rel > w.relative_error) {
            worst = Some(GradientMismatch {
                index,
                analytic: a,
                numeric: n,
                relative_error: rel,
            });
        }
    }
    match worst {
        Some(w) => Err(w),
        None => Ok(()),
    }
}

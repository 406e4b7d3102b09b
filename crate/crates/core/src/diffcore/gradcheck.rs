//! Central finite differences as an oracle for analytic gradients.

use crate::error::{Error, Result};

/// Default perturbation for [`central_difference`].
pub const DEFAULT_STEP: f64 = 1e-5;

/// Central-difference gradient of `f` at `point`.
pub fn central_difference<F>(mut f: F, point: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut x = point.to_vec();
    let mut out = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        let orig = x[i];
        x[i] = orig + step;
        let plus = f(&x)?;
        x[i] = orig - step;
        let minus = f(&x)?;
        x[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite {
                op: format!("finite difference at coordinate {i}"),
            });
        }
        out.push((plus - minus) / (2.0 * step));
    }
    Ok(out)
}

/// Max over coordinates of `|analytic - fd| / max(1, |fd|)`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / n.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Compares `analytic` against central differences of `f` around `point`.
pub fn grad_check<F>(f: F, point: &[f64], analytic: &[f64], step: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if analytic.len() != point.len() {
        return Err(Error::Shape {
            op: "grad_check",
            expected: vec![point.len()],
            found: vec![analytic.len()],
        });
    }
    let numeric = central_difference(f, point, step)?;
    Ok(relative_error(analytic, &numeric))
}

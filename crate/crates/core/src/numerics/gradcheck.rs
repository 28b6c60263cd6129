use crate::error::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-4;

/// Compares an analytic gradient with central differences.
///
/// Returns `max_i |analytic_i − numeric_i| / max(1, |analytic_i|)` where
/// `numeric_i = (f(x + h·e_i) − f(x − h·e_i)) / 2h`.
pub fn finite_diff_check<F>(mut f: F, x: &[f64], analytic: &[f64], h: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if x.len() != analytic.len() {
        return Err(Error::dim("finite_diff_check", &[x.len()], &[analytic.len()]));
    }
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let numeric = central_difference(&mut f, &mut probe, i, h)?;
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    Ok(worst)
}

/// `(f(x + h·e_i) − f(x − h·e_i)) / 2h`, restoring `x[i]` afterwards.
pub fn central_difference<F>(f: &mut F, x: &mut [f64], i: usize, h: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let orig = x[i];
    x[i] = orig + h;
    let plus = f(x);
    x[i] = orig - h;
    let minus = f(x);
    x[i] = orig;
    let (plus, minus) = (plus?, minus?);
    if !plus.is_finite() || !minus.is_finite() {
        return Err(Error::NonFinite(format!(
            "objective evaluated to {plus} / {minus} at coordinate {i}"
        )));
    }
    Ok((plus - minus) / (2.0 * h))
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let err = finite_diff_check(|x| Ok(x[0] * x[0]), &[3.0], &[6.0], DEFAULT_STEP).unwrap();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let err = finite_diff_check(|x| Ok(x[0] * x[0]), &[3.0], &[6.1], DEFAULT_STEP).unwrap();
        assert!(err > 1e-2, "{err}");
    }

    #[test]
    fn non_finite_objective_propagates() {
        let r = finite_diff_check(|_| Ok(f64::NAN), &[1.0], &[0.0], DEFAULT_STEP);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }
}

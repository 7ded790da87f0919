//! Adaptive Simpson quadrature.
//!
//! Used for the drift antiderivative and the change-of-variable map, both of
//! which end up inside exponents, so absolute accuracy matters more than
//! speed here.

use crate::error::{Error, Result};

const MAX_LEVEL: usize = 60;

/// Integrate f over [a, b] (a may exceed b; the sign convention is the usual
/// oriented one) with absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let fl = f(lo);
    let fh = f(hi);
    let m = 0.5 * (lo + hi);
    let fm = f(m);
    let whole = simpson(lo, hi, fl, fm, fh);
    let v = recurse(f, lo, hi, fl, fm, fh, whole, tol, 0)?;
    if !v.is_finite() {
        return Err(Error::NonFinite("quadrature".into()));
    }
    Ok(sign * v)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    level: usize,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    // standard Richardson acceptance: |delta|/15 estimates the error
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if level >= MAX_LEVEL {
        return Err(Error::Quadrature { a, b, level });
    }
    let half = 0.5 * tol;
    Ok(recurse(f, a, m, fa, flm, fm, left, half, level + 1)?
        + recurse(f, m, b, fm, frm, fb, right, half, level + 1)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomial_exactly() {
        let v = adaptive_simpson(&|x| x * x * x - 2.0 * x, 0.0, 2.0, 1e-12).unwrap();
        assert!((v - (4.0 - 4.0)).abs() < 1e-12);
    }

    #[test]
    fn integrates_gaussian() {
        let v = adaptive_simpson(&|x: f64| (-x * x).exp(), -8.0, 8.0, 1e-12).unwrap();
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-11);
    }

    #[test]
    fn oriented_sign() {
        let fwd = adaptive_simpson(&|x| x, 0.0, 3.0, 1e-12).unwrap();
        let bwd = adaptive_simpson(&|x| x, 3.0, 0.0, 1e-12).unwrap();
        assert!((fwd - 4.5).abs() < 1e-12);
        assert!((fwd + bwd).abs() < 1e-12);
    }

    #[test]
    fn empty_interval_is_zero() {
        assert_eq!(adaptive_simpson(&|x| x.exp(), 1.0, 1.0, 1e-12).unwrap(), 0.0);
    }

    #[test]
    fn pathological_integrand_errors_out() {
        // 1/sqrt(|x|) near 0 with an absurd tolerance exhausts the levels
        let r = adaptive_simpson(&|x: f64| x.abs().powf(-0.95), 0.0, 1.0, 1e-300);
        assert!(r.is_err());
    }
}

//! Bracketing root finders shared by the generating-function code.

use crate::error::{BrwError, Result};

/// Bisection for a sign change of `f` on `[lo, hi]`; stops when the bracket is
/// narrower than `tol`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64, max_iter: usize) -> Result<f64> {
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(BrwError::Domain(format!(
            "no sign change on [{lo}, {hi}] ({f_lo:e}, {f_hi:e})"
        )));
    }
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Err(BrwError::NonConvergence {
        what: "bisection".into(),
        iterations: max_iter,
        last_gap: hi - lo,
    })
}

/// Newton's method kept inside a shrinking bracket; falls back to bisection
/// whenever a Newton step would leave the bracket or stalls.
///
/// `f` returns `(value, derivative)`. Converges when `|value| <= ftol`.
pub fn safeguarded_newton<F: Fn(f64) -> (f64, f64)>(
    f: F,
    mut lo: f64,
    mut hi: f64,
    ftol: f64,
    max_iter: usize,
) -> Result<f64> {
    let (f_lo, _) = f(lo);
    let (f_hi, _) = f(hi);
    if f_lo.signum() == f_hi.signum() && f_lo != 0.0 && f_hi != 0.0 {
        return Err(BrwError::Domain(format!(
            "no sign change on [{lo}, {hi}] ({f_lo:e}, {f_hi:e})"
        )));
    }
    let increasing = f_lo < 0.0;
    let mut x = 0.5 * (lo + hi);
    let mut last_width = hi - lo;
    for _ in 0..max_iter {
        let (fx, dfx) = f(x);
        if fx.abs() <= ftol {
            return Ok(x);
        }
        if (fx < 0.0) == increasing {
            lo = x;
        } else {
            hi = x;
        }
        let width = hi - lo;
        if width <= f64::EPSILON * x.abs() {
            return Ok(x);
        }
        let newton = x - fx / dfx;
        if (newton - x).abs() <= 4.0 * f64::EPSILON * x.abs() && newton > lo && newton < hi {
            return Ok(newton);
        }
        let inside = newton > lo && newton < hi && dfx.is_finite() && dfx != 0.0;
        // Require the bracket to at least halve every other step.
        let shrinking = width <= 0.5 * last_width || (newton - x).abs() < 0.25 * width;
        x = if inside && shrinking { newton } else { 0.5 * (lo + hi) };
        last_width = width;
    }
    Err(BrwError::NonConvergence {
        what: "safeguarded Newton".into(),
        iterations: max_iter,
        last_gap: hi - lo,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_sqrt2() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14, 200).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn newton_finds_cubic_root() {
        let r = safeguarded_newton(|x| (x * x * x - 5.0, 3.0 * x * x), 0.0, 10.0, 1e-14, 200).unwrap();
        assert!((r - 5f64.cbrt()).abs() < 1e-13);
    }

    #[test]
    fn no_sign_change_is_an_error() {
        assert!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-12, 100).is_err());
    }
}

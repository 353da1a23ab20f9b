//! Bracketed scalar root finding.

use crate::error::{Error, Result};

/// Bisection on `[lo, hi]` until the bracket is narrower than
/// `tol_rel * max(|lo|, |hi|) + tol_abs`.
///
/// Requires a sign change between the endpoints; an exact zero at either
/// endpoint is returned immediately.
pub fn bisect<F>(mut f: F, mut lo: f64, mut hi: f64, tol_rel: f64, tol_abs: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    if !(lo < hi) {
        return Err(Error::Inversion(format!("empty bracket [{lo}, {hi}]")));
    }
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if !(f_lo.is_finite() && f_hi.is_finite()) || f_lo.signum() == f_hi.signum() {
        return Err(Error::Inversion(format!(
            "no sign change on [{lo:e}, {hi:e}] (f = {f_lo:e}, {f_hi:e})"
        )));
    }
    // 200 halvings exhaust f64 resolution on any finite bracket
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol_rel * lo.abs().max(hi.abs()) + tol_abs || mid <= lo || mid >= hi {
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
    Ok(0.5 * (lo + hi))
}

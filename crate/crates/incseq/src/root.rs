//! Bisection root finding for monotone bracketed problems.

use crate::error::{Error, Result};

/// Iteration cap; 100 halvings exhaust f64 resolution on any bracket.
const MAX_ITER: u32 = 100;

/// Find a sign change of `f` inside `[lo, hi]` by bisection.
///
/// Requires `f(lo)` and `f(hi)` to have opposite signs (a zero endpoint is
/// returned immediately). Stops when the bracket width drops below
/// `rel_tol * |midpoint|`, with `rel_tol` doubling as an absolute floor so
/// roots at or near zero terminate too.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, rel_tol: f64) -> Result<f64> {
    if !(lo.is_finite() && hi.is_finite()) || lo >= hi || rel_tol <= 0.0 {
        return Err(Error::InvalidInput {
            what: format!("bisection bracket [{lo}, {hi}] with tolerance {rel_tol}"),
        });
    }
    let mut check = |x: f64| -> Result<f64> {
        let y = f(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(Error::NonFinite {
                context: "bisection function",
                at: x,
            })
        }
    };
    let flo = check(lo)?;
    if flo == 0.0 {
        return Ok(lo);
    }
    let fhi = check(hi)?;
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::InvalidInput {
            what: format!("no sign change on [{lo}, {hi}] (f(lo)={flo:.3e}, f(hi)={fhi:.3e})"),
        });
    }
    let (mut lo, mut hi) = (lo, hi);
    let falling = flo > 0.0;
    for _ in 0..MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= rel_tol * mid.abs().max(1.0e-300) || hi - lo <= rel_tol {
            return Ok(mid);
        }
        let fm = check(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm > 0.0) == falling {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

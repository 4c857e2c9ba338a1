//! Adaptive Simpson quadrature with an absolute tolerance target.

use crate::error::{Error, Result};

/// Hard cap on bisection depth; interval widths shrink by 2^-60 before this
/// triggers, so hitting it means the integrand is pathological at the
/// requested tolerance.
const MAX_DEPTH: u32 = 60;

/// Integrate `f` over `[a, b]` to absolute tolerance `tol`.
///
/// Classic adaptive Simpson with Richardson extrapolation: a panel is
/// accepted when the two-half refinement moves the estimate by less than
/// 15x its tolerance share. Returns the integral; fails with the achieved
/// error estimate if the depth limit is hit first, and rejects non-finite
/// integrand values outright.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) || tol <= 0.0 {
        return Err(Error::InvalidInput {
            what: format!("integrate over [{a}, {b}] with tolerance {tol}"),
        });
    }
    if a == b {
        return Ok(0.0);
    }
    let mut eval = |x: f64| -> Result<f64> {
        let y = f(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(Error::NonFinite {
                context: "quadrature integrand",
                at: x,
            })
        }
    };
    let fa = eval(a)?;
    let fb = eval(b)?;
    let m = 0.5 * (a + b);
    let fm = eval(m)?;
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut achieved = 0.0;
    let value = panel(
        &mut eval,
        a,
        b,
        fa,
        fm,
        fb,
        whole,
        tol,
        MAX_DEPTH,
        &mut achieved,
    )?;
    if achieved > tol {
        return Err(Error::QuadratureTolerance {
            requested: tol,
            achieved,
        });
    }
    Ok(value)
}

#[allow(clippy::too_many_arguments)]
fn panel<E: FnMut(f64) -> Result<f64>>(
    eval: &mut E,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    achieved: &mut f64,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = eval(lm)?;
    let frm = eval(rm)?;
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    // 15 = 2^4 - 1: Simpson halving gains a factor 16 in the error term.
    if delta.abs() <= 15.0 * tol || depth == 0 {
        if depth == 0 {
            *achieved += delta.abs() / 15.0;
        }
        return Ok(left + right + delta / 15.0);
    }
    let half = 0.5 * tol;
    let l = panel(eval, a, m, fa, flm, fm, left, half, depth - 1, achieved)?;
    let r = panel(eval, m, b, fm, frm, fb, right, half, depth - 1, achieved)?;
    Ok(l + r)
}

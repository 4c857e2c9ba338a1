//! Monotone piecewise-cubic interpolation (Fritsch-Carlson slopes).
//!
//! The value curves handled by this crate are monotone, and the root finders
//! bracket against interpolated values, so the interpolant must not overshoot
//! the data. Fritsch-Carlson slope limiting guarantees that: each cubic piece
//! stays inside the value range of its two endpoints.

/// Fritsch-Carlson slopes for monotone data on a (possibly nonuniform) grid.
///
/// Interior slopes are weighted harmonic means of adjacent divided
/// differences, zeroed at local extrema or flats; endpoint slopes use the
/// one-sided three-point formula clamped back into the monotone region.
pub fn pchip_slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let mut m = vec![0.0; xs.len()];
    pchip_slopes_into(xs, ys, &mut m);
    m
}

/// Same as [`pchip_slopes`] but reuses an output buffer.
pub fn pchip_slopes_into(xs: &[f64], ys: &[f64], out: &mut Vec<f64>) {
    let n = xs.len();
    assert_eq!(n, ys.len(), "grid/value length mismatch");
    out.clear();
    out.resize(n, 0.0);
    match n {
        0 | 1 => return,
        2 => {
            let d = (ys[1] - ys[0]) / (xs[1] - xs[0]);
            out[0] = d;
            out[1] = d;
            return;
        }
        _ => {}
    }
    for i in 1..n - 1 {
        let h0 = xs[i] - xs[i - 1];
        let h1 = xs[i + 1] - xs[i];
        let d0 = (ys[i] - ys[i - 1]) / h0;
        let d1 = (ys[i + 1] - ys[i]) / h1;
        out[i] = if d0 * d1 > 0.0 {
            let w0 = 2.0 * h1 + h0;
            let w1 = h1 + 2.0 * h0;
            (w0 + w1) / (w0 / d0 + w1 / d1)
        } else {
            0.0
        };
    }
    out[0] = edge_slope(
        xs[1] - xs[0],
        xs[2] - xs[1],
        (ys[1] - ys[0]) / (xs[1] - xs[0]),
        (ys[2] - ys[1]) / (xs[2] - xs[1]),
    );
    out[n - 1] = edge_slope(
        xs[n - 1] - xs[n - 2],
        xs[n - 2] - xs[n - 3],
        (ys[n - 1] - ys[n - 2]) / (xs[n - 1] - xs[n - 2]),
        (ys[n - 2] - ys[n - 3]) / (xs[n - 2] - xs[n - 3]),
    );
}

/// One-sided endpoint slope; `h0`/`d0` belong to the boundary interval.
fn edge_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if m * d0 <= 0.0 {
        0.0
    } else if d0 * d1 <= 0.0 && m.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        m
    }
}

/// Cubic Hermite polynomial coefficients for the interval `[x0, x1]` in the
/// local variable `dx = x - x0`: value = c0 + dx*(c1 + dx*(c2 + dx*c3)).
#[inline]
pub fn hermite_coeffs(x0: f64, x1: f64, y0: f64, y1: f64, m0: f64, m1: f64) -> [f64; 4] {
    let h = x1 - x0;
    let d = (y1 - y0) / h;
    [
        y0,
        m0,
        (3.0 * d - 2.0 * m0 - m1) / h,
        (m0 + m1 - 2.0 * d) / (h * h),
    ]
}

/// Evaluate the Hermite piece at `x` inside `[x0, x1]`.
#[inline]
pub fn hermite_eval(x0: f64, x1: f64, y0: f64, y1: f64, m0: f64, m1: f64, x: f64) -> f64 {
    let c = hermite_coeffs(x0, x1, y0, y1, m0, m1);
    let dx = x - x0;
    c[0] + dx * (c[1] + dx * (c[2] + dx * c[3]))
}

/// Integral of the Hermite piece over `[a, b]` with `x0 <= a <= b <= x1`.
#[inline]
#[allow(clippy::too_many_arguments)] // flat kernel: two nodes, two values, two slopes, two limits
pub fn hermite_integral(
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    m0: f64,
    m1: f64,
    a: f64,
    b: f64,
) -> f64 {
    let c = hermite_coeffs(x0, x1, y0, y1, m0, m1);
    let anti = |dx: f64| dx * (c[0] + dx * (c[1] / 2.0 + dx * (c[2] / 3.0 + dx * c[3] / 4.0)));
    anti(b - x0) - anti(a - x0)
}

/// Integral of the Hermite piece over its whole interval.
///
/// Closed form of the Hermite quadrature rule; equals Simpson's rule applied
/// to the piece (Simpson is exact for cubics).
#[inline]
pub fn hermite_integral_full(h: f64, y0: f64, y1: f64, m0: f64, m1: f64) -> f64 {
    h * (y0 + y1) / 2.0 + h * h * (m0 - m1) / 12.0
}

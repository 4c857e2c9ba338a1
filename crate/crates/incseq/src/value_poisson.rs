//! Optimal online selection from a planar Poisson process.
//!
//! Records of a unit-rate Poisson process on `[0, t] x [0, 1]` are inspected
//! in time order, and marks must be accepted in strictly increasing order.
//! The expected count `u(t)` achieved by the optimal policy solves
//!
//! ```text
//! u'(t) = (J u)(t),   u(0) = 0,
//! (J f)(t) = integral over x in [0, 1] of max(f(t(1-x)) + 1 - f(t), 0) dx.
//! ```
//!
//! This module evaluates `J` (and its unclamped policy variant), integrates
//! the equation forward on a geometric time grid, and extracts the optimal
//! acceptance threshold from the solved curve.
//!
//! Numerical scheme: Heun stepping with the partial solution curve as the
//! interpolated history; the gain integral is computed in the substituted
//! variable `s = t(1-x)` by adaptive Simpson, with the clamp boundary located
//! by bisection and used as a panel edge so the quadrature never straddles
//! the kink.

use crate::curve::{CurveBuilder, ScalarCurve};
use crate::error::{Error, Result};
use crate::quad;
use crate::root;

/// Tolerances shared by the operator evaluations.
#[derive(Debug, Clone, Copy)]
pub struct OperatorSettings {
    /// Absolute tolerance for the gain integral (in the x variable).
    pub quadrature_tolerance: f64,
    /// Relative tolerance for locating thresholds and clamp boundaries.
    pub root_tolerance: f64,
}

impl Default for OperatorSettings {
    fn default() -> Self {
        OperatorSettings {
            quadrature_tolerance: 1.0e-10,
            root_tolerance: 1.0e-12,
        }
    }
}

/// Time grid growing geometrically from the origin.
///
/// Spacing starts at `initial_spacing`, multiplies by `growth_ratio` each
/// step, and is optionally capped, which yields a uniform tail. Pure
/// geometric growth keeps the relative spacing roughly constant, matching
/// how the solution flattens.
#[derive(Debug, Clone, Copy)]
pub struct GridPolicy {
    pub initial_spacing: f64,
    pub growth_ratio: f64,
    pub max_spacing: Option<f64>,
}

impl Default for GridPolicy {
    fn default() -> Self {
        GridPolicy {
            initial_spacing: 1.0e-4,
            growth_ratio: 1.0015,
            max_spacing: None,
        }
    }
}

/// Full configuration for the Poisson-side solver.
#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    pub t_max: f64,
    pub grid: GridPolicy,
    pub quadrature_tolerance: f64,
    pub root_tolerance: f64,
}

impl SolverConfig {
    pub fn new(t_max: f64) -> Self {
        SolverConfig {
            t_max,
            grid: GridPolicy::default(),
            quadrature_tolerance: 1.0e-10,
            root_tolerance: 1.0e-12,
        }
    }

    pub fn operator_settings(&self) -> OperatorSettings {
        OperatorSettings {
            quadrature_tolerance: self.quadrature_tolerance,
            root_tolerance: self.root_tolerance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_max.is_finite() && self.t_max > 0.0) {
            return Err(Error::InvalidInput {
                what: format!("t_max = {}", self.t_max),
            });
        }
        let g = &self.grid;
        if !(g.initial_spacing > 0.0 && g.initial_spacing.is_finite()) {
            return Err(Error::InvalidInput {
                what: format!("initial spacing {}", g.initial_spacing),
            });
        }
        if !(g.growth_ratio >= 1.0 && g.growth_ratio.is_finite()) {
            return Err(Error::InvalidInput {
                what: format!("growth ratio {}", g.growth_ratio),
            });
        }
        if let Some(cap) = g.max_spacing {
            if !(cap >= g.initial_spacing) {
                return Err(Error::InvalidInput {
                    what: format!("spacing cap {cap}"),
                });
            }
        }
        if !(self.quadrature_tolerance > 0.0 && self.root_tolerance > 0.0) {
            return Err(Error::InvalidInput {
                what: "tolerances must be positive".into(),
            });
        }
        Ok(())
    }
}

fn finite(v: f64, context: &'static str, at: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { context, at })
    }
}

/// Evaluate `(J f)(t)`: the expected-gain operator with the clamp at zero.
///
/// `f` must be evaluable on `[0, t]`. For a monotone history the clamp
/// activates on exactly one initial segment; its boundary is bisected and
/// the integral is split there. The clamped integrand is used on both
/// panels, so the result stays correct for non-monotone histories as well
/// (the split is then only a useful panel edge, not a correctness
/// assumption).
pub fn apply_j<F: Fn(f64) -> f64>(f: F, t: f64, s: &OperatorSettings) -> Result<f64> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidInput {
            what: format!("operator evaluation at t = {t}"),
        });
    }
    let ft = finite(f(t), "history at evaluation point", t)?;
    if t == 0.0 {
        // Degenerate window: the integrand is identically (f(0)+1-f(0))+ = 1.
        return Ok(1.0);
    }
    let f0 = finite(f(0.0), "history at origin", 0.0)?;
    let integrand = |s: f64| (f(s) + 1.0 - ft).max(0.0);
    // The result is I/t; request the tolerance on the final value.
    let tol_s = s.quadrature_tolerance * t;
    if f0 + 1.0 - ft >= 0.0 {
        let i = quad::integrate(integrand, 0.0, t, tol_s)?;
        return Ok(i / t);
    }
    let x_star = root::bisect(|x| f(t * (1.0 - x)) + 1.0 - ft, 0.0, 1.0, s.root_tolerance)?;
    let s_star = t * (1.0 - x_star);
    let below = quad::integrate(integrand, 0.0, s_star, 0.5 * tol_s)?;
    let above = quad::integrate(integrand, s_star, t, 0.5 * tol_s)?;
    Ok((below + above) / t)
}

/// Evaluate the policy-gain operator: same integrand as [`apply_j`] but
/// without the clamp, cut off at the prescribed acceptance window
/// `delta(t)` instead of the sign change.
pub fn apply_j_hat<F, D>(f: F, delta: D, t: f64, s: &OperatorSettings) -> Result<f64>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidInput {
            what: format!("operator evaluation at t = {t}"),
        });
    }
    let d = delta(t);
    if !(0.0..=1.0).contains(&d) {
        return Err(Error::InvalidInput {
            what: format!("threshold {d} outside [0, 1] at t = {t}"),
        });
    }
    let ft = finite(f(t), "history at evaluation point", t)?;
    if t == 0.0 {
        // The integrand collapses to 1 on a window of width delta(0).
        return Ok(d);
    }
    let lo = t * (1.0 - d);
    let i = quad::integrate(|s| f(s) + 1.0 - ft, lo, t, s.quadrature_tolerance * t)?;
    Ok(i / t)
}

/// The square-root acceptance window `min(sqrt(2/t), 1)` driving the
/// explicit suboptimal policy.
pub fn suboptimal_threshold(t: f64) -> f64 {
    if t <= 2.0 {
        1.0
    } else {
        (2.0 / t).sqrt()
    }
}

/// Integrate `u' = (J u)` from `u(0) = 0` up to `t_max`.
pub fn solve_u(cfg: &SolverConfig) -> Result<ScalarCurve> {
    let os = cfg.operator_settings();
    step_ode(cfg, |b, t| apply_j(|s| b.eval(s), t, &os))
}

/// Integrate the policy equation `v' = (J^ v)` for a given acceptance
/// window; with [`suboptimal_threshold`] this produces the explicit
/// comparison curve lying below `u` everywhere.
pub fn solve_u_hat<D: Fn(f64) -> f64>(cfg: &SolverConfig, delta: D) -> Result<ScalarCurve> {
    let os = cfg.operator_settings();
    step_ode(cfg, |b, t| apply_j_hat(|s| b.eval(s), &delta, t, &os))
}

/// Heun stepping with the growing curve as its own history.
///
/// The predictor node is pushed so the corrector stage can interpolate up
/// to t_next, then replaced by the corrected value. Each accepted step is
/// checked against the invariants u nondecreasing and u(t) < sqrt(2t).
fn step_ode<D>(cfg: &SolverConfig, mut deriv: D) -> Result<ScalarCurve>
where
    D: FnMut(&CurveBuilder, f64) -> Result<f64>,
{
    cfg.validate()?;
    let mut b = CurveBuilder::new(0.0, 0.0, 0.0);
    let mut spacing = cfg.grid.initial_spacing;
    let mut t = 0.0;
    let mut index = 0usize;
    // Derivative at the previous node, for curvature estimates.
    let mut prev: Option<(f64, f64)> = None;
    loop {
        // Derivative at the last accepted node, on the accepted curve. It
        // doubles as the refined Hermite slope for that node, which is what
        // makes the stored history fourth-order accurate.
        let k1 = deriv(&b, t)?;
        b.amend_last_slope(k1);
        if t >= cfg.t_max {
            break;
        }
        let mut h = spacing.min(cfg.t_max - t);
        if cfg.t_max - (t + h) < 0.25 * h {
            // Absorb what would become a sliver of a final step.
            h = cfg.t_max - t;
        }
        let t_next = t + h;
        let u = b.last_value();
        // Second-order predictor. A plain Euler segment feeds its O(h^2)
        // endpoint error through the operator's endpoint sensitivity into
        // k2, and on a grid with spacing proportional to t that bias
        // accumulates linearly in t; adding the curvature term from the
        // derivative history demotes it below the trapezoid error.
        let curv = prev.map(|(tp, kp)| (k1 - kp) / (t - tp)).unwrap_or(0.0);
        let u_pred = (u + h * k1 + 0.5 * h * h * curv).max(u);
        b.push(t_next, u_pred, (k1 + h * curv).max(0.0));
        let k2 = deriv(&b, t_next)?;
        b.pop();
        let u_next = u + 0.5 * h * (k1 + k2);
        index += 1;
        if !u_next.is_finite() {
            return Err(Error::SolverFailure {
                index,
                at: t_next,
                detail: "non-finite step value".into(),
            });
        }
        if u_next < u {
            return Err(Error::SolverFailure {
                index,
                at: t_next,
                detail: format!("value decreased from {u} to {u_next}"),
            });
        }
        if u_next * u_next >= 2.0 * t_next {
            return Err(Error::SolverFailure {
                index,
                at: t_next,
                detail: format!("upper envelope sqrt(2t) crossed: {u_next}"),
            });
        }
        b.push(t_next, u_next, k2);
        prev = Some((t, k1));
        t = t_next;
        spacing *= cfg.grid.growth_ratio;
        if let Some(cap) = cfg.grid.max_spacing {
            spacing = spacing.min(cap);
        }
    }
    b.finish()
}

/// First time the curve reaches 1; until then every improving mark is
/// accepted outright.
pub fn critical_time(curve: &ScalarCurve, root_tol: f64) -> Result<f64> {
    curve
        .inverse(1.0, root_tol)
        .map_err(|_| Error::RangeExceeded {
            what: "critical time: curve never reaches 1 on its domain".into(),
            value: curve.last_value(),
            limit: 1.0,
        })
}

/// Optimal acceptance threshold at time `t`: the largest relative mark
/// x with `u(t(1-x)) + 1 >= u(t)`. Equals 1 while `u(t) <= u(0) + 1`.
pub fn threshold_star(curve: &ScalarCurve, t: f64, root_tol: f64) -> Result<f64> {
    let ut = curve.value_at(t)?;
    if ut <= curve.first_value() + 1.0 {
        return Ok(1.0);
    }
    root::bisect(
        |x| curve.value_at(t * (1.0 - x)).unwrap_or(f64::NAN) + 1.0 - ut,
        0.0,
        1.0,
        root_tol,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const OS: OperatorSettings = OperatorSettings {
        quadrature_tolerance: 1.0e-10,
        root_tolerance: 1.0e-12,
    };

    #[test]
    fn constant_history_gains_one() {
        // (c + 1 - c)+ = 1 for every x, whatever the constant.
        let j = apply_j(|_| 5.0, 3.7, &OS).unwrap();
        assert!((j - 1.0).abs() < 1e-12);
        let j0 = apply_j(|_| -2.0, 0.0, &OS).unwrap();
        assert!((j0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_history_half_t() {
        // f(s) = s at t = 1/2: integrand 1 - x/2 is positive throughout,
        // so J = 1 - 1/4 by direct integration.
        let j = apply_j(|s| s, 0.5, &OS).unwrap();
        assert!((j - 0.75).abs() < 1e-9);
    }

    #[test]
    fn sqrt_history_closed_form() {
        // For f(s) = a sqrt(s/t) with a = alpha sqrt(t), the clamped gain
        // integral evaluates in closed form to 1/a - 1/(3a^2).
        let alpha = std::f64::consts::SQRT_2;
        let t: f64 = 200.0;
        let a = alpha * t.sqrt();
        let j = apply_j(|s| alpha * s.sqrt(), t, &OS).unwrap();
        let exact = 1.0 / a - 1.0 / (3.0 * a * a);
        assert!((j - exact).abs() < 1e-9, "J = {j}, exact = {exact}");
        // Leading-order envelope: the deviation from 1/(alpha sqrt(t)) is
        // exactly 1/(3 alpha^2 t), comfortably below 0.2/t.
        assert!((j - 1.0 / a).abs() <= 0.2 / t);
    }

    #[test]
    fn policy_operator_with_zero_window_is_zero() {
        let j = apply_j_hat(|s| s.sqrt(), |_| 0.0, 9.0, &OS).unwrap();
        assert!(j.abs() < 1e-12);
    }

    #[test]
    fn policy_operator_full_window_on_constant() {
        let j = apply_j_hat(|_| 4.0, |_| 1.0, 2.5, &OS).unwrap();
        assert!((j - 1.0).abs() < 1e-10);
    }

    #[test]
    fn policy_operator_matches_clamped_at_exact_threshold() {
        // With the window set to the sign-change location the clamp is
        // inactive, so both operators agree.
        let alpha = std::f64::consts::SQRT_2;
        for &t in &[10.0f64, 100.0, 1000.0] {
            let f = |s: f64| alpha * s.sqrt();
            // Exact positive-part boundary for this history.
            let d = 2.0 / (alpha * t.sqrt()) - 1.0 / (alpha * alpha * t);
            let a = apply_j(f, t, &OS).unwrap();
            let b = apply_j_hat(f, |_| d, t, &OS).unwrap();
            assert!((a - b).abs() < 1e-9, "t = {t}");
        }
    }

    #[test]
    fn non_finite_history_rejected() {
        let e = apply_j(|s| (s - 0.5).ln(), 1.0, &OS).unwrap_err();
        assert_eq!(e.kind(), "non-finite");
    }

    #[test]
    fn short_solve_basic_shape() {
        let mut cfg = SolverConfig::new(2.0);
        cfg.grid.initial_spacing = 1.0e-4;
        cfg.grid.growth_ratio = 1.003;
        let u = solve_u(&cfg).unwrap();
        assert_eq!(u.first_value(), 0.0);
        // Unit derivative at the origin.
        let t0 = u.ts()[1];
        assert!(((u.values()[1] / t0) - 1.0).abs() < 0.01);
        // Strictly below the square-root envelope.
        for (t, v) in u.ts().iter().zip(u.values()).skip(1) {
            assert!(v * v < 2.0 * t);
        }
        u.check_concave(1e-8).unwrap();
    }

    #[test]
    fn critical_time_out_of_reach() {
        let cfg = SolverConfig::new(0.5);
        let u = solve_u(&cfg).unwrap();
        assert!(u.last_value() < 1.0);
        assert_eq!(
            critical_time(&u, 1e-12).unwrap_err().kind(),
            "range-exceeded"
        );
    }

    #[test]
    fn critical_time_consistent() {
        let mut cfg = SolverConfig::new(3.0);
        cfg.grid.growth_ratio = 1.003;
        let u = solve_u(&cfg).unwrap();
        let t1 = critical_time(&u, 1e-12).unwrap();
        assert!(t1 > 0.5 && t1 < 3.0);
        assert!((u.value_at(t1).unwrap() - 1.0).abs() < 1e-9);
        // Below the critical time the threshold saturates.
        assert_eq!(threshold_star(&u, 0.5 * t1, 1e-12).unwrap(), 1.0);
        // Just above it drops continuously from 1.
        let d = threshold_star(&u, t1 * 1.001, 1e-12).unwrap();
        assert!(d < 1.0 && d > 0.99);
    }

    #[test]
    fn suboptimal_threshold_shape() {
        assert_eq!(suboptimal_threshold(0.0), 1.0);
        assert_eq!(suboptimal_threshold(2.0), 1.0);
        assert!((suboptimal_threshold(8.0) - 0.5).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        // J is invariant under constant shifts of the history.
        #[test]
        fn shift_invariance(
            incs in proptest::collection::vec(0.0f64..0.4, 6..14),
            c in -5.0f64..5.0,
            t in 0.5f64..40.0,
        ) {
            // Piecewise-linear monotone history on [0, t].
            let n = incs.len();
            let cum: Vec<f64> = incs.iter().scan(0.0, |s, &d| { *s += d; Some(*s) }).collect();
            let f = move |s: f64| {
                let pos = (s / t * n as f64).min(n as f64 - 1e-9);
                let i = pos.floor() as usize;
                let frac = pos - i as f64;
                let lo = if i == 0 { 0.0 } else { cum[i - 1] };
                lo + frac * (cum[i] - lo)
            };
            let a = apply_j(&f, t, &OS).unwrap();
            let b = apply_j(|s| f(s) + c, t, &OS).unwrap();
            prop_assert!((a - b).abs() < 1e-8, "shift moved J by {}", (a - b).abs());
        }

        // Lowering the past while keeping the endpoint fixed shrinks the
        // integrand pointwise: if g - f is nondecreasing and g(t) = f(t)
        // (hence g <= f on [0, t]), then J g <= J f.
        #[test]
        fn endpoint_anchored_monotonicity(
            incs in proptest::collection::vec(0.0f64..0.4, 6..12),
            extra in proptest::collection::vec(0.0f64..0.3, 6..12),
            t in 1.0f64..30.0,
        ) {
            let n = incs.len();
            let cum: Vec<f64> = incs.iter().scan(0.0, |s, &d| { *s += d; Some(*s) }).collect();
            let f = move |s: f64| {
                let pos = (s / t * n as f64).min(n as f64 - 1e-9);
                let i = pos.floor() as usize;
                let frac = pos - i as f64;
                let lo = if i == 0 { 0.0 } else { cum[i - 1] };
                lo + frac * (cum[i] - lo)
            };
            // d nondecreasing with d(t) = 0, hence d <= 0 on [0, t].
            let m = extra.len();
            let dcum: Vec<f64> = extra.iter().scan(0.0, |s, &d| { *s += d; Some(*s) }).collect();
            let dtop = *dcum.last().unwrap();
            let d = move |s: f64| {
                let pos = (s / t * m as f64).min(m as f64 - 1e-9);
                let i = pos.floor() as usize;
                let frac = pos - i as f64;
                let lo = if i == 0 { 0.0 } else { dcum[i - 1] };
                (lo + frac * (dcum[i] - lo)) - dtop
            };
            let jf = apply_j(&f, t, &OS).unwrap();
            let jg = apply_j(|s| f(s) + d(s), t, &OS).unwrap();
            prop_assert!(jg <= jf + 1e-8, "Jg = {jg} > Jf = {jf}");
        }
    }
}

//! Sampled monotone curves on a nonuniform grid.

use crate::error::{Error, Result};
use crate::interp;
use crate::root;

/// A nondecreasing scalar function sampled on a strictly increasing grid,
/// evaluated between nodes by monotone cubic interpolation.
///
/// Construction validates monotonicity of the values; concavity (divided
/// differences nonincreasing) is checked separately with an explicit
/// tolerance because solver output carries small stepping noise.
#[derive(Debug, Clone)]
pub struct ScalarCurve {
    ts: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl ScalarCurve {
    pub fn from_nodes(ts: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if ts.len() != values.len() {
            return Err(Error::InvalidInput {
                what: format!(
                    "curve grid/value length mismatch ({} vs {})",
                    ts.len(),
                    values.len()
                ),
            });
        }
        if ts.len() < 2 {
            return Err(Error::InvalidInput {
                what: "curve needs at least two nodes".into(),
            });
        }
        for (i, w) in ts.windows(2).enumerate() {
            if !(w[0].is_finite() && w[1].is_finite()) || w[1] <= w[0] {
                return Err(Error::InvalidInput {
                    what: format!("curve grid not strictly increasing at node {}", i + 1),
                });
            }
        }
        for (i, w) in values.windows(2).enumerate() {
            if !(w[0].is_finite() && w[1].is_finite()) || w[1] < w[0] {
                return Err(Error::InvalidInput {
                    what: format!("curve values decrease at node {}", i + 1),
                });
            }
        }
        let slopes = interp::pchip_slopes(&ts, &values);
        Ok(ScalarCurve { ts, values, slopes })
    }

    pub fn len(&self) -> usize {
        self.ts.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn t_min(&self) -> f64 {
        self.ts[0]
    }

    pub fn t_max(&self) -> f64 {
        *self.ts.last().unwrap()
    }

    pub fn ts(&self) -> &[f64] {
        &self.ts
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn first_value(&self) -> f64 {
        self.values[0]
    }

    pub fn last_value(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Index of the interval containing `t` (clamped to valid intervals).
    fn interval(&self, t: f64) -> usize {
        let i = self.ts.partition_point(|&x| x <= t);
        i.clamp(1, self.ts.len() - 1) - 1
    }

    /// Interpolated value at `t`; errors outside `[t_min, t_max]`.
    pub fn value_at(&self, t: f64) -> Result<f64> {
        if !t.is_finite() || t < self.t_min() || t > self.t_max() {
            return Err(Error::RangeExceeded {
                what: "curve evaluation point".into(),
                value: t,
                limit: self.t_max(),
            });
        }
        let i = self.interval(t);
        Ok(interp::hermite_eval(
            self.ts[i],
            self.ts[i + 1],
            self.values[i],
            self.values[i + 1],
            self.slopes[i],
            self.slopes[i + 1],
            t,
        ))
    }

    /// Leftmost `t` with interpolated value equal to `y`.
    pub fn inverse(&self, y: f64, rel_tol: f64) -> Result<f64> {
        if y < self.first_value() || y > self.last_value() {
            return Err(Error::RangeExceeded {
                what: "curve inverse target".into(),
                value: y,
                limit: self.last_value(),
            });
        }
        // Bracket on node values first; the interpolant is monotone inside.
        let j = self.values.partition_point(|&v| v < y);
        if j == 0 {
            return Ok(self.ts[0]);
        }
        let (lo, hi) = (self.ts[j - 1], self.ts[j]);
        if self.values[j - 1] == y {
            return Ok(self.ts[j - 1]);
        }
        root::bisect(
            |t| self.value_at(t).unwrap_or(f64::NAN) - y,
            lo,
            hi,
            rel_tol,
        )
    }

    /// Largest gap by which divided differences fail to be nonincreasing.
    /// Zero for exactly concave data.
    pub fn max_concavity_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        let mut prev = f64::INFINITY;
        for i in 0..self.ts.len() - 1 {
            let d = (self.values[i + 1] - self.values[i]) / (self.ts[i + 1] - self.ts[i]);
            worst = worst.max(d - prev);
            prev = d;
        }
        worst
    }

    pub fn check_concave(&self, tol: f64) -> Result<()> {
        let v = self.max_concavity_violation();
        if v > tol {
            return Err(Error::SolverFailure {
                index: 0,
                at: 0.0,
                detail: format!("concavity violated by {v:.3e} (tolerance {tol:.3e})"),
            });
        }
        Ok(())
    }
}

/// Append-only curve under construction; used by the time steppers, which
/// need to evaluate the partial curve (including a provisional last node)
/// while integrating.
///
/// Unlike [`ScalarCurve::from_nodes`], the builder carries caller-supplied
/// Hermite slopes: an ODE stepper knows the exact derivative at every
/// accepted node, and using it directly makes the history interpolant
/// fourth-order accurate instead of third. A limiter caps each slope at
/// three times the adjacent secant (and floors it at zero) during
/// evaluation, so monotonicity survives even aggressive slope data; for
/// smooth solver output the limiter never engages.
#[derive(Debug, Clone)]
pub(crate) struct CurveBuilder {
    ts: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

fn limited(slope: f64, secant: f64) -> f64 {
    slope.clamp(0.0, 3.0 * secant.max(0.0))
}

impl CurveBuilder {
    pub fn new(t0: f64, v0: f64, slope0: f64) -> Self {
        CurveBuilder {
            ts: vec![t0],
            values: vec![v0],
            slopes: vec![slope0],
        }
    }

    pub fn last_value(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub fn push(&mut self, t: f64, v: f64, slope: f64) {
        self.ts.push(t);
        self.values.push(v);
        self.slopes.push(slope);
    }

    pub fn pop(&mut self) {
        self.ts.pop();
        self.values.pop();
        self.slopes.pop();
    }

    /// Replace the slope stored at the final node, typically after the
    /// derivative there has been re-evaluated on the corrected curve.
    pub fn amend_last_slope(&mut self, slope: f64) {
        *self.slopes.last_mut().unwrap() = slope;
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.ts.len();
        if n == 1 {
            return self.values[0];
        }
        let i = self.ts.partition_point(|&x| x <= t).clamp(1, n - 1) - 1;
        let d = (self.values[i + 1] - self.values[i]) / (self.ts[i + 1] - self.ts[i]);
        interp::hermite_eval(
            self.ts[i],
            self.ts[i + 1],
            self.values[i],
            self.values[i + 1],
            limited(self.slopes[i], d),
            limited(self.slopes[i + 1], d),
            t,
        )
    }

    /// Freeze into a validated curve, keeping the supplied slopes after one
    /// limiting pass (each node against the smaller neighbouring secant).
    pub fn finish(self) -> Result<ScalarCurve> {
        let mut curve = ScalarCurve::from_nodes(self.ts, self.values)?;
        let n = curve.ts.len();
        for i in 0..n {
            let left = if i > 0 {
                (curve.values[i] - curve.values[i - 1]) / (curve.ts[i] - curve.ts[i - 1])
            } else {
                f64::INFINITY
            };
            let right = if i + 1 < n {
                (curve.values[i + 1] - curve.values[i]) / (curve.ts[i + 1] - curve.ts[i])
            } else {
                f64::INFINITY
            };
            curve.slopes[i] = limited(self.slopes[i], left.min(right));
        }
        Ok(curve)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sqrt_curve() -> ScalarCurve {
        let ts: Vec<f64> = (0..200).map(|i| i as f64 * 0.05).collect();
        let vs: Vec<f64> = ts.iter().map(|t| (2.0 * t).sqrt()).collect();
        ScalarCurve::from_nodes(ts, vs).unwrap()
    }

    #[test]
    fn eval_and_inverse_are_consistent() {
        let c = sqrt_curve();
        let t = c.inverse(1.0, 1e-13).unwrap();
        assert!((c.value_at(t).unwrap() - 1.0).abs() < 1e-10);
        assert!((t - 0.5).abs() < 1e-6);
    }

    #[test]
    fn decreasing_values_rejected() {
        let e = ScalarCurve::from_nodes(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 0.5]).unwrap_err();
        assert_eq!(e.kind(), "invalid-input");
    }

    #[test]
    fn out_of_range_eval_rejected() {
        let c = sqrt_curve();
        assert_eq!(c.value_at(-0.1).unwrap_err().kind(), "range-exceeded");
        assert_eq!(c.value_at(1.0e4).unwrap_err().kind(), "range-exceeded");
    }

    #[test]
    fn inverse_above_range_rejected() {
        let c = sqrt_curve();
        assert_eq!(
            c.inverse(100.0, 1e-12).unwrap_err().kind(),
            "range-exceeded"
        );
    }

    #[test]
    fn concavity_check_flags_convex_data() {
        let c = ScalarCurve::from_nodes(vec![0.0, 1.0, 2.0], vec![0.0, 0.1, 1.0]).unwrap();
        assert!(c.max_concavity_violation() > 0.5);
        assert!(c.check_concave(1e-9).is_err());
        assert!(sqrt_curve().max_concavity_violation() < 1e-12);
    }

    #[test]
    fn builder_matches_batch_slopes() {
        // Push/pop churn must leave no trace: two builders fed the same
        // final nodes agree exactly.
        let ts: Vec<f64> = (0..50).map(|i| 0.1 * (i + 1) as f64).collect();
        let vs: Vec<f64> = ts.iter().map(|t| t.sqrt() + t).collect();
        let ms: Vec<f64> = ts.iter().map(|t| 0.5 / t.sqrt() + 1.0).collect();
        let mut a = CurveBuilder::new(ts[0], vs[0], ms[0]);
        let mut b = CurveBuilder::new(ts[0], vs[0], ms[0]);
        for i in 1..ts.len() {
            a.push(ts[i], vs[i], ms[i]);
            b.push(ts[i], vs[i], ms[i] + 7.0); // provisional slope
            b.pop();
            b.push(ts[i], vs[i], 0.0);
            b.amend_last_slope(ms[i]);
        }
        let fa = a.finish().unwrap();
        let fb = b.finish().unwrap();
        for (x, y) in fa.slopes.iter().zip(fb.slopes.iter()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn builder_exact_slopes_beat_fitted_ones() {
        // With the true derivative stored at each node, midpoint errors
        // should sit at fourth-order scale, far below slope-fitting error.
        let ts: Vec<f64> = (0..80).map(|i| 0.05 * i as f64).collect();
        let vs: Vec<f64> = ts.iter().map(|t| (1.0 + t).ln()).collect();
        let mut b = CurveBuilder::new(ts[0], vs[0], 1.0);
        for i in 1..ts.len() {
            b.push(ts[i], vs[i], 1.0 / (1.0 + ts[i]));
        }
        let mut worst: f64 = 0.0;
        for i in 0..ts.len() - 1 {
            let mid = 0.5 * (ts[i] + ts[i + 1]);
            worst = worst.max((b.eval(mid) - (1.0 + mid).ln()).abs());
        }
        assert!(worst < 5e-7, "midpoint error {worst:.3e}");
        let frozen = b.finish().unwrap();
        let mut worst_frozen: f64 = 0.0;
        for i in 0..ts.len() - 1 {
            let mid = 0.5 * (ts[i] + ts[i + 1]);
            worst_frozen =
                worst_frozen.max((frozen.value_at(mid).unwrap() - (1.0 + mid).ln()).abs());
        }
        assert!(
            worst_frozen < 5e-7,
            "frozen midpoint error {worst_frozen:.3e}"
        );
    }

    #[test]
    fn builder_limits_wild_slopes() {
        // Absurd slope data must not break monotonicity of the interpolant.
        let mut b = CurveBuilder::new(0.0, 0.0, 1e6);
        for i in 1..30 {
            let t = i as f64 * 0.1;
            b.push(t, t * t, if i % 2 == 0 { -50.0 } else { 1e6 });
        }
        let c = b.finish().unwrap();
        let mut prev = -1.0;
        for j in 0..2000 {
            let t = 2.9 * j as f64 / 1999.0;
            let v = c.value_at(t).unwrap();
            assert!(v >= prev - 1e-12, "non-monotone at t = {t}");
            prev = v;
        }
    }
}

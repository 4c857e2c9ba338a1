//! Monte Carlo engines for both selection models with pluggable
//! interval-acceptance policies.
//!
//! Every policy's acceptance region, given the state, is an interval
//! `(z, cut]` (or `(z, cut)` where the cited rule is strict), so a
//! replicate is a single pass over arrivals. The state is kept in
//! multiplicative coordinates: the headroom `w = 1 - z` and, in the
//! Poisson model, the rescaled remaining horizon `that = (t - s) w`, both
//! updated by factors of `1 - q` on acceptance (`q` the relative position
//! of the accepted mark). This avoids catastrophic cancellation as marks
//! crowd toward 1.
//!
//! Reproducibility contract: replicate `r` consumes the counter-based
//! stream keyed `(seed, r)` and nothing else, and statistics are
//! accumulated as exact integer sums, so results are bit-identical for a
//! given `(seed, configuration)` no matter how replicates are scheduled
//! across threads.

use crate::curve::ScalarCurve;
use crate::error::{Error, Result};
use crate::rng::ReplicateRng;
use crate::value_discrete::DiscreteValueRow;
use crate::value_poisson::{critical_time, threshold_star};
use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;

/// Online acceptance policies. `SelfSimilar` and the table policies adapt
/// to the state; the stationary ones use one fixed window.
#[derive(Debug, Clone)]
pub enum ThresholdPolicy {
    /// Fixed-n model: accept iff `0 < x - z <= window`.
    StationaryDiscrete { window: f64 },
    /// Poisson model: accept iff `0 < x - z < window` (strict, as cited).
    StationaryPoisson { window: f64 },
    /// Poisson model: accept iff `0 < (x-z)/(1-z) <= min(alpha/sqrt(that), 1)`
    /// with `that` the rescaled remaining horizon `(t - s)(1 - z)`.
    SelfSimilar { alpha: f64 },
    /// Fixed-n model: accept iff
    /// `0 < (x-z)/(1-z) <= min(sqrt(2/(k(1-z))), 1)`, `k` the number of
    /// items remaining after the current one.
    ScaledSqrtDiscrete,
    /// Fixed-n model: accept iff `v_k(x) + 1 >= v_k(z)` (on equality,
    /// accept), with `v_k` the solved value row at `k` remaining.
    TableOptimalDiscrete { rows: Arc<Vec<DiscreteValueRow>> },
    /// Poisson model: accept iff the relative mark clears the optimal
    /// threshold at the rescaled remaining horizon, read from a
    /// precomputed table of the solved value curve's thresholds.
    TableOptimalPoisson {
        table: Arc<ThresholdTable>,
        saturated_below: f64,
    },
    /// Accept every running maximum.
    GreedyRecords,
}

/// Threshold lookup table on a strictly increasing horizon grid. Kept
/// apart from the value-curve type because thresholds *decrease* as the
/// horizon grows; lookups clamp at the ends and interpolate linearly.
#[derive(Debug)]
pub struct ThresholdTable {
    ts: Vec<f64>,
    thresholds: Vec<f64>,
}

impl ThresholdTable {
    fn lookup(&self, t: f64) -> f64 {
        let last = self.ts.len() - 1;
        if t <= self.ts[0] {
            return self.thresholds[0];
        }
        if t >= self.ts[last] {
            return self.thresholds[last];
        }
        let hi = self.ts.partition_point(|&x| x < t);
        let (a, b) = (self.ts[hi - 1], self.ts[hi]);
        let w = (t - a) / (b - a);
        self.thresholds[hi - 1] * (1.0 - w) + self.thresholds[hi] * w
    }
}

impl ThresholdPolicy {
    /// Wrap solved value rows (row `i` must hold horizon `k = i`) for
    /// table-driven optimal play with up to `rows.len()` arrivals.
    pub fn table_optimal_discrete(rows: Vec<DiscreteValueRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Config {
                what: "empty value-row table".into(),
            });
        }
        for (i, row) in rows.iter().enumerate() {
            if row.k() != i {
                return Err(Error::Config {
                    what: format!("value-row table holds k = {} at slot {i}", row.k()),
                });
            }
        }
        Ok(ThresholdPolicy::TableOptimalDiscrete {
            rows: Arc::new(rows),
        })
    }

    /// Tabulate the optimal acceptance threshold of a solved Poisson value
    /// curve on a geometric grid of rescaled horizons, for O(1) lookups
    /// during simulation. Below the critical time the threshold is 1.
    pub fn table_optimal_poisson(curve: &ScalarCurve, root_tolerance: f64) -> Result<Self> {
        let t1 = critical_time(curve, root_tolerance)?;
        let t_max = curve.t_max();
        if !(t_max > t1 * 1.01) {
            return Err(Error::Config {
                what: format!("curve horizon {t_max:.4} barely exceeds the critical time {t1:.4}"),
            });
        }
        let ratio = 1.004f64;
        let n = ((t_max / t1).ln() / ratio.ln()).ceil() as usize + 1;
        let mut ts = Vec::with_capacity(n + 1);
        let mut vals = Vec::with_capacity(n + 1);
        let mut t = t1;
        for _ in 0..=n {
            let t_here = t.min(t_max);
            ts.push(t_here);
            vals.push(threshold_star(curve, t_here, root_tolerance)?);
            if t_here >= t_max {
                break;
            }
            t *= ratio;
        }
        let table = ThresholdTable {
            ts,
            thresholds: vals,
        };
        Ok(ThresholdPolicy::TableOptimalPoisson {
            table: Arc::new(table),
            saturated_below: t1,
        })
    }

    /// Short machine-readable description, embedded in statistics output.
    pub fn describe(&self) -> String {
        match self {
            ThresholdPolicy::StationaryDiscrete { window } => {
                format!("stationary-discrete(window={window})")
            }
            ThresholdPolicy::StationaryPoisson { window } => {
                format!("stationary-poisson(window={window})")
            }
            ThresholdPolicy::SelfSimilar { alpha } => format!("self-similar(alpha={alpha})"),
            ThresholdPolicy::ScaledSqrtDiscrete => "scaled-sqrt-discrete".into(),
            ThresholdPolicy::TableOptimalDiscrete { rows } => {
                format!("table-optimal-discrete(rows={})", rows.len())
            }
            ThresholdPolicy::TableOptimalPoisson { .. } => "table-optimal-poisson".into(),
            ThresholdPolicy::GreedyRecords => "greedy-records".into(),
        }
    }

    fn fixed_n_capable(&self) -> bool {
        matches!(
            self,
            ThresholdPolicy::StationaryDiscrete { .. }
                | ThresholdPolicy::ScaledSqrtDiscrete
                | ThresholdPolicy::TableOptimalDiscrete { .. }
                | ThresholdPolicy::GreedyRecords
        )
    }

    fn poisson_capable(&self) -> bool {
        matches!(
            self,
            ThresholdPolicy::StationaryPoisson { .. }
                | ThresholdPolicy::SelfSimilar { .. }
                | ThresholdPolicy::TableOptimalPoisson { .. }
                | ThresholdPolicy::GreedyRecords
        )
    }

    fn validate_window(&self) -> Result<()> {
        let w = match self {
            ThresholdPolicy::StationaryDiscrete { window }
            | ThresholdPolicy::StationaryPoisson { window } => *window,
            ThresholdPolicy::SelfSimilar { alpha } => {
                if !(alpha.is_finite() && *alpha > 0.0) {
                    return Err(Error::Config {
                        what: format!("self-similar policy needs alpha > 0, got {alpha}"),
                    });
                }
                return Ok(());
            }
            _ => return Ok(()),
        };
        if !(w.is_finite() && (0.0..=1.0).contains(&w)) {
            return Err(Error::Config {
                what: format!("stationary policy window {w} outside [0, 1]"),
            });
        }
        Ok(())
    }
}

/// Which model a simulation ran, with its size parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "model")]
pub enum ModelTag {
    #[serde(rename = "fixed-n")]
    FixedN { n: u64 },
    #[serde(rename = "poisson")]
    Poisson { t: f64 },
}

/// Monte Carlo summary with exact integer sufficient statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimStats {
    #[serde(flatten)]
    pub model: ModelTag,
    pub policy: String,
    pub replicates: u64,
    pub seed: u64,
    /// Sum of selected lengths over replicates (exact).
    pub sum_lengths: u64,
    /// Sum of squared selected lengths (exact).
    pub sum_squared_lengths: u64,
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
}

fn stats_from_sums(
    model: ModelTag,
    policy: &ThresholdPolicy,
    replicates: u64,
    seed: u64,
    s1: u128,
    s2: u128,
) -> Result<SimStats> {
    let sum_lengths = u64::try_from(s1).map_err(|_| Error::InvalidInput {
        what: "selected-length sum overflows 64 bits".into(),
    })?;
    let sum_squared_lengths = u64::try_from(s2).map_err(|_| Error::InvalidInput {
        what: "squared-length sum overflows 64 bits".into(),
    })?;
    let r = replicates as f64;
    let mean = sum_lengths as f64 / r;
    let variance = if replicates > 1 {
        // Exact integer numerator: R * S2 - S1^2 >= 0.
        let num = (replicates as u128 * s2) as i128 - (s1 * s1) as i128;
        (num as f64) / (r * (r - 1.0))
    } else {
        0.0
    };
    Ok(SimStats {
        model,
        policy: policy.describe(),
        replicates,
        seed,
        sum_lengths,
        sum_squared_lengths,
        mean,
        variance,
        std_error: (variance / r).sqrt(),
    })
}

fn fixed_n_replicate(policy: &ThresholdPolicy, n: u64, seed: u64, rep: u64) -> u32 {
    let mut rng = ReplicateRng::new(seed, rep);
    let mut z = 0.0f64;
    let mut w = 1.0f64;
    let mut len = 0u32;
    for i in 0..n {
        let x = rng.uniform();
        let remaining = n - 1 - i;
        if x <= z {
            continue;
        }
        let accept = match policy {
            ThresholdPolicy::StationaryDiscrete { window } => x - z <= *window,
            ThresholdPolicy::ScaledSqrtDiscrete => {
                let kh = remaining as f64 * w;
                let delta = if kh <= 2.0 { 1.0 } else { (2.0 / kh).sqrt() };
                x - z <= delta * w
            }
            ThresholdPolicy::TableOptimalDiscrete { rows } => {
                let row = &rows[remaining as usize];
                // Nodes are exact grid points; interior evaluation cannot
                // fail for x, z inside [0, 1].
                row.value_at(x).unwrap_or(f64::NEG_INFINITY) + 1.0
                    >= row.value_at(z).unwrap_or(f64::INFINITY)
            }
            ThresholdPolicy::GreedyRecords => true,
            _ => unreachable!("model capability checked before dispatch"),
        };
        if accept {
            debug_assert!(x > z, "selected marks must increase");
            len += 1;
            z = x;
            w = 1.0 - x;
        }
    }
    len
}

fn poisson_replicate(policy: &ThresholdPolicy, t: f64, seed: u64, rep: u64) -> u32 {
    let mut rng = ReplicateRng::new(seed, rep);
    let mut z = 0.0f64;
    let mut w = 1.0f64;
    // Rescaled remaining horizon (t - s)(1 - z), updated incrementally.
    let mut that = t;
    let mut len = 0u32;
    loop {
        let gap = -rng.uniform_open().ln();
        that -= gap * w;
        if that <= 0.0 {
            return len;
        }
        let x = rng.uniform();
        if x <= z {
            continue;
        }
        let accept = match policy {
            ThresholdPolicy::StationaryPoisson { window } => x - z < *window,
            ThresholdPolicy::SelfSimilar { alpha } => {
                let delta = (alpha / that.sqrt()).min(1.0);
                x - z <= delta * w
            }
            ThresholdPolicy::TableOptimalPoisson {
                table,
                saturated_below,
            } => {
                let delta = if that <= *saturated_below {
                    1.0
                } else {
                    table.lookup(that).clamp(0.0, 1.0)
                };
                x - z <= delta * w
            }
            ThresholdPolicy::GreedyRecords => true,
            _ => unreachable!("model capability checked before dispatch"),
        };
        if accept {
            debug_assert!(x > z, "selected marks must increase");
            len += 1;
            let q = (x - z) / w;
            z = x;
            let keep = 1.0 - q;
            w *= keep;
            that *= keep;
        }
    }
}

fn check_common(replicates: u64) -> Result<()> {
    if replicates == 0 {
        return Err(Error::InvalidInput {
            what: "need at least one replicate".into(),
        });
    }
    Ok(())
}

fn reduce_lengths<F>(replicates: u64, run: F) -> (u128, u128)
where
    F: Fn(u64) -> u32 + Sync,
{
    (0..replicates)
        .into_par_iter()
        .map(|rep| {
            let l = run(rep) as u128;
            (l, l * l)
        })
        .reduce(|| (0u128, 0u128), |a, b| (a.0 + b.0, a.1 + b.1))
}

fn validate_fixed_n(policy: &ThresholdPolicy, n: u64, replicates: u64) -> Result<()> {
    check_common(replicates)?;
    policy.validate_window()?;
    if n == 0 {
        return Err(Error::InvalidInput {
            what: "fixed-n model needs n >= 1".into(),
        });
    }
    if !policy.fixed_n_capable() {
        return Err(Error::Config {
            what: format!(
                "policy {} does not apply to the fixed-n model",
                policy.describe()
            ),
        });
    }
    if let ThresholdPolicy::TableOptimalDiscrete { rows } = policy {
        if (rows.len() as u64) < n {
            return Err(Error::Config {
                what: format!("value-row table holds {} rows but n = {n}", rows.len()),
            });
        }
    }
    Ok(())
}

fn validate_poisson(policy: &ThresholdPolicy, t: f64, replicates: u64) -> Result<()> {
    check_common(replicates)?;
    policy.validate_window()?;
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::InvalidInput {
            what: format!("Poisson horizon {t}"),
        });
    }
    if !policy.poisson_capable() {
        return Err(Error::Config {
            what: format!(
                "policy {} does not apply to the Poisson model",
                policy.describe()
            ),
        });
    }
    Ok(())
}

/// Simulate the fixed-n model: each replicate draws `n` i.i.d. uniform
/// marks and plays the policy online.
pub fn simulate_fixed_n(
    policy: &ThresholdPolicy,
    n: u64,
    replicates: u64,
    seed: u64,
) -> Result<SimStats> {
    validate_fixed_n(policy, n, replicates)?;
    let (s1, s2) = reduce_lengths(replicates, |rep| fixed_n_replicate(policy, n, seed, rep));
    stats_from_sums(ModelTag::FixedN { n }, policy, replicates, seed, s1, s2)
}

/// Simulate the Poisson model at horizon `t`: arrivals form a unit-rate
/// Poisson stream on [0, t] (drawn as i.i.d. exponential gaps, so the
/// count is Poisson(t)), each carrying an independent uniform mark.
pub fn simulate_poisson(
    policy: &ThresholdPolicy,
    t: f64,
    replicates: u64,
    seed: u64,
) -> Result<SimStats> {
    validate_poisson(policy, t, replicates)?;
    let (s1, s2) = reduce_lengths(replicates, |rep| poisson_replicate(policy, t, seed, rep));
    stats_from_sums(ModelTag::Poisson { t }, policy, replicates, seed, s1, s2)
}

/// Per-replicate selected lengths (diagnostic dump); replicate `r` uses
/// the same stream as the aggregate runs, so sums agree exactly.
pub fn fixed_n_replicate_lengths(
    policy: &ThresholdPolicy,
    n: u64,
    replicates: u64,
    seed: u64,
) -> Result<Vec<u32>> {
    validate_fixed_n(policy, n, replicates)?;
    Ok((0..replicates)
        .into_par_iter()
        .map(|rep| fixed_n_replicate(policy, n, seed, rep))
        .collect())
}

/// Per-replicate selected lengths for the Poisson model.
pub fn poisson_replicate_lengths(
    policy: &ThresholdPolicy,
    t: f64,
    replicates: u64,
    seed: u64,
) -> Result<Vec<u32>> {
    validate_poisson(policy, t, replicates)?;
    Ok((0..replicates)
        .into_par_iter()
        .map(|rep| poisson_replicate(policy, t, seed, rep))
        .collect())
}

/// One row of a self-similar rate sweep.
#[derive(Debug, Clone, Serialize)]
pub struct RatePoint {
    pub alpha: f64,
    /// Mean selected length divided by sqrt(t).
    pub rate: f64,
    pub stats: SimStats,
}

/// Sweep the self-similar policy family over acceptance slopes `alphas`
/// at one horizon; all runs share the master seed, so the comparison uses
/// common random numbers.
pub fn rate_sweep(alphas: &[f64], t: f64, replicates: u64, seed: u64) -> Result<Vec<RatePoint>> {
    if alphas.is_empty() {
        return Err(Error::InvalidInput {
            what: "empty alpha sweep".into(),
        });
    }
    let mut out = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let stats = simulate_poisson(&ThresholdPolicy::SelfSimilar { alpha }, t, replicates, seed)?;
        out.push(RatePoint {
            alpha,
            rate: stats.mean / t.sqrt(),
            stats,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value_discrete::{solve_v, ZGrid};

    #[test]
    fn single_item_always_accepted() {
        let stats = simulate_fixed_n(&ThresholdPolicy::GreedyRecords, 1, 1000, 7).unwrap();
        assert_eq!(stats.mean, 1.0);
        assert_eq!(stats.variance, 0.0);
        assert_eq!(stats.sum_lengths, 1000);
    }

    #[test]
    fn same_seed_same_stats() {
        let p = ThresholdPolicy::SelfSimilar { alpha: 1.2 };
        let a = simulate_poisson(&p, 50.0, 400, 11).unwrap();
        let b = simulate_poisson(&p, 50.0, 400, 11).unwrap();
        assert_eq!(a, b);
        let c = simulate_poisson(&p, 50.0, 400, 12).unwrap();
        assert_ne!(a.sum_lengths, c.sum_lengths);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let p = ThresholdPolicy::ScaledSqrtDiscrete;
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| simulate_fixed_n(&p, 500, 2000, 99).unwrap());
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| simulate_fixed_n(&p, 500, 2000, 99).unwrap());
        assert_eq!(one, four);
        assert_eq!(
            serde_json::to_string(&one).unwrap(),
            serde_json::to_string(&four).unwrap()
        );
    }

    #[test]
    fn model_capability_enforced() {
        let err = simulate_poisson(
            &ThresholdPolicy::StationaryDiscrete { window: 0.1 },
            10.0,
            10,
            0,
        )
        .unwrap_err();
        assert_eq!(err.kind(), "config");
        let err =
            simulate_fixed_n(&ThresholdPolicy::SelfSimilar { alpha: 1.0 }, 10, 10, 0).unwrap_err();
        assert_eq!(err.kind(), "config");
        let err = simulate_fixed_n(
            &ThresholdPolicy::StationaryDiscrete { window: 1.5 },
            10,
            10,
            0,
        )
        .unwrap_err();
        assert_eq!(err.kind(), "config");
    }

    #[test]
    fn vanishing_horizon_greedy_mean_is_the_horizon() {
        // At t << 1 at most one arrival matters: the selected length is 1
        // with probability 1 - exp(-t) ~ t.
        let t = 1e-3;
        let stats = simulate_poisson(&ThresholdPolicy::GreedyRecords, t, 200_000, 21).unwrap();
        assert!(
            (stats.mean - t).abs() < 4.0 * stats.std_error.max(1e-6),
            "mean {:.6e} vs t = {t:.e}",
            stats.mean
        );
    }

    #[test]
    fn table_optimal_matches_solved_value_small_n() {
        let grid = ZGrid::uniform(257).unwrap();
        let n = 5usize;
        let trace = solve_v(n, &grid, &(0..n).collect::<Vec<_>>()).unwrap();
        let v_n = trace.v_at_zero()[n];
        let policy =
            ThresholdPolicy::table_optimal_discrete(trace.checkpoint_rows().to_vec()).unwrap();
        let stats = simulate_fixed_n(&policy, n as u64, 40_000, 5).unwrap();
        assert!(
            (stats.mean - v_n).abs() <= 3.0 * stats.std_error,
            "mean {:.4} vs value {v_n:.4} (se {:.4})",
            stats.mean,
            stats.std_error
        );
    }

    #[test]
    fn table_optimal_poisson_matches_solved_value() {
        let curve =
            crate::value_poisson::solve_u(&crate::value_poisson::SolverConfig::new(100.0)).unwrap();
        let u_end = curve.last_value();
        let policy = ThresholdPolicy::table_optimal_poisson(&curve, 1e-12).unwrap();
        // Thresholds saturate at 1 near the critical time and decrease in
        // the remaining horizon.
        if let ThresholdPolicy::TableOptimalPoisson {
            table,
            saturated_below,
        } = &policy
        {
            assert!((table.lookup(*saturated_below) - 1.0).abs() < 1e-6);
            assert!(table.lookup(10.0) > table.lookup(100.0));
            assert!(table.lookup(100.0) > 0.0);
        } else {
            panic!("constructor returned a different variant");
        }
        // Playing the tabulated optimal policy realizes the solved value.
        let stats = simulate_poisson(&policy, 100.0, 4_000, 17).unwrap();
        assert!(
            (stats.mean - u_end).abs() <= 3.0 * stats.std_error + 0.02,
            "mean {:.4} vs value {u_end:.4} (se {:.4})",
            stats.mean,
            stats.std_error
        );
    }

    #[test]
    fn table_constructor_rejects_misindexed_rows() {
        let grid = ZGrid::uniform(257).unwrap();
        let trace = solve_v(4, &grid, &[0, 2, 4]).unwrap();
        let err =
            ThresholdPolicy::table_optimal_discrete(trace.checkpoint_rows().to_vec()).unwrap_err();
        assert_eq!(err.kind(), "config");
    }

    #[test]
    fn replicate_dump_sums_to_stats() {
        let p = ThresholdPolicy::StationaryDiscrete { window: 0.2 };
        let stats = simulate_fixed_n(&p, 50, 300, 3).unwrap();
        let lens = fixed_n_replicate_lengths(&p, 50, 300, 3).unwrap();
        assert_eq!(lens.len(), 300);
        assert_eq!(
            lens.iter().map(|&l| l as u64).sum::<u64>(),
            stats.sum_lengths
        );
    }

    #[test]
    fn self_similar_tracks_policy_value_at_moderate_horizon() {
        // At t = 400 the sqrt(2)-slope policy value is near
        // sqrt(2t) - (1/12) ln t + O(1); a loose band suffices here.
        let t = 400.0;
        let stats = simulate_poisson(
            &ThresholdPolicy::SelfSimilar {
                alpha: std::f64::consts::SQRT_2,
            },
            t,
            4000,
            17,
        )
        .unwrap();
        let leading = (2.0 * t).sqrt();
        assert!(
            stats.mean > leading - 3.0 && stats.mean < leading,
            "mean {:.3} vs leading term {leading:.3}",
            stats.mean
        );
    }

    #[test]
    fn stationary_window_near_rate_but_below_optimal() {
        let n = 10_000u64;
        let w = (2.0 / n as f64).sqrt();
        let stats = simulate_fixed_n(
            &ThresholdPolicy::StationaryDiscrete { window: w },
            n,
            400,
            23,
        )
        .unwrap();
        let ratio = stats.mean / (2.0 * n as f64).sqrt();
        assert!(
            (0.85..1.0).contains(&ratio),
            "stationary-window rate ratio {ratio:.4}"
        );
    }
}

//! Optimal online selection from a fixed number of uniform arrivals.
//!
//! With `k` items still to arrive (marks i.i.d. uniform on `[0, 1]`) and the
//! last accepted mark at `z`, the maximum expected number of further
//! selections `v_k(z)` obeys the recursion
//!
//! ```text
//! v_{k+1}(z) = v_k(z) + (G v_k)(z),   v_0 = 0,
//! (G f)(z) = integral over x in [z, 1] of max(f(x) + 1 - f(z), 0) dx,
//! ```
//!
//! and the optimal policy accepts a mark `x` exactly when
//! `v_k(x) + 1 >= v_k(z)` (accept on equality).
//!
//! Rows are held on a uniform mark grid and interpolated by monotone
//! cubics. One step costs O(N): slopes and exact piece integrals are
//! prefix-summed once, the acceptance cuts are swept with a two-pointer
//! (they are nondecreasing in `z`), and each cut is polished by a short
//! bisection inside its bracketing piece. The gain integrand vanishes at
//! the cut, so the gain error is quadratic in the cut error and a modest
//! bisection depth is plenty.

use crate::error::{Error, Result};
use crate::interp;

/// Tolerance for accepting tiny floating-point wiggles in row invariants.
const ROW_TOL: f64 = 1.0e-9;
/// Bisection depth for locating acceptance cuts inside one grid piece.
const CUT_BISECTIONS: u32 = 18;

/// Uniform mark grid on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZGrid {
    nodes: Vec<f64>,
    spacing: f64,
}

impl ZGrid {
    /// Uniform grid with `len` nodes including both endpoints. Power-of-two
    /// interval counts (len = 2^m + 1) keep refinement studies nested, but
    /// any length of at least 9 is accepted.
    pub fn uniform(len: usize) -> Result<Self> {
        if len < 9 {
            return Err(Error::InvalidInput {
                what: format!("grid of {len} nodes (need >= 9)"),
            });
        }
        let spacing = 1.0 / (len - 1) as f64;
        let mut nodes: Vec<f64> = (0..len).map(|i| i as f64 * spacing).collect();
        nodes[len - 1] = 1.0;
        Ok(ZGrid { nodes, spacing })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Index of the piece `[node_j, node_{j+1}]` containing `x`.
    fn piece_of(&self, x: f64) -> usize {
        ((x / self.spacing) as usize).min(self.nodes.len() - 2)
    }
}

/// One row of the value surface: `v_k` sampled on a mark grid.
#[derive(Debug, Clone)]
pub struct DiscreteValueRow {
    k: usize,
    grid: ZGrid,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl DiscreteValueRow {
    /// Validate and wrap sampled values: nonincreasing in `z`, inside the
    /// envelope `0 <= v <= k (1 - z)`, exactly zero at `z = 1`.
    pub fn from_values(k: usize, grid: &ZGrid, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput {
                what: format!(
                    "row of {} values on grid of {} nodes",
                    values.len(),
                    grid.len()
                ),
            });
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: "row value",
                    at: grid.node(i),
                });
            }
            let cap = k as f64 * (1.0 - grid.node(i));
            if v < -ROW_TOL || v > cap + ROW_TOL {
                return Err(Error::SolverFailure {
                    index: k,
                    at: grid.node(i),
                    detail: format!("value {v} escapes the envelope [0, {cap}]"),
                });
            }
        }
        for i in 0..values.len() - 1 {
            if values[i + 1] > values[i] + ROW_TOL {
                return Err(Error::SolverFailure {
                    index: k,
                    at: grid.node(i + 1),
                    detail: format!("values increase in z: {} -> {}", values[i], values[i + 1]),
                });
            }
        }
        let last = *values.last().unwrap();
        if last.abs() > ROW_TOL {
            return Err(Error::SolverFailure {
                index: k,
                at: 1.0,
                detail: format!("value at z = 1 is {last}, not 0"),
            });
        }
        *values.last_mut().unwrap() = 0.0;
        let slopes = interp::pchip_slopes(grid.nodes(), &values);
        Ok(DiscreteValueRow {
            k,
            grid: grid.clone(),
            values,
            slopes,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn grid(&self) -> &ZGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Interpolated `v_k(z)`.
    pub fn value_at(&self, z: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&z) {
            return Err(Error::InvalidInput {
                what: format!("mark {z} outside [0, 1]"),
            });
        }
        let j = self.grid.piece_of(z);
        Ok(interp::hermite_eval(
            self.grid.node(j),
            self.grid.node(j + 1),
            self.values[j],
            self.values[j + 1],
            self.slopes[j],
            self.slopes[j + 1],
            z,
        ))
    }
}

// ---------------------------------------------------------------------------
// Stepping core. All windows in the recursion start at a grid node, so the
// integrals decompose into prefix sums of exact piece integrals plus one
// partial piece at the top end.
// ---------------------------------------------------------------------------

#[derive(Default)]
struct StepScratch {
    slopes: Vec<f64>,
    /// prefix[j] = integral of the interpolant from node 0 to node j.
    prefix: Vec<f64>,
    cuts: Vec<f64>,
}

fn prepare(grid: &ZGrid, f: &[f64], s: &mut StepScratch) {
    interp::pchip_slopes_into(grid.nodes(), f, &mut s.slopes);
    let n = grid.len();
    s.prefix.clear();
    s.prefix.reserve(n);
    s.prefix.push(0.0);
    let h = grid.spacing();
    let mut acc = 0.0;
    for j in 0..n - 1 {
        acc += interp::hermite_integral_full(h, f[j], f[j + 1], s.slopes[j], s.slopes[j + 1]);
        s.prefix.push(acc);
    }
}

/// Integral of the interpolant over `[node_i, b]`, `b` inside the grid.
fn integral_from_node(grid: &ZGrid, f: &[f64], s: &StepScratch, i: usize, b: f64) -> f64 {
    let jb = grid.piece_of(b).max(i);
    let head = if jb > i {
        s.prefix[jb] - s.prefix[i]
    } else {
        0.0
    };
    head + interp::hermite_integral(
        grid.node(jb),
        grid.node(jb + 1),
        f[jb],
        f[jb + 1],
        s.slopes[jb],
        s.slopes[jb + 1],
        grid.node(jb),
        b,
    )
}

/// Largest `x` in `[node_j, node_{j+1}]` with interpolant >= `target`,
/// given that the piece brackets the crossing.
fn cut_in_piece(grid: &ZGrid, f: &[f64], slopes: &[f64], j: usize, target: f64) -> f64 {
    let (x0, x1) = (grid.node(j), grid.node(j + 1));
    let (mut lo, mut hi) = (x0, x1);
    for _ in 0..CUT_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let v = interp::hermite_eval(x0, x1, f[j], f[j + 1], slopes[j], slopes[j + 1], mid);
        if v >= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Acceptance cuts for every grid node in one sweep. The cut at `z` is the
/// largest `x` with `f(x) + 1 >= f(z)`; since `f` is nonincreasing the cuts
/// are nondecreasing in `z` and a shared scan pointer suffices.
fn optimal_cuts(grid: &ZGrid, f: &[f64], s: &mut StepScratch) {
    let n = grid.len();
    s.cuts.clear();
    s.cuts.resize(n, 1.0);
    let mut jp = 0usize;
    for i in 0..n {
        if f[i] <= 1.0 + f[n - 1] {
            // The inequality holds up to z = 1; so do all later ones.
            for c in s.cuts[i..].iter_mut() {
                *c = 1.0;
            }
            break;
        }
        let target = f[i] - 1.0;
        jp = jp.max(i);
        while jp + 1 < n - 1 && f[jp + 1] >= target {
            jp += 1;
        }
        s.cuts[i] = cut_in_piece(grid, f, &s.slopes, jp, target);
    }
}

fn gains_into(grid: &ZGrid, f: &[f64], s: &StepScratch, out: &mut [f64]) {
    let n = grid.len();
    for i in 0..n - 1 {
        let z = grid.node(i);
        let b = s.cuts[i];
        let gain = integral_from_node(grid, f, s, i, b) + (1.0 - f[i]) * (b - z);
        out[i] = f[i] + gain;
    }
    out[n - 1] = 0.0;
}

fn check_step_output(k_next: usize, grid: &ZGrid, out: &[f64]) -> Result<()> {
    let n = grid.len();
    for i in 0..n {
        let v = out[i];
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context: "stepped row value",
                at: grid.node(i),
            });
        }
        let cap = k_next as f64 * (1.0 - grid.node(i));
        if v < -ROW_TOL || v > cap + ROW_TOL {
            return Err(Error::SolverFailure {
                index: k_next,
                at: grid.node(i),
                detail: format!("stepped value {v} escapes the envelope [0, {cap}]"),
            });
        }
        if i > 0 && v > out[i - 1] + ROW_TOL {
            return Err(Error::SolverFailure {
                index: k_next,
                at: grid.node(i),
                detail: format!("stepped values increase in z: {} -> {}", out[i - 1], v),
            });
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Public operators.
// ---------------------------------------------------------------------------

/// The gain operator `(G f)(z)` for an interpolated row: the expected value
/// added by one more arrival, `integral over [z, 1] of (f(x) + 1 - f(z))+`.
pub fn apply_g(row: &DiscreteValueRow, z: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&z) {
        return Err(Error::InvalidInput {
            what: format!("mark {z} outside [0, 1]"),
        });
    }
    if z == 1.0 {
        return Ok(0.0);
    }
    let fz = row.value_at(z)?;
    let cut = optimal_acceptance_cut(row, z)?;
    // Integrate the interpolant over [z, cut] piece by piece.
    let grid = &row.grid;
    let (ja, jb) = (grid.piece_of(z), grid.piece_of(cut).max(grid.piece_of(z)));
    let mut acc = 0.0;
    for j in ja..=jb {
        let lo = if j == ja { z } else { grid.node(j) };
        let hi = if j == jb { cut } else { grid.node(j + 1) };
        acc += interp::hermite_integral(
            grid.node(j),
            grid.node(j + 1),
            row.values[j],
            row.values[j + 1],
            row.slopes[j],
            row.slopes[j + 1],
            lo,
            hi,
        );
    }
    Ok(acc + (1.0 - fz) * (cut - z))
}

/// Largest mark `x*` in `[z, 1]` with `f(x) + 1 >= f(z)` (accept on
/// equality); the optimal policy accepts exactly the marks in `(z, x*]`.
pub fn optimal_acceptance_cut(row: &DiscreteValueRow, z: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&z) {
        return Err(Error::InvalidInput {
            what: format!("mark {z} outside [0, 1]"),
        });
    }
    let fz = row.value_at(z)?;
    let n = row.grid.len();
    let target = fz - 1.0;
    if row.values[n - 1] >= target {
        return Ok(1.0);
    }
    let mut j = row.grid.piece_of(z);
    while j + 1 < n - 1 && row.values[j + 1] >= target {
        j += 1;
    }
    let cut = cut_in_piece(&row.grid, &row.values, &row.slopes, j, target);
    Ok(cut.max(z))
}

/// One optimality step: the row at `k + 1` from the row at `k`.
pub fn step_recursion(prev: &DiscreteValueRow) -> Result<DiscreteValueRow> {
    let grid = &prev.grid;
    let mut s = StepScratch::default();
    prepare(grid, &prev.values, &mut s);
    optimal_cuts(grid, &prev.values, &mut s);
    let mut out = vec![0.0; grid.len()];
    gains_into(grid, &prev.values, &s, &mut out);
    check_step_output(prev.k + 1, grid, &out)?;
    DiscreteValueRow::from_values(prev.k + 1, grid, out)
}

/// Value trace of a solve: `v_k(0)` for every `k`, full rows at requested
/// checkpoints, and the indices where the two-sided bound
/// `sqrt(2k) - 2 ln k - 2 <= v_k < sqrt(2k)` failed (empty when it held).
#[derive(Debug, Clone)]
pub struct DiscreteValueTrace {
    n_max: usize,
    grid_len: usize,
    v_at_zero: Vec<f64>,
    checkpoint_rows: Vec<DiscreteValueRow>,
    bound_violations: Vec<usize>,
}

impl DiscreteValueTrace {
    /// Wrap a bare zero-mark sequence (index = horizon) as a trace with no
    /// stored rows — for diagnostics and for auditing externally produced
    /// sequences against the square-root bounds.
    pub fn from_zero_trace(v_at_zero: Vec<f64>) -> Result<Self> {
        if v_at_zero.is_empty() {
            return Err(Error::InvalidInput {
                what: "empty zero-mark trace".into(),
            });
        }
        let mut bound_violations = Vec::new();
        for (k, &v) in v_at_zero.iter().enumerate() {
            record_bounds(k, v, &mut bound_violations);
        }
        Ok(DiscreteValueTrace {
            n_max: v_at_zero.len() - 1,
            grid_len: 0,
            v_at_zero,
            checkpoint_rows: Vec::new(),
            bound_violations,
        })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn grid_len(&self) -> usize {
        self.grid_len
    }

    /// `v_k(0)` indexed by `k = 0..=n_max`.
    pub fn v_at_zero(&self) -> &[f64] {
        &self.v_at_zero
    }

    pub fn final_value(&self) -> f64 {
        *self.v_at_zero.last().unwrap()
    }

    pub fn checkpoint_rows(&self) -> &[DiscreteValueRow] {
        &self.checkpoint_rows
    }

    pub fn row_at(&self, k: usize) -> Option<&DiscreteValueRow> {
        self.checkpoint_rows.iter().find(|r| r.k == k)
    }

    /// Indices `k >= 2` where the square-root bound failed.
    pub fn bound_violations(&self) -> &[usize] {
        &self.bound_violations
    }

    /// Worst violation of concavity in `k`: max second difference of the
    /// zero-mark trace (nonpositive for exactly concave sequences).
    pub fn max_second_difference(&self) -> f64 {
        let v = &self.v_at_zero;
        let mut worst = f64::NEG_INFINITY;
        for k in 1..v.len() - 1 {
            worst = worst.max(v[k + 1] - 2.0 * v[k] + v[k - 1]);
        }
        worst
    }
}

fn record_bounds(k: usize, v: f64, violations: &mut Vec<usize>) {
    if k >= 2 {
        let kf = k as f64;
        let upper = (2.0 * kf).sqrt();
        let lower = upper - 2.0 * kf.ln() - 2.0;
        if !(v >= lower && v < upper) {
            violations.push(k);
        }
    }
}

fn solve_with<F>(
    n_max: usize,
    grid: &ZGrid,
    checkpoints: &[usize],
    mut step: F,
) -> Result<DiscreteValueTrace>
where
    F: FnMut(usize, &ZGrid, &[f64], &mut StepScratch, &mut [f64]) -> Result<()>,
{
    if n_max == 0 {
        return Err(Error::InvalidInput {
            what: "n_max must be at least 1".into(),
        });
    }
    let mut wanted: Vec<usize> = checkpoints
        .iter()
        .copied()
        .filter(|&k| k <= n_max)
        .collect();
    wanted.sort_unstable();
    wanted.dedup();

    let n = grid.len();
    let mut cur = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut s = StepScratch::default();
    let mut v_at_zero = Vec::with_capacity(n_max + 1);
    v_at_zero.push(0.0);
    let mut checkpoint_rows = Vec::with_capacity(wanted.len());
    let mut bound_violations = Vec::new();

    if wanted.first() == Some(&0) {
        checkpoint_rows.push(DiscreteValueRow::from_values(0, grid, cur.clone())?);
    }
    for k in 0..n_max {
        // cur holds v_k; produce v_{k+1}.
        step(k, grid, &cur, &mut s, &mut next)?;
        check_step_output(k + 1, grid, &next)?;
        std::mem::swap(&mut cur, &mut next);
        let v0 = cur[0];
        v_at_zero.push(v0);
        record_bounds(k + 1, v0, &mut bound_violations);
        if wanted.binary_search(&(k + 1)).is_ok() {
            checkpoint_rows.push(DiscreteValueRow::from_values(k + 1, grid, cur.clone())?);
        }
    }

    Ok(DiscreteValueTrace {
        n_max,
        grid_len: n,
        v_at_zero,
        checkpoint_rows,
        bound_violations,
    })
}

/// Iterate the optimality recursion up to `n_max`.
pub fn solve_v(n_max: usize, grid: &ZGrid, checkpoints: &[usize]) -> Result<DiscreteValueTrace> {
    solve_with(n_max, grid, checkpoints, |_, grid, f, s, out| {
        prepare(grid, f, s);
        optimal_cuts(grid, f, s);
        gains_into(grid, f, s, out);
        Ok(())
    })
}

/// The self-similar square-root acceptance window `min(sqrt(2/(k(1-z))), 1)`
/// driving the explicit suboptimal policy; `k` counts the items remaining
/// after the current one.
pub fn sqrt_window(k: usize, z: f64) -> f64 {
    let scaled = k as f64 * (1.0 - z);
    if scaled <= 2.0 {
        1.0
    } else {
        (2.0 / scaled).sqrt()
    }
}

/// Value of the policy that accepts relative improvements inside a
/// prescribed window: one step integrates the (signed) gain over
/// `[z, z + (1-z) window(k, z)]` instead of up to the optimal cut.
pub fn solve_v_hat<W>(
    n_max: usize,
    grid: &ZGrid,
    checkpoints: &[usize],
    window: W,
) -> Result<DiscreteValueTrace>
where
    W: Fn(usize, f64) -> f64,
{
    solve_with(n_max, grid, checkpoints, |k, grid, f, s, out| {
        prepare(grid, f, s);
        let n = grid.len();
        s.cuts.clear();
        s.cuts.resize(n, 1.0);
        for i in 0..n {
            let z = grid.node(i);
            let w = window(k, z);
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::InvalidInput {
                    what: format!("window {w} outside [0, 1] at k = {k}, z = {z}"),
                });
            }
            s.cuts[i] = (z + (1.0 - z) * w).min(1.0);
        }
        gains_into(grid, f, s, out);
        Ok(())
    })
}

//! Python bindings for the online increasing-subsequence laboratory:
//! value-equation solvers for both arrival models, policy simulation,
//! expansion checks, exact thresholds, and the log-coefficient fit.

// The #[pyfunction] expansion inserts identity error conversions that
// trip this lint; none of them are in hand-written code.
#![allow(clippy::useless_conversion)]

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py_err(e: incseq::Error) -> PyErr {
    match e.kind() {
        "invalid-input" | "config" | "range-exceeded" => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse_family(name: &str) -> PyResult<incseq::Family> {
    Ok(match name {
        "poisson-order-0" => incseq::Family::PoissonOrder0,
        "poisson-order-1" => incseq::Family::PoissonOrder1,
        "poisson-order-2" => incseq::Family::PoissonOrder2,
        "discrete-order-0" => incseq::Family::DiscreteOrder0,
        "discrete-order-1" => incseq::Family::DiscreteOrder1,
        "discrete-order-2" => incseq::Family::DiscreteOrder2,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown family `{other}` (expected poisson-order-N or discrete-order-N, N in 0..=2)"
            )));
        }
    })
}

/// Integrate the Poisson-model value equation to `t_max`. Returns the
/// solver nodes, the value there, the value and optimal threshold at the
/// horizon, and the critical time (None while the value is still below 1).
#[pyfunction]
#[pyo3(signature = (t_max, grid_initial=1.0e-4, grid_ratio=1.0015))]
fn solve_poisson_value(
    py: Python<'_>,
    t_max: f64,
    grid_initial: f64,
    grid_ratio: f64,
) -> PyResult<Py<PyDict>> {
    let curve = py
        .allow_threads(|| {
            let mut cfg = incseq::SolverConfig::new(t_max);
            cfg.grid.initial_spacing = grid_initial;
            cfg.grid.growth_ratio = grid_ratio;
            incseq::solve_u(&cfg)
        })
        .map_err(to_py_err)?;
    let critical = if curve.last_value() >= 1.0 {
        Some(incseq::critical_time(&curve, 1.0e-12).map_err(to_py_err)?)
    } else {
        None
    };
    let threshold = incseq::threshold_star(&curve, curve.t_max(), 1.0e-12).map_err(to_py_err)?;
    let out = PyDict::new_bound(py);
    out.set_item("ts", curve.ts().to_vec())?;
    out.set_item("values", curve.values().to_vec())?;
    out.set_item("value_at_t_max", curve.last_value())?;
    out.set_item("threshold_at_t_max", threshold)?;
    out.set_item("critical_time", critical)?;
    Ok(out.unbind())
}

/// Run the fixed-n value recursion and return `[v_0, v_1, ..., v_n_max]`
/// evaluated at mark zero (`v_0 = 0`).
#[pyfunction]
#[pyo3(signature = (n_max, grid=2049))]
fn solve_discrete_values(py: Python<'_>, n_max: usize, grid: usize) -> PyResult<Vec<f64>> {
    py.allow_threads(|| {
        let zgrid = incseq::ZGrid::uniform(grid)?;
        let trace = incseq::solve_v(n_max, &zgrid, &[])?;
        Ok(trace.v_at_zero().to_vec())
    })
    .map_err(to_py_err)
}

fn build_policy(
    policy: &str,
    window: Option<f64>,
    alpha: Option<f64>,
) -> PyResult<incseq::ThresholdPolicy> {
    let need = |flag: &str, v: Option<f64>| {
        v.ok_or_else(|| PyValueError::new_err(format!("policy `{policy}` needs `{flag}`")))
    };
    Ok(match policy {
        "stationary-discrete" => incseq::ThresholdPolicy::StationaryDiscrete {
            window: need("window", window)?,
        },
        "stationary-poisson" => incseq::ThresholdPolicy::StationaryPoisson {
            window: need("window", window)?,
        },
        "self-similar" => incseq::ThresholdPolicy::SelfSimilar {
            alpha: need("alpha", alpha)?,
        },
        "scaled-sqrt-discrete" => incseq::ThresholdPolicy::ScaledSqrtDiscrete,
        "greedy-records" => incseq::ThresholdPolicy::GreedyRecords,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown policy `{other}` (expected stationary-discrete, stationary-poisson, \
                 self-similar, scaled-sqrt-discrete, or greedy-records)"
            )));
        }
    })
}

/// Monte Carlo simulation of an online policy. `model` is "fixed-n"
/// (needs `n`) or "poisson" (needs `t`). Identical arguments give
/// identical statistics, independent of thread count.
#[pyfunction]
#[pyo3(signature = (model, policy, reps, seed, n=None, t=None, window=None, alpha=None))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    model: &str,
    policy: &str,
    reps: u64,
    seed: u64,
    n: Option<u64>,
    t: Option<f64>,
    window: Option<f64>,
    alpha: Option<f64>,
) -> PyResult<Py<PyDict>> {
    let built = build_policy(policy, window, alpha)?;
    let stats = match model {
        "fixed-n" => {
            let n = n.ok_or_else(|| PyValueError::new_err("model `fixed-n` needs `n`"))?;
            py.allow_threads(|| incseq::simulate_fixed_n(&built, n, reps, seed))
                .map_err(to_py_err)?
        }
        "poisson" => {
            let t = t.ok_or_else(|| PyValueError::new_err("model `poisson` needs `t`"))?;
            py.allow_threads(|| incseq::simulate_poisson(&built, t, reps, seed))
                .map_err(to_py_err)?
        }
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown model `{other}` (expected fixed-n or poisson)"
            )));
        }
    };
    let out = PyDict::new_bound(py);
    out.set_item("policy", &stats.policy)?;
    out.set_item("replicates", stats.replicates)?;
    out.set_item("seed", stats.seed)?;
    out.set_item("sum_lengths", stats.sum_lengths)?;
    out.set_item("sum_squared_lengths", stats.sum_squared_lengths)?;
    out.set_item("mean", stats.mean)?;
    out.set_item("variance", stats.variance)?;
    out.set_item("std_error", stats.std_error)?;
    Ok(out.unbind())
}

/// Exact acceptance threshold of a trial function at horizon `a`: solves
/// the marginal-gain crossing in closed form (saturating at 1 while the
/// whole window still qualifies).
#[pyfunction]
fn threshold_exact(family: &str, coefficient: f64, a: f64) -> PyResult<f64> {
    incseq::threshold_closed_form(parse_family(family)?, coefficient, a).map_err(to_py_err)
}

/// Sweep a trial-function family against its claimed operator expansion.
/// Returns boundedness/match flags and the worst scaled residual.
#[pyfunction]
#[pyo3(signature = (family, coefficient=None, lo=1.0e2, hi=1.0e6, per_decade=8, marks=None))]
fn check_expansion(
    py: Python<'_>,
    family: &str,
    coefficient: Option<f64>,
    lo: f64,
    hi: f64,
    per_decade: usize,
    marks: Option<Vec<f64>>,
) -> PyResult<Py<PyDict>> {
    let fam = parse_family(family)?;
    let coefficient = coefficient.unwrap_or_else(|| {
        let probe = if fam.order() == 0 { 1.0 } else { 0.0 };
        incseq::TestFunction::new(fam, probe)
            .ok()
            .and_then(|tf| tf.matched_value())
            .unwrap_or(0.0)
    });
    let marks = marks.unwrap_or_else(|| vec![0.0, 0.5, 0.9]);
    let report = py
        .allow_threads(|| {
            let sweep = incseq::geometric_sweep(lo, hi, per_decade)?;
            if fam.is_discrete() {
                incseq::verify_discrete_expansion(fam.order(), coefficient, &sweep, &marks)
            } else {
                incseq::verify_poisson_expansion(fam.order(), coefficient, &sweep)
            }
        })
        .map_err(to_py_err)?;
    let out = PyDict::new_bound(py);
    out.set_item("id", &report.id)?;
    out.set_item("coefficient", report.coefficient)?;
    out.set_item("matched_value", report.matched_value)?;
    out.set_item("matched_window", report.matched_window)?;
    out.set_item("coefficient_matched", report.coefficient_matched)?;
    out.set_item("max_scaled_residual", report.max_scaled_residual)?;
    out.set_item("bounded", report.bounded)?;
    Ok(out.unbind())
}

/// Least-squares fit of `value - sqrt(2a)` on {ln a, 1, 1/sqrt(a)} over
/// `[window_lo, window_hi]`, from `(a, value)` pairs. Returns the
/// estimates keyed by term plus the points used.
#[pyfunction]
#[pyo3(signature = (series, window_lo, window_hi))]
fn fit_log_coefficient(
    py: Python<'_>,
    series: Vec<(f64, f64)>,
    window_lo: f64,
    window_hi: f64,
) -> PyResult<Py<PyDict>> {
    let terms = incseq::FitTerms {
        log_term: true,
        constant: true,
        inv_sqrt: true,
    };
    let report = py
        .allow_threads(|| {
            incseq::fit_expansion(&series, terms, (window_lo, window_hi), "python series")
        })
        .map_err(to_py_err)?;
    let out = PyDict::new_bound(py);
    for term in &report.terms {
        out.set_item(term.term, term.estimate)?;
    }
    out.set_item("points_used", report.points_used)?;
    out.set_item("log_coefficient", report.log_coefficient)?;
    Ok(out.unbind())
}

#[pymodule]
fn incseq_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(solve_poisson_value, m)?)?;
    m.add_function(wrap_pyfunction!(solve_discrete_values, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(threshold_exact, m)?)?;
    m.add_function(wrap_pyfunction!(check_expansion, m)?)?;
    m.add_function(wrap_pyfunction!(fit_log_coefficient, m)?)?;
    Ok(())
}

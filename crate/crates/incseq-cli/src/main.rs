//! `incseq` — batch front end for the online increasing-subsequence
//! laboratory: value-equation solvers for both arrival models, Monte Carlo
//! policy simulation, operator-expansion checks, coefficient fits, and
//! bound audits, each emitting a reproducible JSON summary (stdout and
//! `<command>.json` in the output directory) plus optional CSV artifacts.
//!
//! Exit status: 0 when every hard verdict passes, 1 when a verdict fails,
//! 2 on a usage error, 3 on a solver/configuration failure (with a JSON
//! error report on stdout). Outputs embed the schema version, the resolved
//! configuration, and the seed (null for deterministic pipelines); nothing
//! time- or host-dependent is written, so reruns are byte-identical.

// Validation guards are written `!(a < b)` so NaN fails closed.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use incseq::{
    bounds_check, compare_u_v, critical_time, fit_expansion, geometric_sweep, rate_sweep,
    simulate_fixed_n, simulate_poisson, solve_u, solve_v, threshold_closed_form, threshold_star,
    DiscreteValueTrace, Family, FitTerms, SolverConfig, TestFunction, ThresholdPolicy, ZGrid,
};
use serde::Serialize;
use serde_json::{json, Value};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process;

const SCHEMA_VERSION: u32 = 1;

/// Largest `n` for which the table-driven fixed-n policy will solve and
/// hold all value rows (dense: about 32 KiB per row at the default grid).
const TABLE_POLICY_MAX_N: u64 = 2048;

#[derive(Parser)]
#[command(
    name = "incseq",
    version,
    about = "Numerical laboratory for online selection of increasing subsequences"
)]
struct Cli {
    /// Directory for JSON/CSV artifacts (default: $INCSEQ_OUT_DIR, else `.`).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate the Poisson-model value equation u' = (J u), u(0) = 0.
    PoissonSolve(PoissonSolveArgs),
    /// Iterate the fixed-n value recursion v_{k+1} = v_k + (G v_k).
    DiscreteSolve(DiscreteSolveArgs),
    /// Monte Carlo simulation of an online policy in either model.
    Simulate(SimulateArgs),
    /// Sweep a trial-function family against its claimed operator expansion.
    ExpansionCheck(ExpansionCheckArgs),
    /// Fit `value - sqrt(2a)` on {ln a, 1, 1/sqrt(a)} over a window.
    Fit(FitArgs),
    /// Compare the Poisson value curve with the fixed-n values at integers.
    Compare(CompareArgs),
    /// Audit the two-sided square-root bounds along the fixed-n recursion.
    BoundsCheck(BoundsCheckArgs),
}

impl Cmd {
    fn name(&self) -> &'static str {
        match self {
            Cmd::PoissonSolve(_) => "poisson-solve",
            Cmd::DiscreteSolve(_) => "discrete-solve",
            Cmd::Simulate(_) => "simulate",
            Cmd::ExpansionCheck(_) => "expansion-check",
            Cmd::Fit(_) => "fit",
            Cmd::Compare(_) => "compare",
            Cmd::BoundsCheck(_) => "bounds-check",
        }
    }
}

#[derive(Args, Serialize)]
struct PoissonSolveArgs {
    /// Horizon to integrate to.
    #[arg(long)]
    t_max: f64,
    /// Initial step of the geometric time grid.
    #[arg(long, default_value_t = 1.0e-4)]
    grid_initial: f64,
    /// Growth ratio of consecutive steps.
    #[arg(long, default_value_t = 1.0015)]
    grid_ratio: f64,
    /// Optional cap on the step size (uniform tail beyond it).
    #[arg(long)]
    grid_cap: Option<f64>,
    /// Write `poisson_curve.csv` with columns t, u, threshold.
    #[arg(long)]
    emit_curve: bool,
}

#[derive(Args, Serialize)]
struct DiscreteSolveArgs {
    /// Number of recursion steps (horizons 1..=n_max).
    #[arg(long)]
    n_max: usize,
    /// Mark-grid resolution (nodes on [0, 1]).
    #[arg(long, default_value_t = 2049)]
    grid: usize,
    /// Horizons whose full value rows are kept (comma-separated).
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    checkpoints: Vec<usize>,
    /// Write `v_at_zero.csv` with columns n, v_n, sqrt_2n, gap.
    #[arg(long)]
    emit_values: bool,
    /// Write `value_rows.csv` with columns k, z, value for each checkpoint.
    #[arg(long)]
    emit_rows: bool,
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ModelArg {
    FixedN,
    Poisson,
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
enum PolicyArg {
    StationaryDiscrete,
    StationaryPoisson,
    SelfSimilar,
    ScaledSqrtDiscrete,
    TableOptimalDiscrete,
    TableOptimalPoisson,
    GreedyRecords,
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    /// Arrival model.
    #[arg(long, value_enum)]
    model: ModelArg,
    /// Acceptance policy.
    #[arg(long, value_enum)]
    policy: PolicyArg,
    /// Number of items (fixed-n model).
    #[arg(long, required_if_eq("model", "fixed-n"))]
    n: Option<u64>,
    /// Horizon (Poisson model).
    #[arg(long, required_if_eq("model", "poisson"))]
    t: Option<f64>,
    /// Replicates.
    #[arg(long)]
    reps: u64,
    /// Master seed; replicate r consumes the stream keyed (seed, r).
    #[arg(long)]
    seed: u64,
    /// Acceptance window for the stationary policies.
    #[arg(long)]
    window: Option<f64>,
    /// Acceptance slope for the self-similar policy.
    #[arg(long)]
    alpha: Option<f64>,
    /// Slope sweep (self-similar, Poisson): one run per value, reporting
    /// mean/sqrt(t) for each.
    #[arg(long, num_args = 1.., value_delimiter = ',', conflicts_with_all = ["alpha", "dump_replicates"])]
    alphas: Vec<f64>,
    /// Mark-grid resolution for the table-optimal-discrete value solve.
    #[arg(long, default_value_t = 2049)]
    grid: usize,
    /// Relative tolerance for threshold tabulation (table-optimal-poisson).
    #[arg(long, default_value_t = 1.0e-12)]
    root_tolerance: f64,
    /// Write `replicate_lengths.csv` with columns replicate, length.
    #[arg(long)]
    dump_replicates: bool,
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Serialize)]
enum FamilyArg {
    #[value(name = "poisson-order-0")]
    #[serde(rename = "poisson-order-0")]
    PoissonOrder0,
    #[value(name = "poisson-order-1")]
    #[serde(rename = "poisson-order-1")]
    PoissonOrder1,
    #[value(name = "poisson-order-2")]
    #[serde(rename = "poisson-order-2")]
    PoissonOrder2,
    #[value(name = "discrete-order-0")]
    #[serde(rename = "discrete-order-0")]
    DiscreteOrder0,
    #[value(name = "discrete-order-1")]
    #[serde(rename = "discrete-order-1")]
    DiscreteOrder1,
    #[value(name = "discrete-order-2")]
    #[serde(rename = "discrete-order-2")]
    DiscreteOrder2,
}

impl FamilyArg {
    fn family(self) -> Family {
        match self {
            FamilyArg::PoissonOrder0 => Family::PoissonOrder0,
            FamilyArg::PoissonOrder1 => Family::PoissonOrder1,
            FamilyArg::PoissonOrder2 => Family::PoissonOrder2,
            FamilyArg::DiscreteOrder0 => Family::DiscreteOrder0,
            FamilyArg::DiscreteOrder1 => Family::DiscreteOrder1,
            FamilyArg::DiscreteOrder2 => Family::DiscreteOrder2,
        }
    }
}

#[derive(Args, Serialize)]
struct ExpansionCheckArgs {
    /// Trial-function family.
    #[arg(long, value_enum)]
    family: FamilyArg,
    /// Free coefficient (default: the family's matched value, or 0 inside
    /// the fixed-n order-2 window).
    #[arg(long, allow_negative_numbers = true)]
    coefficient: Option<f64>,
    /// Low end of the horizon sweep.
    #[arg(long, default_value_t = 1.0e2)]
    sweep_lo: f64,
    /// High end of the horizon sweep.
    #[arg(long, default_value_t = 1.0e6)]
    sweep_hi: f64,
    /// Sweep points per decade.
    #[arg(long, default_value_t = 12)]
    per_decade: usize,
    /// Marks z to test (fixed-n families), comma-separated, in [0, 1).
    #[arg(long, num_args = 1.., value_delimiter = ',', default_values_t = [0.0, 0.5, 0.9])]
    marks: Vec<f64>,
    /// Write `expansion_points.csv` with one row per sweep point.
    #[arg(long)]
    emit_points: bool,
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
enum FitSource {
    Poisson,
    FixedN,
    Csv,
}

#[derive(Args, Serialize)]
struct FitArgs {
    /// Where the series comes from: solve the Poisson curve, run the
    /// fixed-n recursion, or read a two-column `a,value` CSV.
    #[arg(long, value_enum)]
    source: FitSource,
    /// Poisson horizon (source = poisson).
    #[arg(long, required_if_eq("source", "poisson"))]
    t_max: Option<f64>,
    /// Fixed-n horizon (source = fixed-n).
    #[arg(long, required_if_eq("source", "fixed-n"))]
    n_max: Option<usize>,
    /// Mark-grid resolution for the fixed-n solve.
    #[arg(long, default_value_t = 2049)]
    grid: usize,
    /// CSV input path (source = csv).
    #[arg(long, required_if_eq("source", "csv"))]
    input: Option<PathBuf>,
    /// Low end of the fit window.
    #[arg(long)]
    window_lo: f64,
    /// High end of the fit window.
    #[arg(long)]
    window_hi: f64,
    /// Sample density when reading the Poisson curve.
    #[arg(long, default_value_t = 40)]
    per_decade: usize,
    /// Basis terms to include (subset of log, constant, inv-sqrt).
    #[arg(long, value_delimiter = ',', default_value = "log,constant,inv-sqrt")]
    terms: Vec<String>,
    /// Acceptance band for the log coefficient: low edge.
    #[arg(long, default_value_t = -0.11, allow_negative_numbers = true)]
    band_lo: f64,
    /// Acceptance band for the log coefficient: high edge.
    #[arg(long, default_value_t = -0.06, allow_negative_numbers = true)]
    band_hi: f64,
}

#[derive(Args, Serialize)]
struct CompareArgs {
    /// Largest integer horizon compared.
    #[arg(long)]
    n_max: usize,
    /// Mark-grid resolution for the fixed-n solve.
    #[arg(long, default_value_t = 2049)]
    grid: usize,
    /// Allowance for solver noise when checking u(n) <= v_n.
    #[arg(long, default_value_t = 1.0e-3)]
    tolerance: f64,
    /// Write `model_gaps.csv` with columns n, u, v, gap.
    #[arg(long)]
    emit_gaps: bool,
}

#[derive(Args, Serialize)]
struct BoundsCheckArgs {
    /// Largest horizon audited.
    #[arg(long)]
    n_max: usize,
    /// Mark-grid resolution.
    #[arg(long, default_value_t = 4097)]
    grid: usize,
    /// Write `bounds.csv` with columns n, v_n, lower, upper.
    #[arg(long)]
    emit_bounds: bool,
}

// ---------------------------------------------------------------------------
// Error plumbing

enum AppError {
    Lib(incseq::Error),
    Io(std::io::Error),
    Json(serde_json::Error),
}

impl AppError {
    fn kind(&self) -> &'static str {
        match self {
            AppError::Lib(e) => e.kind(),
            AppError::Io(_) => "io",
            AppError::Json(_) => "serialization",
        }
    }
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AppError::Lib(e) => e.fmt(f),
            AppError::Io(e) => write!(f, "i/o error: {e}"),
            AppError::Json(e) => write!(f, "serialization error: {e}"),
        }
    }
}

impl From<incseq::Error> for AppError {
    fn from(e: incseq::Error) -> Self {
        AppError::Lib(e)
    }
}
impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Io(e)
    }
}
impl From<serde_json::Error> for AppError {
    fn from(e: serde_json::Error) -> Self {
        AppError::Json(e)
    }
}

type AppResult<T> = Result<T, AppError>;

/// Semantic flag problems that clap's declarative rules cannot express;
/// exits with the usage status (2), matching parse errors.
fn usage_bail(message: &str) -> ! {
    Cli::command()
        .error(clap::error::ErrorKind::ArgumentConflict, message)
        .exit()
}

// ---------------------------------------------------------------------------
// Output plumbing

/// 17-significant-digit scientific form: round-trip safe for f64.
fn sig17(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_csv(path: &Path, header: &str, rows: Vec<String>) -> AppResult<()> {
    let mut text = String::with_capacity(header.len() + 1 + rows.len() * 40);
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(&row);
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

fn summary(
    command: &str,
    seed: Option<u64>,
    config: Value,
    diagnostics: Value,
    results: Value,
    verdicts: Value,
    pass: bool,
) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "seed": seed,
        "config": config,
        "diagnostics": diagnostics,
        "results": results,
        "verdicts": verdicts,
        "status": if pass { "pass" } else { "fail" },
    })
}

/// Write `<command>.json` into the output directory and echo it on stdout.
fn emit(out_dir: &Path, command: &str, report: &Value) -> AppResult<()> {
    fs::create_dir_all(out_dir)?;
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    fs::write(out_dir.join(format!("{command}.json")), &text)?;
    print!("{text}");
    Ok(())
}

fn resolve_out_dir(flag: Option<&Path>) -> PathBuf {
    if let Some(dir) = flag {
        return dir.to_path_buf();
    }
    std::env::var_os("INCSEQ_OUT_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

// ---------------------------------------------------------------------------
// Subcommand pipelines

fn run_poisson_solve(a: &PoissonSolveArgs, out: &Path) -> AppResult<bool> {
    let mut cfg = SolverConfig::new(a.t_max);
    cfg.grid.initial_spacing = a.grid_initial;
    cfg.grid.growth_ratio = a.grid_ratio;
    cfg.grid.max_spacing = a.grid_cap;
    let curve = solve_u(&cfg)?;

    let u_end = curve.last_value();
    // The critical time exists only once the curve has climbed past 1.
    let t1 = if u_end >= 1.0 {
        Some(critical_time(&curve, cfg.root_tolerance)?)
    } else {
        None
    };
    let threshold_end = threshold_star(&curve, a.t_max, cfg.root_tolerance)?;

    if a.emit_curve {
        let rows = curve
            .ts()
            .iter()
            .map(|&t| {
                let u = curve.value_at(t)?;
                let d = threshold_star(&curve, t, cfg.root_tolerance)?;
                Ok(format!("{},{},{}", sig17(t), sig17(u), sig17(d)))
            })
            .collect::<AppResult<Vec<_>>>()?;
        write_csv(&out.join("poisson_curve.csv"), "t,u,threshold", rows)?;
    }

    let report = summary(
        "poisson-solve",
        None,
        serde_json::to_value(a)?,
        json!({
            "nodes": curve.len(),
            "max_concavity_violation": curve.max_concavity_violation(),
        }),
        json!({
            "t_max": a.t_max,
            "value_at_t_max": u_end,
            "critical_time": t1,
            "threshold_at_t_max": threshold_end,
        }),
        json!({}),
        true,
    );
    emit(out, "poisson-solve", &report)?;
    Ok(true)
}

fn run_discrete_solve(a: &DiscreteSolveArgs, out: &Path) -> AppResult<bool> {
    let grid = ZGrid::uniform(a.grid)?;
    let trace = solve_v(a.n_max, &grid, &a.checkpoints)?;

    if a.emit_values {
        let rows = trace
            .v_at_zero()
            .iter()
            .enumerate()
            .skip(1)
            .map(|(n, &v)| {
                let target = (2.0 * n as f64).sqrt();
                format!("{n},{},{},{}", sig17(v), sig17(target), sig17(target - v))
            })
            .collect();
        write_csv(&out.join("v_at_zero.csv"), "n,v_n,sqrt_2n,gap", rows)?;
    }
    if a.emit_rows {
        let mut rows = Vec::new();
        for row in trace.checkpoint_rows() {
            let k = row.k();
            for (i, &v) in row.values().iter().enumerate() {
                rows.push(format!("{k},{},{}", sig17(row.grid().node(i)), sig17(v)));
            }
        }
        write_csv(&out.join("value_rows.csv"), "k,z,value", rows)?;
    }

    let report = summary(
        "discrete-solve",
        None,
        serde_json::to_value(a)?,
        json!({
            "grid_len": trace.grid_len(),
            "max_second_difference": trace.max_second_difference(),
            "bound_violations": trace.bound_violations(),
        }),
        json!({
            "n_max": trace.n_max(),
            "v_at_zero": trace.v_at_zero(),
            "final_value": trace.final_value(),
        }),
        json!({}),
        true,
    );
    emit(out, "discrete-solve", &report)?;
    Ok(true)
}

fn build_policy(a: &SimulateArgs) -> AppResult<ThresholdPolicy> {
    let need_window = || {
        a.window.ok_or_else(|| incseq::Error::Config {
            what: "stationary policies need --window".into(),
        })
    };
    match a.policy {
        PolicyArg::StationaryDiscrete => Ok(ThresholdPolicy::StationaryDiscrete {
            window: need_window()?,
        }),
        PolicyArg::StationaryPoisson => Ok(ThresholdPolicy::StationaryPoisson {
            window: need_window()?,
        }),
        PolicyArg::SelfSimilar => {
            let alpha = a.alpha.ok_or_else(|| incseq::Error::Config {
                what: "the self-similar policy needs --alpha (or --alphas for a sweep)".into(),
            })?;
            Ok(ThresholdPolicy::SelfSimilar { alpha })
        }
        PolicyArg::ScaledSqrtDiscrete => Ok(ThresholdPolicy::ScaledSqrtDiscrete),
        PolicyArg::GreedyRecords => Ok(ThresholdPolicy::GreedyRecords),
        PolicyArg::TableOptimalDiscrete => {
            let n = a.n.unwrap_or(0);
            if n > TABLE_POLICY_MAX_N {
                return Err(incseq::Error::Config {
                    what: format!(
                        "table-optimal-discrete holds every value row and is capped at \
                         n = {TABLE_POLICY_MAX_N}; use scaled-sqrt-discrete for larger n"
                    ),
                }
                .into());
            }
            let grid = ZGrid::uniform(a.grid)?;
            let k_max = (n as usize).saturating_sub(1);
            let checkpoints: Vec<usize> = (0..=k_max).collect();
            let rows = solve_v(k_max.max(1), &grid, &checkpoints)?
                .checkpoint_rows()
                .to_vec();
            Ok(ThresholdPolicy::table_optimal_discrete(rows)?)
        }
        PolicyArg::TableOptimalPoisson => {
            // Solve comfortably past the critical time even for tiny t so
            // the threshold table always has something to hold.
            let t = a.t.unwrap_or(0.0);
            let curve = solve_u(&SolverConfig::new(t.max(4.0)))?;
            Ok(ThresholdPolicy::table_optimal_poisson(
                &curve,
                a.root_tolerance,
            )?)
        }
    }
}

fn run_simulate(a: &SimulateArgs, out: &Path) -> AppResult<bool> {
    if !a.alphas.is_empty() {
        if a.policy != PolicyArg::SelfSimilar || a.model != ModelArg::Poisson {
            usage_bail("--alphas sweeps the self-similar policy in the Poisson model only");
        }
        let t = a.t.expect("clap requires --t for the Poisson model");
        let points = rate_sweep(&a.alphas, t, a.reps, a.seed)?;
        let rows = points
            .iter()
            .map(|p| {
                format!(
                    "{},{},{},{},{}",
                    sig17(p.alpha),
                    sig17(p.rate),
                    sig17(p.stats.mean),
                    sig17(p.stats.variance),
                    sig17(p.stats.std_error)
                )
            })
            .collect();
        write_csv(
            &out.join("rate_sweep.csv"),
            "alpha,rate,mean,variance,std_error",
            rows,
        )?;
        let report = summary(
            "simulate",
            Some(a.seed),
            serde_json::to_value(a)?,
            json!({}),
            json!({ "sweep": points }),
            json!({}),
            true,
        );
        emit(out, "simulate", &report)?;
        return Ok(true);
    }

    let policy = build_policy(a)?;
    let stats = match a.model {
        ModelArg::FixedN => {
            simulate_fixed_n(&policy, a.n.expect("clap requires --n"), a.reps, a.seed)?
        }
        ModelArg::Poisson => {
            simulate_poisson(&policy, a.t.expect("clap requires --t"), a.reps, a.seed)?
        }
    };
    if a.dump_replicates {
        let lengths = match a.model {
            ModelArg::FixedN => {
                incseq::fixed_n_replicate_lengths(&policy, a.n.unwrap(), a.reps, a.seed)?
            }
            ModelArg::Poisson => {
                incseq::poisson_replicate_lengths(&policy, a.t.unwrap(), a.reps, a.seed)?
            }
        };
        let rows = lengths
            .iter()
            .enumerate()
            .map(|(r, &len)| format!("{r},{len}"))
            .collect();
        write_csv(&out.join("replicate_lengths.csv"), "replicate,length", rows)?;
    }
    let report = summary(
        "simulate",
        Some(a.seed),
        serde_json::to_value(a)?,
        json!({}),
        json!({ "stats": stats }),
        json!({}),
        true,
    );
    emit(out, "simulate", &report)?;
    Ok(true)
}

fn default_coefficient(family: Family) -> f64 {
    let probe = if family.order() == 0 { 1.0 } else { 0.0 };
    TestFunction::new(family, probe)
        .ok()
        .and_then(|tf| tf.matched_value())
        .unwrap_or(0.0)
}

fn run_expansion_check(a: &ExpansionCheckArgs, out: &Path) -> AppResult<bool> {
    let family = a.family.family();
    let coefficient = a.coefficient.unwrap_or_else(|| default_coefficient(family));
    let sweep = geometric_sweep(a.sweep_lo, a.sweep_hi, a.per_decade)?;
    let order = family.order();
    let report = if family.is_discrete() {
        incseq::verify_discrete_expansion(order, coefficient, &sweep, &a.marks)?
    } else {
        incseq::verify_poisson_expansion(order, coefficient, &sweep)?
    };

    // Threshold cross-check: bisection on the profile versus the closed
    // form. At order 0 the form is algebraically exact (hard gate at
    // 1e-10); at orders 1-2 it is a two-term series with remainder one
    // order down, reported as a scaled defect.
    let tf = TestFunction::new(family, coefficient)?;
    let gate_lo = if order == 0 {
        a.sweep_lo
    } else {
        a.sweep_lo.max(2.0)
    };
    let mut worst_abs = 0.0f64;
    let mut worst_scaled = 0.0f64;
    for t in geometric_sweep(gate_lo, a.sweep_hi, a.per_decade)? {
        let from_root = tf.threshold_from_root(t)?;
        let closed = threshold_closed_form(family, coefficient, t)?;
        let d = (from_root - closed).abs();
        worst_abs = worst_abs.max(d);
        worst_scaled = worst_scaled.max(d * t.powf(1.5));
    }
    let threshold_exact = (order == 0).then_some(worst_abs <= 1.0e-10);

    if a.emit_points {
        let rows = report
            .points
            .iter()
            .map(|p| {
                format!(
                    "{},{},{},{},{}",
                    sig17(p.arg),
                    p.z.map(sig17).unwrap_or_default(),
                    sig17(p.raw),
                    sig17(p.scaled),
                    sig17(p.defect)
                )
            })
            .collect();
        write_csv(
            &out.join("expansion_points.csv"),
            "arg,z,raw,scaled,defect",
            rows,
        )?;
    }

    let pass = report.bounded && threshold_exact.unwrap_or(true);
    let json_report = summary(
        "expansion-check",
        None,
        json!({
            "family": a.family,
            "coefficient": coefficient,
            "sweep_lo": a.sweep_lo,
            "sweep_hi": a.sweep_hi,
            "per_decade": a.per_decade,
            "marks": a.marks,
            "emit_points": a.emit_points,
        }),
        json!({
            "threshold_worst_abs_defect": worst_abs,
            "threshold_worst_scaled_defect": worst_scaled,
        }),
        serde_json::to_value(&report)?,
        json!({
            "expansion_bounded": report.bounded,
            "coefficient_matched": report.coefficient_matched,
            "threshold_exact": threshold_exact,
        }),
        pass,
    );
    emit(out, "expansion-check", &json_report)?;
    Ok(pass)
}

fn read_series(path: &Path) -> AppResult<Vec<(f64, f64)>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split(',');
        let a = cols.next().unwrap_or("").trim().parse::<f64>();
        let v = cols.next().unwrap_or("").trim().parse::<f64>();
        match (a, v) {
            (Ok(a), Ok(v)) => out.push((a, v)),
            // A single unparseable leading line is a header.
            _ if i == 0 => continue,
            _ => {
                return Err(incseq::Error::InvalidInput {
                    what: format!("line {} of {} is not `a,value`", i + 1, path.display()),
                }
                .into());
            }
        }
    }
    if out.is_empty() {
        return Err(incseq::Error::InvalidInput {
            what: format!("{} holds no data rows", path.display()),
        }
        .into());
    }
    Ok(out)
}

fn parse_terms(terms: &[String]) -> FitTerms {
    let mut t = FitTerms {
        log_term: false,
        constant: false,
        inv_sqrt: false,
    };
    for term in terms {
        match term.as_str() {
            "log" => t.log_term = true,
            "constant" => t.constant = true,
            "inv-sqrt" => t.inv_sqrt = true,
            other => usage_bail(&format!(
                "unknown fit term `{other}` (expected log, constant, inv-sqrt)"
            )),
        }
    }
    t
}

fn run_fit(a: &FitArgs, out: &Path) -> AppResult<bool> {
    if !(a.band_lo < a.band_hi) {
        usage_bail("--band-lo must lie below --band-hi");
    }
    let (series, model): (Vec<(f64, f64)>, &str) = match a.source {
        FitSource::Poisson => {
            let t_max = a.t_max.expect("clap requires --t-max");
            let curve = solve_u(&SolverConfig::new(t_max))?;
            let pts = geometric_sweep(a.window_lo, a.window_hi, a.per_decade)?;
            let series = pts
                .into_iter()
                .map(|t| Ok((t, curve.value_at(t)?)))
                .collect::<Result<Vec<_>, incseq::Error>>()?;
            (series, "poisson value curve")
        }
        FitSource::FixedN => {
            let n_max = a.n_max.expect("clap requires --n-max");
            let grid = ZGrid::uniform(a.grid)?;
            let trace = solve_v(n_max, &grid, &[])?;
            let series = trace
                .v_at_zero()
                .iter()
                .enumerate()
                .skip(1)
                .map(|(n, &v)| (n as f64, v))
                .collect();
            (series, "fixed-n value at mark zero")
        }
        FitSource::Csv => (
            read_series(a.input.as_ref().expect("clap requires --input"))?,
            "csv series",
        ),
    };
    let fit = fit_expansion(
        &series,
        parse_terms(&a.terms),
        (a.window_lo, a.window_hi),
        model,
    )?;
    let in_band = fit
        .log_coefficient
        .map(|c| c >= a.band_lo && c <= a.band_hi)
        .unwrap_or(true);
    let report = summary(
        "fit",
        None,
        serde_json::to_value(a)?,
        json!({ "series_points": series.len() }),
        serde_json::to_value(&fit)?,
        json!({
            "band": [a.band_lo, a.band_hi],
            "log_coefficient_in_band": in_band,
        }),
        in_band,
    );
    emit(out, "fit", &report)?;
    Ok(in_band)
}

fn run_compare(a: &CompareArgs, out: &Path) -> AppResult<bool> {
    let curve = solve_u(&SolverConfig::new(a.n_max as f64))?;
    let grid = ZGrid::uniform(a.grid)?;
    let trace = solve_v(a.n_max, &grid, &[])?;
    let report = compare_u_v(&curve, &trace, a.tolerance)?;

    if a.emit_gaps {
        let rows = (1..=a.n_max)
            .map(|n| {
                let u = curve.value_at(n as f64)?;
                let v = trace.v_at_zero()[n];
                Ok(format!("{n},{},{},{}", sig17(u), sig17(v), sig17(v - u)))
            })
            .collect::<AppResult<Vec<_>>>()?;
        write_csv(&out.join("model_gaps.csv"), "n,u,v,gap", rows)?;
    }

    let pass = report.gap_nonnegative && report.gap_bounded;
    let json_report = summary(
        "compare",
        None,
        serde_json::to_value(a)?,
        json!({
            "poisson_nodes": curve.len(),
            "grid_len": trace.grid_len(),
        }),
        serde_json::to_value(&report)?,
        json!({
            "gap_nonnegative": report.gap_nonnegative,
            "gap_bounded": report.gap_bounded,
        }),
        pass,
    );
    emit(out, "compare", &json_report)?;
    Ok(pass)
}

fn run_bounds_check(a: &BoundsCheckArgs, out: &Path) -> AppResult<bool> {
    let grid = ZGrid::uniform(a.grid)?;
    let trace = solve_v(a.n_max, &grid, &[])?;
    let report = bounds_check(&trace);

    if a.emit_bounds {
        let rows = bound_rows(&trace);
        write_csv(&out.join("bounds.csv"), "n,v_n,lower,upper", rows)?;
    }

    let pass = report.all_hold && trace.bound_violations().is_empty();
    let json_report = summary(
        "bounds-check",
        None,
        serde_json::to_value(a)?,
        json!({
            "grid_len": trace.grid_len(),
            "in_solve_violations": trace.bound_violations(),
        }),
        serde_json::to_value(&report)?,
        json!({ "all_hold": pass }),
        pass,
    );
    emit(out, "bounds-check", &json_report)?;
    Ok(pass)
}

fn bound_rows(trace: &DiscreteValueTrace) -> Vec<String> {
    trace
        .v_at_zero()
        .iter()
        .enumerate()
        .skip(2)
        .map(|(n, &v)| {
            let nf = n as f64;
            let upper = (2.0 * nf).sqrt();
            let lower = upper - 2.0 * nf.ln() - 2.0;
            format!("{n},{},{},{}", sig17(v), sig17(lower), sig17(upper))
        })
        .collect()
}

// ---------------------------------------------------------------------------

fn run(cmd: &Cmd, out: &Path) -> AppResult<bool> {
    match cmd {
        Cmd::PoissonSolve(a) => run_poisson_solve(a, out),
        Cmd::DiscreteSolve(a) => run_discrete_solve(a, out),
        Cmd::Simulate(a) => run_simulate(a, out),
        Cmd::ExpansionCheck(a) => run_expansion_check(a, out),
        Cmd::Fit(a) => run_fit(a, out),
        Cmd::Compare(a) => run_compare(a, out),
        Cmd::BoundsCheck(a) => run_bounds_check(a, out),
    }
}

fn main() {
    let cli = Cli::parse();
    let out_dir = resolve_out_dir(cli.out_dir.as_deref());
    let name = cli.command.name();
    match run(&cli.command, &out_dir) {
        Ok(true) => {}
        Ok(false) => process::exit(1),
        Err(err) => {
            let report = json!({
                "schema_version": SCHEMA_VERSION,
                "command": name,
                "status": "error",
                "error": { "kind": err.kind(), "message": err.to_string() },
            });
            match serde_json::to_string_pretty(&report) {
                Ok(text) => println!("{text}"),
                Err(_) => println!("{{\"status\":\"error\"}}"),
            }
            eprintln!("error: {err}");
            process::exit(3);
        }
    }
}

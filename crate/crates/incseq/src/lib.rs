//! Numerical laboratory for online selection of increasing subsequences.
//!
//! Two closely related sequential decision problems are solved here to
//! high accuracy and cross-checked against each other:
//!
//! * **Poisson arrivals** — marks of a unit-rate planar Poisson process on
//!   `[0, t] x [0, 1]` are observed in time order and must be accepted in
//!   strictly increasing mark order. [`value_poisson`] integrates the
//!   optimality equation `u' = J u` and extracts the acceptance threshold.
//! * **Fixed horizon** — exactly `n` independent uniform marks arrive one
//!   by one. [`value_discrete`] runs the exact value recursion
//!   `v_{k+1} = v_k + G v_k` on a mark grid.
//!
//! Around the two solvers sit closed-form test families with known
//! expansions ([`test_functions`]), Monte Carlo policy simulation
//! ([`simulation`]), and regression/diagnostic tooling ([`analysis`])
//! used to confirm the second-order behaviour
//! `v_n = sqrt(2 n) - (1/12) log n + O(1)`.

// Validation guards are written `!(a < b)` so NaN fails closed.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod curve;
pub mod error;
pub mod interp;
pub mod quad;
pub mod rng;
pub mod root;
pub mod simulation;
pub mod test_functions;
pub mod value_discrete;
pub mod value_poisson;

pub use analysis::{bounds_check, compare_u_v, fit_expansion, FitReport, FitTerms};
pub use curve::ScalarCurve;
pub use error::{Error, Result};
pub use simulation::{
    fixed_n_replicate_lengths, poisson_replicate_lengths, rate_sweep, simulate_fixed_n,
    simulate_poisson, RatePoint, SimStats, ThresholdPolicy, ThresholdTable,
};
pub use test_functions::{
    geometric_sweep, threshold_closed_form, verify_discrete_expansion, verify_poisson_expansion,
    ExpansionReport, Family, TestFunction,
};
pub use value_discrete::{
    apply_g, optimal_acceptance_cut, solve_v, solve_v_hat, sqrt_window, step_recursion,
    DiscreteValueRow, DiscreteValueTrace, ZGrid,
};
pub use value_poisson::{
    apply_j, apply_j_hat, critical_time, solve_u, solve_u_hat, suboptimal_threshold,
    threshold_star, GridPolicy, OperatorSettings, SolverConfig,
};

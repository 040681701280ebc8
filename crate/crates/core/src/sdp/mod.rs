//! SDP feasibility as a matrix saddle-point game.
//!
//! For symmetric `A_1, ..., A_m` the solver estimates the sign of
//! `s = min_{y in simplex} max_{X in spectrahedron} <sum_i y_i A_i, X>`.
//! Any pair `(X, y)` brackets it:
//! `min_i <A_i, X> <= s <= lambda_max(sum_i y_i A_i)`, and the width of that
//! bracket is the duality gap.
//!
//! Deciding whether some `X` with unit trace satisfies `<B_i, X> <= 0` for
//! all `i` is the case `A_i = -B_i`; a binary search over an objective value
//! turns an optimization-form SDP into a sequence of such questions and is
//! left to the caller.

mod instance;
mod io;
mod solver;

pub use instance::{adjoint_apply, adjoint_operator, costs, SdpInstance, Triplet, Width};
pub use io::{format_instance, load_instance, parse_instance, save_instance};
pub use solver::{
    duality_gap, gap_bound, gap_schedule, random_instance, solve_feasibility, FeasibilityReport,
    GapReport, GapSchedule, PrimalAverage, SaddleIterate, SolverConfig, Verdict,
};

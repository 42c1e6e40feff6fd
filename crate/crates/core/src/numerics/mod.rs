//! Root-finders, pseudo-cost functions and the per-step convex solver.

pub mod bilevel;
pub mod lambert;
pub mod pseudo;

pub use bilevel::{pseudo_cost_minimize, StepProblem, StepSolution};
pub use lambert::lambert_w0;
pub use pseudo::{
    eta_residual, gamma_residual, solve_eta, solve_eta_bisection, solve_gamma, ExpCurve, PseudoCostParams, Variant,
};

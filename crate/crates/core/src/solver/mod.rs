//! Continuation solver for `log F(u) = ∫u vol_g + Ψ`.
//!
//! The path `G_t(u) = log F(u) − ∫u vol_g − tΨ − (1 − t)Ψ₀` starts at a
//! constant root for `t = 0`. Each step is corrected by damped Newton with a
//! matrix-free GMRES solve of the linearized system.

mod continuation;
mod linear;
mod newton;
mod problem;

pub use continuation::{
    continuation_solve, continuation_solve_from, gradient_sup, integral_bound_check,
    solve_up_to_constant, ConstantSolution, ContinuationTrace, IntegralBound, TraceRecord,
    TRACE_HEADER,
};
pub use linear::{
    linearize, quotient_gradient, GmresInfo, LinearOperator, SpectralPreconditioner, Stencil,
    MAX_ITERATIONS, RESTART,
};
pub use newton::{newton_solve_at_t, NewtonOutcome, MIN_STEP};
pub use problem::{
    reduce_to_positive_chi, residual, Homotopy, Preconditioner, ProblemSpec, RhsMode, Tolerances,
};

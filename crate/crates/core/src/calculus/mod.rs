//! Processes on event trees and the discrete-time stochastic calculus over them.

mod jump;
mod process;
mod semimartingale;

pub use jump::{
    compensate_measure, identity_star_integral, project_onto_jump_measure, star_integral, star_integral_with,
    Compensator, JumpMeasure, PredictableFunction,
};
pub use process::{Process, ProcessSpec};
pub use semimartingale::{
    bracket, bracket_matrix, check_martingale, decompose, dot_integral, dual_predictable_projection, is_martingale,
    predictable_bracket, predictable_bracket_matrix, Decomposition,
};

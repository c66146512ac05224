//! Exact-rational stochastic calculus on finite event trees: jump measures and
//! finite predictable constraints, martingale representation, and drift multipliers
//! under filtration enlargement.

pub mod calculus;
pub mod checks;
pub mod constraint;
pub mod enlargement;
pub mod error;
pub mod fixtures;
pub mod fuzz;
pub mod linalg;
pub mod lp;
pub mod random;
pub mod rational;
pub mod representation;
pub mod scenario;
pub mod tree;

pub use error::{Error, Result};
pub use rational::{Vector, Q};

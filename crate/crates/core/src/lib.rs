//! Periodic and Neumann boundary value problems for phi-Laplacian Liénard
//! equations `(phi(u'))' + f(u) u' + g(t, u) = s`.

pub mod analysis;
pub mod cli;
pub mod continuation;
pub mod error;
pub mod expr;
pub mod fixtures;
pub mod grid;
pub mod operators;
pub mod phi;
pub mod problem;
pub mod solver;

pub use error::{Error, Result};
pub use grid::GridFunction;
pub use phi::PhiOperator;
pub use problem::{Forcing, PeriodicProblem, WeightedForcing};

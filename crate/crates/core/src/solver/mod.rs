//! Convex optimization back end.

pub mod conic;

pub use conic::{solve, ConeProgram, ConeSolution, SolveStatus, SolverSettings, SparseRow};

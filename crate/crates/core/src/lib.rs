//! Symbolic Hamilton-Jacobi constraint analysis and covariant phase space.

pub mod canon;
pub mod coeff;
pub mod covariant;
pub mod dsl;
pub mod expr;
pub mod hj;
pub mod model;
pub mod poly;
pub mod report;
pub mod variational;

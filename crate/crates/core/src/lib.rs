//! Numerical laboratory for bubble-tower solutions of the critical
//! competitive system `−Δu_i = μ_i u_i³ + β u_i Σ_{j≠i} u_j²` on a pierced
//! ball in four dimensions.

pub mod asymptotics;
pub mod bubbles;
pub mod error;
pub mod quadrature;
pub mod reduced;
pub mod report;
pub mod solver;

pub use error::{Error, Result};

//! Numerical laboratory for the Hessian quotient equation
//! `sigma_n / sigma_k (D^2 u) = f`: symmetric-function calculus, discrete
//! Legendre duality, inequality scans, desk-scale solvers, section geometry
//! and estimate experiments.

pub mod error;
pub mod experiment;
pub mod geometry;
pub mod grid;
pub mod inequalities;
pub mod legendre;
pub mod sampling;
pub mod solver;
pub mod symcalc;

pub use error::{Error, Result};

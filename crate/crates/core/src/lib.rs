//! Numerical toolkit for the σ₂/σ₁ Hessian quotient equation on the flat
//! 2-torus and on conformally flat metrics.

pub mod cli;
pub mod config;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod identities;
pub mod kernel;
pub mod monitor;
pub mod oracle;
pub mod solver;
pub mod trig;

pub use error::{Error, Node, Result};

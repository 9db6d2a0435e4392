//! Numerical toolkit for the non-cutoff Boltzmann collision operator.

pub mod barrier;
pub mod cli;
pub mod config;
pub mod error;
pub mod fixtures;
pub mod geom;
pub mod grid;
pub mod hydro;
pub mod kernel;
pub mod operator;
pub mod params;
pub mod quadrature;
pub mod solver;
pub mod suite;
pub mod verifier;

pub use error::{Error, Result};

//! Finite-size corrections for the constrained ground state of a spiked
//! GOE Hamiltonian: random-matrix primitives, the reduction to a two-level
//! variational problem, limit theory, fluctuation statistics, and a Monte
//! Carlo harness.

pub mod error;
pub mod experiment_harness;
pub mod fluctuation_lab;
pub(crate) mod numeric;
pub mod reduction_solver;
pub mod rmt_core;
pub mod theory_engine;
pub mod verify;

pub use error::{Result, SkError};

//! Ensemble predictions and exact quench dynamics for equilibrating cat
//! states.
//!
//! The long-time state of an isolated system is modelled as `U ρ0 U†` with
//! `U` Haar-distributed over the unitaries commuting with `H`. The crate
//! computes the first two moments of that ensemble analytically, checks them
//! against Monte-Carlo sampling, and compares both with time averages of
//! exact dynamics in a disordered XXX chain.

pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod haar;
pub mod operator;
pub mod spectral;
pub mod spin_chain;

pub use error::{Error, Result};
pub use operator::{CMatrix, CVector, DensityMatrix, HermitianOperator, C64};

//! Numerical toolkit for contact Hamilton-Jacobi equations on flat tori.
//!
//! The crate integrates the contact characteristic system
//!
//! ```text
//! x' =  dH/dp
//! p' = -dH/dx - (dH/du) p
//! u' =  p . dH/dp - H
//! ```
//!
//! for Hamiltonians `H(x, p, u)` that depend on the unknown's value `u`,
//! computes the implicit action functions and the backward/forward
//! Lax-Oleinik solution semigroups on periodic grids, and runs verification
//! batteries for the subsolution characterizations these objects satisfy:
//! epigraph invariance under the flow, monotonicity along the semigroups,
//! and quantitative strict-subsolution rates.
//!
//! Modules mirror the pipeline:
//!
//! - [`geometry`] - periodic grids, sampled functions, interpolation,
//!   one-sided difference quotients.
//! - [`hamiltonian`] - Hamiltonian models (quadratic-in-p or parsed
//!   expressions) with exact first derivatives via forward-mode jets,
//!   Legendre transforms, and assumption diagnostics.
//! - [`flow`] - RK4 integration of the characteristic system with energy
//!   monitoring and blow-up detection.
//! - [`action`] - implicit action functions by characteristic shooting
//!   (one space dimension).
//! - [`semigroup`] - implicit Lax-Oleinik evolution of grid functions.
//! - [`verify`] - subsolution certification and the theorem batteries.

pub mod action;
pub mod flow;
pub mod geometry;
pub mod hamiltonian;
pub mod semigroup;
pub mod verify;

pub use geometry::{GridFunction, OneSidedGradient, TorusSpec};
pub use hamiltonian::{HamiltonianModel, JetValue, LagrangianValue};
pub use flow::{ContactState, StepControl, Trajectory};

//! Dimension reduction of second-order curved thin-film energies.
//!
//! The library evaluates the rescaled three-dimensional energy of a thin film
//! (a Saint Venant-Kirchhoff membrane part plus a quadratic second-order
//! part) on a fixed unit cylinder, computes the coefficients and term
//! energies of its formal expansion in the thickness, checks the constraint
//! cascade that kills the negative orders, evaluates the two-dimensional
//! limit energy on planar, cylindrical and spherical films, and solves the
//! reduced director problems by gradient descent.
//!
//! Modules follow the pipeline:
//! - [`tensor3`], [`elasticity`]: the algebra of the energy density;
//! - [`geometry`]: charts, frames, the fattening map and its inverse;
//! - [`grid`], [`rescaled_energy`]: discretization and the direct evaluator;
//! - [`expansion`]: series coefficients, term energies, cascade constraints;
//! - [`limit_energy`], [`solver`]: the limit functionals and their minimizers;
//! - [`harness`]: order fits, limit checks, and consistency reports.

pub mod elasticity;
pub mod error;
pub mod expansion;
pub mod geometry;
pub mod grid;
pub mod harness;
pub mod limit_energy;
pub mod oracles;
pub mod rescaled_energy;
pub mod solver;
pub mod tensor3;

pub use error::{Error, Result};

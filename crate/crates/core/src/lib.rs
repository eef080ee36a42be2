//! Adaptive interior penalty discontinuous Galerkin solver for the elliptic
//! obstacle problem with a supremum-norm a posteriori error estimator.

pub mod assembly;
pub mod driver;
pub mod error;
pub mod estimator;
pub mod fespace;
pub mod mesh;
pub mod multiplier;
pub mod quadrature;
pub mod solver;
pub mod sparse;
pub mod topology;
pub mod verify;
pub mod vtk;

pub use error::{Error, Result};

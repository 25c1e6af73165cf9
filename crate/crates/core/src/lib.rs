//! Surface calculus and thin-film limit Navier-Stokes solvers on closed
//! surfaces embedded in R^3.

pub mod error;
pub mod fields;
pub mod galerkin;
pub mod geometry;
pub mod helmholtz;
pub mod nssolver;
pub mod par;
pub mod random;
pub mod sphere;
pub mod surfcalc;
pub mod thinfilm;
pub mod torus;

pub use error::{Error, Result};
pub use fields::{AmbientField, Field, GridId, Mat3, MatrixField, ScalarField, TangentField, Vec3, WeightField};
pub use geometry::{GridDescriptor, SurfaceGrid};

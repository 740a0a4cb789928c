//! Level-set shape calculus on uniform Cartesian grids.
//!
//! Surfaces are zero sets of a level function `phi` that is negative inside.
//! Surface integrals use a smeared delta, and shape gradients of area,
//! anisotropic and curvature energies are evaluated on a narrow band around
//! the interface.

pub mod dynamics;
pub mod error;
pub mod fields;
pub mod functionals;
pub mod geometry;
pub mod quadrature;
pub mod shapes;

pub use error::{GeoError, Result};
pub use fields::{GridSpec, Mat3, MatrixField3, ScalarField3, Vec3, VectorField3};
pub use geometry::{GeometryBundle, LevelSet};
pub use quadrature::{surface_integral, SmearKernel};
pub use shapes::AnalyticShape;

//! Fictitious-domain fluid–structure interaction with a distributed Lagrange
//! multiplier, discretized with Bercovier–Pironneau Stokes elements on a fluid
//! mesh and P1 elements on an independent solid mesh.
//!
//! The crate is organized bottom-up:
//!
//! * [`mesh`]: structured/imported triangulations and the macro/refined pair
//!   used by P1-iso-P2.
//! * [`geometry`]: bounding-box index, convex clipping, fan triangulation,
//!   point location and the solid/fluid mesh overlay.
//! * [`quadrature`]: Gauss rules of order 1–3 plus a degree-6 rule for error
//!   norms and data.
//! * [`spaces`]: finite element spaces, DOF numbering and deformation maps.
//! * [`assembly`]: every block of the coupled saddle-point system, including
//!   both interface-matrix strategies.
//! * [`solver`]: sparse direct solve with pressure nullspace handling.
//! * [`verification`]: manufactured solutions, the eight test configurations,
//!   error norms and convergence rates.

pub mod assembly;
pub mod geometry;
pub mod mesh;
pub mod quadrature;
pub mod solver;
pub mod sparse;
pub mod spaces;
pub mod verification;

mod error;

pub use error::Error;

pub use assembly::{CoupledSystem, CouplingForm, CouplingMethod};
pub use geometry::{Aabb, BoxIndex, ConvexPolygon, Overlay, OverlayCell, Triangle};
pub use mesh::{MacroMeshPair, Orientation, TriMesh};
pub use quadrature::QuadratureRule;
pub use solver::{SolveReport, Solution};
pub use spaces::{DeformationMap, FeSpace, SpaceKind};
pub use sparse::SparseMatrix;
pub use verification::{ErrorSet, Level, PressureElement, ResultTable, TestCase};

/// 2D point type used throughout the crate.
pub type Point = nalgebra::Point2<f64>;
/// 2D vector type used throughout the crate.
pub type Vector = nalgebra::Vector2<f64>;
/// 2×2 matrix type (jacobians, affine maps).
pub type Matrix = nalgebra::Matrix2<f64>;

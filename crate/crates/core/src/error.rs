use crate::assembly::AssemblyError;
use crate::geometry::GeometryError;
use crate::mesh::MeshError;
use crate::quadrature::QuadratureError;
use crate::solver::SolverError;
use crate::spaces::SpaceError;
use crate::verification::VerificationError;

/// Any error produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Verification(#[from] VerificationError),
}

impl Error {
    /// True when the error signals a broken internal invariant rather than bad
    /// input or configuration.
    pub fn is_internal(&self) -> bool {
        match self {
            Error::Solver(SolverError::Singular { .. }) => true,
            Error::Assembly(AssemblyError::NodeOutsideCell { .. }) => true,
            Error::Verification(e) => e.is_internal(),
            _ => false,
        }
    }
}

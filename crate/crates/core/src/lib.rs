//! Adaptive finite element solver for the Allen–Cahn equation with a posteriori
//! conditional error bounds.

pub mod checkpoint;
pub mod config;
pub mod driver;
pub mod estimators;
pub mod expr;
pub mod fem;
pub mod linalg;
pub mod mesh;
pub mod quadrature;
pub mod report;
pub mod setup;
pub mod spectral;
pub mod time_stepper;
pub mod vtk;

use std::path::PathBuf;

use thiserror::Error;

pub use checkpoint::CheckpointError;
pub use config::ConfigErrors;
pub use expr::ExprError;
pub use linalg::SolverError;
pub use mesh::MeshError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("vector length {got} does not match {expected} degrees of freedom")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("configuration errors:\n{0}")]
    Config(#[from] ConfigErrors),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("{path}: {source}")]
    Checkpoint {
        path: PathBuf,
        source: CheckpointError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    /// Failure while evaluating estimators, as opposed to advancing the scheme.
    #[error("estimator failure: {0}")]
    Estimator(Box<Error>),
}

//! Adaptive iterative linearized Galerkin solver for strongly monotone
//! quasi-linear elliptic problems on a two-dimensional L-shaped domain.
//!
//! P1 finite elements on newest-vertex-bisection meshes, with Zarantonello,
//! Kačanov and damped Newton linearizations, a residual error estimator and
//! Dörfler marking.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod driver;
pub mod estimator;
pub mod fem;
pub mod linearization;
pub mod mesh;
pub mod model;
pub mod oracle;
pub mod par;
pub mod quadrature;
pub mod verify;

pub use driver::{run, run_from, IlgConfig, LevelRecord, RunRecord, Termination};
pub use estimator::{estimate, mark, IndicatorField};
pub use fem::{DiscreteFunction, FeSpace, SolveError};
pub use linearization::{step, SchemeSpec, StepRecord};
pub use mesh::{make_lshape_initial, MarkedSet, MeshError, Refinement, Triangulation};
pub use model::{singular_problem, smooth_problem, DiffusionLaw, FeProblem, ManufacturedProblem};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("discrete function does not belong to this finite element space")]
    MeshMismatch,
    #[error("Newton damping collapsed after {halvings} halvings")]
    DampingCollapse { halvings: u32 },
    #[error("level {level}: stopping criterion not met after {steps} linearization steps")]
    StepLimit { level: usize, steps: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("need at least 3 levels in the fitting window, found {found}")]
    InsufficientLevels { found: usize },
    #[error("reference solver: {0}")]
    OracleFailed(String),
}

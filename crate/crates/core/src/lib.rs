//! Tracking MPC formulations for constrained linear systems.
//!
//! The crate builds, solves and closed-loop-simulates four receding-horizon
//! controllers over a shared cone-program container:
//!
//! - equality-terminal MPC,
//! - MPC for tracking (MPCT) with a steady-state artificial reference,
//! - periodic MPCT with a periodic artificial trajectory,
//! - harmonic MPC (HMPC) with a harmonic artificial reference and
//!   second-order cone constraint sets.
//!
//! All four are lowered to a sparse quadratic objective with linear
//! equalities, box rows and 3-dimensional second-order cone blocks, solved by
//! the ADMM engine in [`solver`]. [`reachable`] provides the standalone
//! optimal-reachable-reference oracles the closed loop converges to, and
//! [`simulator`] runs the receding-horizon loop against either the exact LTI
//! model or the nonlinear ball-and-plate plant from [`ball_plate`].

pub mod ball_plate;
pub mod formulations;
pub mod harmonic;
pub mod model;
pub mod reachable;
pub mod simulator;
pub mod solver;
pub mod suites;

pub use ball_plate::BallPlateParams;
pub use formulations::{
    BuiltProgram, ControllerKind, DecodedSolution, FormulationConfig, WeightSet,
};
pub use harmonic::HarmonicParams;
pub use model::{LtiModel, SteadyStatePair, ValidationReport};
pub use reachable::{ReachableResult, ReachableTarget};
pub use simulator::{Plant, ReferenceSchedule, SimulationTrace};
pub use solver::{ConeProgram, SolverConfig, SolverResult, SolverStatus};

/// Absolute residual tolerance for steady-state and harmonic-dynamics
/// membership checks.
pub const EPS_EQ: f64 = 1e-9;

/// Errors shared across the crate's modules.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("model failed validation: {0}")]
    InvalidModel(ValidationReport),
    #[error("pair (A, B) is not controllable")]
    Uncontrollable,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("harmonic frequencies differ: {0} vs {1}")]
    FrequencyMismatch(f64, f64),
    #[error("sigma-tightened output band is empty (sigma too large)")]
    EmptySigmaBand,
    #[error("feasible set is empty")]
    EmptyFeasibleSet,
    #[error("malformed cone program: {0}")]
    Structure(String),
    #[error("LDL factorization failed: zero pivot at column {0}")]
    ZeroPivot(usize),
    #[error("cannot decode solver result with status {0:?}")]
    Undecodable(SolverStatus),
    #[error("schedule incompatible with controller: {0}")]
    IncompatibleSchedule(String),
}

//! Energy-aware longitudinal trajectory planning for a vehicle approaching an
//! intersection with a fixed arrival time and speed.
//!
//! The vehicle, consumption and PWA models are generic over [`Scalar`]
//! (`f32` or `f64`). Problem assembly, the solver, the convex-concave
//! procedure and the experiments work in `f64`.

pub mod consumption;
pub mod dc;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod problem;
pub mod pwa;
pub mod scalar;
pub mod solver;
pub mod trajectory;

pub use consumption::{relative_difference, EfficiencyChain, ModelKind, VehicleModel};
pub use dc::{dc_solve, fit_surrogate, DcOptions, QuadraticSurrogate};
pub use dynamics::{
    derive_resistance_coefficients, rollout, validate_trajectory, BoundarySpec, Limits, ResistanceCoefficients,
    RoadSpec, SafetySpec, ValidationReport,
};
pub use error::{Error, Result};
pub use experiments::{run_scenario, tradeoff_sweep, ExperimentConfig, Strategy};
pub use problem::{build_problem, extract_solution, PwaMode, ScenarioSpec, StrategyKind};
pub use pwa::{build_pwa, PwaSegments};
pub use scalar::Scalar;
pub use solver::{solve, SolveResult, SolveStatus, SolverOptions};
pub use trajectory::Trajectory;

pub type Trajectory64 = Trajectory<f64>;
pub type Trajectory32 = Trajectory<f32>;
pub type Coefficients64 = ResistanceCoefficients<f64>;
pub type Coefficients32 = ResistanceCoefficients<f32>;

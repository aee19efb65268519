//! Gridless modal analysis from fully sampled, randomly sampled, or
//! compressed multichannel vibration data.
//!
//! Frequencies and mode shapes are recovered jointly by minimizing the
//! multiple-measurement-vector atomic norm, posed as a semidefinite program
//! and solved with ADMM. The dual certificate locates the frequencies and a
//! least-squares fit against the recovered data yields the shapes.
//!
//! Everything is generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix the common `f64` instantiation.

pub mod atomcore;
pub mod error;
pub mod measure;
pub mod modal;
pub mod scalar;
pub mod sdpsolve;
pub mod structsim;

pub use error::{AnmError, Result};
pub use scalar::Real;

pub use num_complex::Complex;

pub type C64 = Complex<f64>;
pub type CMatrix = nalgebra::DMatrix<C64>;
pub type StructuralSystem = structsim::StructuralSystem<f64>;
pub type PhysicalModes = structsim::PhysicalModes<f64>;
pub type ModalGroundTruth = structsim::ModalGroundTruth<f64>;
pub type DataMatrix = structsim::DataMatrix<f64>;
pub type MeasurementSpec = measure::MeasurementSpec<f64>;
pub type Observation = measure::Observation<f64>;
pub type AnmProblem = sdpsolve::AnmProblem<f64>;
pub type AnmSolution = sdpsolve::AnmSolution<f64>;
pub type SolverOptions = sdpsolve::SolverOptions<f64>;
pub type ModalEstimate = modal::ModalEstimate<f64>;
pub type EvaluationReport = modal::EvaluationReport<f64>;

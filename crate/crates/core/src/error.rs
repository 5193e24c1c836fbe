use alloc::string::String;
use alloc::vec::Vec;

use crate::attack::CandidateRejection;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        context: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("unstable dynamics: spectral radius {spectral_radius} is not below 1")]
    UnstableDynamics { spectral_radius: f64 },

    #[error("singular operator (condition number {condition:e})")]
    SingularOperator { condition: f64 },

    #[error("singular covariance {what} (condition number {condition:e})")]
    SingularCovariance { what: &'static str, condition: f64 },

    #[error("reference covariance is not positive definite")]
    SingularReference,

    #[error("matrix {what} is singular after the greedy shift")]
    SingularShift { what: &'static str },

    #[error("{what} is not positive semidefinite (minimum eigenvalue {min_eigenvalue:e})")]
    NonPsdInput { what: &'static str, min_eigenvalue: f64 },

    #[error("{what} is not symmetric")]
    NotSymmetric { what: &'static str },

    #[error("{what} has non-finite entries")]
    NonFinite { what: &'static str },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Riccati iteration did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("pair is not stabilizable: closed-loop spectral radius {spectral_radius}")]
    NotStabilizable { spectral_radius: f64 },

    #[error("pair is not detectable: observer spectral radius {spectral_radius}")]
    NotDetectable { spectral_radius: f64 },

    #[error("lambda = {lambda} is infeasible: {reason}")]
    InfeasibleLambda { lambda: f64, reason: String },

    #[error("no measurement admits a positive optimal variance at lambda = {lambda}")]
    NoFeasibleMeasurement { lambda: f64 },

    #[error("greedy step {step} has no feasible candidate ({} rejected)", candidates.len())]
    InfeasibleLambdaAtStep {
        step: usize,
        candidates: Vec<CandidateRejection>,
    },

    #[error("{count} subsets exceed the enumeration budget")]
    TooManySubsets { count: u128 },

    #[error("attack leaves the likelihood ratio constant; the detector is degenerate")]
    DegenerateAttack,

    #[error("non-physical reactor state (temperature {temperature} K)")]
    NonPhysicalState { temperature: f64 },

    #[error("Newton iteration diverged after {iterations} iterations (residual {residual:e})")]
    NewtonDiverged { iterations: usize, residual: f64 },

    #[error("operating point is not an equilibrium (residual {residual:e})")]
    NotAnEquilibrium { residual: f64 },
}

use dia_core::Error as CoreError;

/// Failure classes, each with its own process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) | CliError::Validation(_) | CliError::Io(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

/// Exit-code class of a core error.
pub fn classify(e: &CoreError) -> fn(String) -> CliError {
    use CoreError::*;
    match e {
        DimensionMismatch { .. }
        | UnstableDynamics { .. }
        | NonPsdInput { .. }
        | NotSymmetric { .. }
        | NonFinite { .. }
        | InvalidParameter(_)
        | NotStabilizable { .. }
        | NotDetectable { .. }
        | DegenerateAttack
        | NonPhysicalState { .. }
        | NotAnEquilibrium { .. }
        | TooManySubsets { .. } => CliError::Validation,
        InfeasibleLambda { .. } | NoFeasibleMeasurement { .. } | InfeasibleLambdaAtStep { .. } => CliError::Infeasible,
        SingularOperator { .. }
        | SingularCovariance { .. }
        | SingularReference
        | SingularShift { .. }
        | NoConvergence { .. }
        | NewtonDiverged { .. } => CliError::Numerical,
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        classify(&e)(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

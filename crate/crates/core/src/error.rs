use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Crate-wide error. Each variant carries the module that raised it.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dynamics: {0}")]
    Dynamics(#[from] DynamicsError),
    #[error("vkernel: {0}")]
    Kernel(#[from] KernelError),
    #[error("dsgraph: {0}")]
    Graph(#[from] GraphError),
    #[error("spectral: {0}")]
    Spectral(#[from] SpectralError),
    #[error("attractor: {0}")]
    Attractor(#[from] AttractorError),
    #[error("theory: {0}")]
    Theory(#[from] TheoryError),
    #[error("diffeo: {0}")]
    Diffeo(#[from] DiffeoError),
    #[error("evalbench: {0}")]
    Eval(#[from] EvalError),
}

impl Error {
    pub fn module(&self) -> &'static str {
        match self {
            Error::Dynamics(_) => "dynamics",
            Error::Kernel(_) => "vkernel",
            Error::Graph(_) => "dsgraph",
            Error::Spectral(_) => "spectral",
            Error::Attractor(_) => "attractor",
            Error::Theory(_) => "theory",
            Error::Diffeo(_) => "diffeo",
            Error::Eval(_) => "evalbench",
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("unknown benchmark system `{0}`")]
    UnknownSystem(String),
    #[error("invalid parameters for {system}: {reason}")]
    InvalidParameters { system: &'static str, reason: String },
    #[error("state must be finite and of dimension {expected}, got {got:?}")]
    BadState { expected: usize, got: Vec<f64> },
    #[error("trajectory diverged at step {step}")]
    Divergent { step: usize },
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("no initial conditions given")]
    NoInitialConditions,
    #[error("invalid trajectory data: {0}")]
    InvalidData(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("invalid kernel parameter: {0}")]
    InvalidParams(String),
    #[error("all velocities are zero; bandwidth is undefined")]
    ZeroVelocities,
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("path length {0} is below the minimum of 3")]
    PathTooShort(usize),
    #[error("need at least {min} paths, got {got}")]
    TooFewPaths { min: usize, got: usize },
    #[error("need at least one component")]
    NoComponents,
}

#[derive(Debug, Error, PartialEq)]
pub enum SpectralError {
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("QL iteration did not converge at off-diagonal index {0}")]
    NoConvergence(usize),
    #[error("point {0} has no support on any zero eigenvector")]
    Unsupported(usize),
    #[error("inconsistent inputs: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum AttractorError {
    #[error("lines are parallel (|cos| = {0})")]
    Parallel(f64),
    #[error("need at least 2 usable lines, got {0}")]
    TooFewLines(usize),
    #[error("cluster {0} has an embedding of dimension {1}; at least 2 required")]
    LowDimension(usize, usize),
    #[error("position standard deviation is zero in dimension {0}")]
    ZeroSpread(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

#[derive(Debug, Error, PartialEq)]
pub enum TheoryError {
    #[error("eigenvalue {0} outside (0, 4)")]
    LambdaOutOfRange(f64),
    #[error("path length {0} is below the minimum of 3")]
    PathTooShort(usize),
    #[error("no eigenvalue of multiplicity 2 found")]
    NoDoubleEigenvalue,
    #[error("degenerate path: all points coincide")]
    DegeneratePath,
}

#[derive(Debug, Error, PartialEq)]
pub enum DiffeoError {
    #[error("non-finite value in layer {0}")]
    NonFinite(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("coupling layers need dimension >= 2, got {0}")]
    DimensionTooSmall(usize),
    #[error("loss became non-finite at epoch {0}")]
    NonFiniteLoss(usize),
    #[error("Jacobian solve failed")]
    SingularJacobian,
    #[error("no training pairs")]
    EmptyTrainingSet,
    #[error("model format: {0}")]
    Format(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty reference set")]
    EmptyReference,
}

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("quadrature did not converge (error estimate {residual:.3e} after {evaluations} evaluations)")]
    QuadratureFailure { residual: f64, evaluations: usize },

    #[error("matrix is not in M+(d): eigenvalue {0} has non-positive real part")]
    NotMPlus(Complex64),

    #[error("initial condition must be non-zero")]
    ZeroInitialCondition,

    #[error("decay constants failed calibration after {rounds} rounds")]
    DecayCalibration { rounds: usize },

    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),

    #[error("log-moment condition not established: {0}")]
    LogMomentRequired(String),

    #[error("characteristic function under-resolved: {0}")]
    UnderResolved(String),

    #[error("lattice mismatch between density grids")]
    LatticeMismatch,

    #[error("shift {shift:.4} leaves the lattice half-width {half_width:.4}")]
    OffLattice { shift: f64, half_width: f64 },

    #[error("no exact transition sampler: {0}")]
    NoExactSampler(String),

    #[error("Euler step {step} exceeds the stability bound {bound}")]
    StepTooLarge { step: f64, bound: f64 },

    #[error("stationarity diagnostic failed after burn-in {horizon}: max CF gap {gap:.3e}")]
    NotStationary { horizon: f64, gap: f64 },

    #[error("sample size {got} below the minimum {min}")]
    TooFewSamples { got: usize, min: usize },

    #[error("cut-off time is non-positive ({0})")]
    NonpositiveCutoffTime(f64),

    #[error("profile shift has an imaginary residual {0:.3e}")]
    ComplexShiftResidual(f64),

    #[error("no density regime available: {0}")]
    MissingDensityRegime(String),

    #[error("epsilon list must hold at least 3 values spanning 4 decades")]
    InsufficientEpsilonRange,

    #[error("coercivity violated: infimum of friction coefficients is {0}")]
    CoercivityViolation(f64),

    #[error("leading term of the superposition vanishes")]
    DegenerateLeadingTerm,
}

pub type Result<T> = std::result::Result<T, Error>;

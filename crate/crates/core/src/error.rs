use thiserror::Error;

/// Errors produced by the simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("time integration failed at t = {t}: step size {step:e} underflowed")]
    IntegrationFailure { t: f64, step: f64 },

    #[error("steady state is not unique (Liouvillian gap estimate {gap:e})")]
    DegenerateSteadyState { gap: f64 },

    #[error("steady-state residual {residual:e} exceeds tolerance {tolerance:e}")]
    SteadyStateResidual { residual: f64, tolerance: f64 },

    #[error("sparse factorization failed: {0}")]
    Factorization(String),

    #[error("eigendecomposition failed: {0}")]
    Eigendecomposition(String),

    #[error("spectral decomposition is ill-conditioned (reconstruction error {error:e})")]
    IllConditioned { error: f64 },

    #[error("steady-state photon number {0:e} vanishes; g2 is undefined")]
    ZeroPhotonNumber(f64),

    #[error("jump attempted at t = {t} on a state with Tr(a†aρ) = {photons:e}")]
    SamplingPathology { t: f64, photons: f64 },

    #[error("jump probability {probability} per step exceeds 0.05 (dt = {dt})")]
    JumpProbabilityTooLarge { probability: f64, dt: f64 },

    #[error("insufficient statistics: {0}")]
    InsufficientStatistics(String),

    #[error("quadrature error estimate {estimate:e} exceeds tolerance {tolerance:e}")]
    QuadratureTooCoarse { estimate: f64, tolerance: f64 },

    #[error("out of validity: {0}")]
    OutOfValidity(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

use thiserror::Error;

use crate::field::ComplexField;

pub type Result<T, E = LabError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("fields live on different grids")]
    GridMismatch,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("eta must be real-valued (max |Im| = {max_imag:e})")]
    NonRealProfile { max_imag: f64 },

    #[error("profile solver did not converge after {iterations} iterations (residual {residual:e})")]
    ProfileNotConverged { iterations: usize, residual: f64 },

    #[error("orbital stability violated: dm/dmu = {slope:e} <= 0")]
    OrbitalInstability { slope: f64 },

    #[error("symplectic Gram matrix is ill-conditioned (condition number {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("time step violates the phase-resolution guard: dt*max|k|^2 = {product} > pi")]
    TimeStepGuard { product: f64 },

    #[error("non-finite field at t = {t}")]
    NonFinite { t: f64, last_valid: Box<ComplexField> },

    #[error("field is outside the tube around the soliton manifold (residual {residual:e})")]
    NotInTube { residual: f64 },

    #[error("modulation fixed-point iteration diverges (contraction factor {factor:e})")]
    FixedPointDivergence { factor: f64 },

    #[error("coercivity violated: rho = {rho:e}")]
    CoercivityViolated { rho: f64 },

    #[error("mu = {mu} left the admissible interval [{lo}, {hi}] at t = {t}")]
    MuOutOfInterval { mu: f64, lo: f64, hi: f64, t: f64 },

    #[error("not enough samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("snapshot format: {0}")]
    Format(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LabError {
    /// Stable snake_case identifier for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            LabError::GridMismatch => "grid_mismatch",
            LabError::InvalidGrid(_) => "invalid_grid",
            LabError::InvalidParameter(_) => "invalid_parameter",
            LabError::NonRealProfile { .. } => "non_real_profile",
            LabError::ProfileNotConverged { .. } => "profile_not_converged",
            LabError::OrbitalInstability { .. } => "orbital_instability",
            LabError::IllConditioned { .. } => "ill_conditioned",
            LabError::TimeStepGuard { .. } => "time_step_guard",
            LabError::NonFinite { .. } => "non_finite",
            LabError::NotInTube { .. } => "not_in_tube",
            LabError::FixedPointDivergence { .. } => "fixed_point_divergence",
            LabError::CoercivityViolated { .. } => "coercivity_violated",
            LabError::MuOutOfInterval { .. } => "mu_out_of_interval",
            LabError::TooFewSamples { .. } => "too_few_samples",
            LabError::Format(_) => "format",
            LabError::Config(_) => "config",
            LabError::Io(_) => "io",
            LabError::Csv(_) => "csv",
            LabError::Json(_) => "json",
        }
    }
}

use thiserror::Error;

/// Errors produced by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("Fock index {n} outside truncated space (n_max = {n_max})")]
    FockIndexOutOfRange { n: usize, n_max: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("state is not normalized (norm = {norm})")]
    NotNormalized { norm: f64 },

    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("unsupported drive phases: {0}")]
    UnsupportedPhases(String),

    #[error("unbalanced drives: omega_b/omega_r = {ratio}, branch requires {required}")]
    UnbalancedDrives { ratio: f64, required: f64 },

    #[error("singular perturbative expression: {0}")]
    Singular(String),

    #[error("no root of {what} in [{lo}, {hi}]")]
    NoRoot { what: String, lo: f64, hi: f64 },

    #[error("integration step size underflow at t = {t} (h = {h})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("maximum number of integration steps ({0}) exceeded")]
    TooManySteps(usize),

    #[error("norm drift {drift:e} exceeds budget {budget:e}")]
    NormDrift { drift: f64, budget: f64 },

    #[error("trace drift {drift:e} exceeds budget {budget:e}")]
    TraceDrift { drift: f64, budget: f64 },

    #[error("density matrix lost positivity: min eigenvalue {min_eigenvalue:e} at t = {t}")]
    PositivityViolation { min_eigenvalue: f64, t: f64 },

    #[error("output sampling interval {dt} does not resolve frame frequency {frequency} (need dt < {limit})")]
    Aliasing { dt: f64, frequency: f64, limit: f64 },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),
}

pub type Result<T> = std::result::Result<T, Error>;

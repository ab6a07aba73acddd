use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not Hermitian (max asymmetry {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },

    #[error("state is not normalized (norm {norm:.15})")]
    NotNormalized { norm: f64 },

    #[error("operator is not a physical density matrix: {0}")]
    Unphysical(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point is off the unit sphere (residual {residual:.3e})")]
    OffSphere { residual: f64 },

    #[error("degenerate fringe fit: {0}")]
    DegenerateFit(String),

    #[error("invalid measurement data: {0}")]
    Measurement(String),
}

pub type Result<T> = std::result::Result<T, Error>;

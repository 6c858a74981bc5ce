use thiserror::Error;

/// Errors raised by the solvers, transforms and file readers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),

    #[error("radius {radius} exceeds the admissible maximum {max}")]
    RadiusTooLarge { radius: f64, max: f64 },

    #[error("degenerate rescaling: normalizer {0:e} is not positive")]
    DegenerateRescaling(f64),

    #[error("ellipticity violated: {0}")]
    Ellipticity(String),

    #[error("gradient {norm} leaves the validity ball of radius {radius}")]
    GradientOutOfRange { norm: f64, radius: f64 },

    #[error("nonlinearity does not satisfy the normalization F(0)=0, DF(0)=0, D2F(0)=I: {0}")]
    Normalization(String),

    #[error("map is not invertible: {0}")]
    NonInvertible(String),

    #[error("Newton iteration failed: {0}")]
    Newton(String),

    #[error("series tail bound {tail:e} exceeds {limit:e}; reduce the radius")]
    TailBound { tail: f64, limit: f64 },

    #[error("Jacobian degenerates on the working disk; retry with radius <= {suggested}")]
    JacobianDegenerate { suggested: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

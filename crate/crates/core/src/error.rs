use thiserror::Error;

/// Reasons a jet cannot be produced.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum JetError {
    #[error("order {requested} exceeds the maximum {max} for this source")]
    OrderTooHigh { requested: usize, max: usize },
    #[error("point ({x}, {y}) is outside the supported region")]
    OutsideRegion { x: f64, y: f64 },
    #[error("Hessian is not positive definite at the requested point")]
    Degenerate,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("shooting failed: {message}")]
    Shooting {
        message: String,
        trace: Vec<(f64, String)>,
    },
    #[error("Newton iteration did not converge after {} iterations (last residual {:.3e})", history.len().saturating_sub(1), history.last().copied().unwrap_or(f64::NAN))]
    Solver { history: Vec<f64> },
    #[error("sparse linear solve failed: {0}")]
    LinearSolve(String),
    #[error("discrete convexity lost: {0}")]
    Convexity(String),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error("geodesic ball escapes the supported region")]
    BallEscapes,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn validation(msg: impl Into<String>) -> Error {
        Error::Validation(msg.into())
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Validation(_) => "validation",
            Error::Shooting { .. } => "shooting",
            Error::Solver { .. } => "solver",
            Error::LinearSolve(_) => "solver",
            Error::Convexity(_) => "convexity",
            Error::Jet(_) => "jet",
            Error::BallEscapes => "ball_escapes",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

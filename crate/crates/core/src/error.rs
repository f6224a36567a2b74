use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid radius {0}: must lie in (0, 1]")]
    InvalidRadius(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),
    #[error("estimate infeasible: {0}")]
    EstimateInfeasible(String),
    #[error("requested scale exceeds configured limits: {0}")]
    ScaleExceeded(String),
    #[error("not orthogonal: {0}")]
    NotOrthogonal(String),
    #[error("empty data")]
    EmptyData,
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("rejection envelope too loose: acceptance rate {0:.3e}")]
    EnvelopeTooLoose(f64),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("draw {index}: {source}")]
    AtDraw {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True for errors caused by bad user input rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::InvalidArgument(_)
                | Error::InvalidDimension(_)
                | Error::InvalidRadius(_)
                | Error::DimensionMismatch(_)
                | Error::ScaleExceeded(_)
                | Error::Parse(_)
                | Error::EmptyData
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

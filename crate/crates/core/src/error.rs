use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A magnetic quantum number outside the range allowed for the operation.
    #[error("m = {m} is outside |m| <= {max}")]
    ZeemanIndex { m: i32, max: i32 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// Spectrum lookup outside the synthesized or loaded grid.
    #[error("offset {offset_hz} Hz is outside the spectrum grid [{min_hz}, {max_hz}] Hz")]
    OutOfRange {
        offset_hz: f64,
        min_hz: f64,
        max_hz: f64,
    },

    #[error("grid too coarse: {0}")]
    UnderResolved(String),

    #[error("perturbative regime exceeded: transferred population {population:.4} > {limit}")]
    NonPerturbative { population: f64, limit: f64 },

    #[error("ill-posed fit: {0}")]
    IllPosed(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures caused by bad configuration or input files rather than numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. }
                | Error::ZeemanIndex { .. }
                | Error::Parse(_)
                | Error::Io(_)
                | Error::Csv(_)
                | Error::Json(_)
        )
    }
}

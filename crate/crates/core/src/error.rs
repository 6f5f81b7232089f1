use thiserror::Error;

/// Failures raised by the numerical pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid too narrow: boundary density {boundary:.3e} exceeds {limit:.1e} of the peak {peak:.3e}")]
    GridTooNarrow {
        boundary: f64,
        peak: f64,
        limit: f64,
    },

    #[error("mass leak at step {step}: pre-normalization mass {mass:.9} differs from {expected:.9}")]
    MassLeak {
        step: usize,
        mass: f64,
        expected: f64,
    },

    #[error("exponential work average is not positive ({value:e})")]
    NonPositiveAverage { value: f64 },

    #[error("density {density:.3e} at x = {x} is below the floor {floor:.3e}")]
    DensityFloor { x: f64, density: f64, floor: f64 },

    #[error("enumeration cap exceeded: {0}")]
    EnumerationCap(String),

    #[error("unsupported for this protocol: {0}")]
    Unsupported(String),
}

impl Error {
    /// Short machine-parsable tag for the failure.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::GridTooNarrow { .. } => "grid-too-narrow",
            Error::MassLeak { .. } => "mass-leak",
            Error::NonPositiveAverage { .. } => "non-positive-average",
            Error::DensityFloor { .. } => "density-floor",
            Error::EnumerationCap(_) => "enumeration-cap",
            Error::Unsupported(_) => "unsupported",
        }
    }

    /// True for failures of the numerics themselves, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::GridTooNarrow { .. }
                | Error::MassLeak { .. }
                | Error::NonPositiveAverage { .. }
                | Error::DensityFloor { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

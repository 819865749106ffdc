use thiserror::Error;

/// Errors produced by the library.
///
/// Input errors ([`Error::DimensionMismatch`], [`Error::SizeMismatch`],
/// [`Error::InvalidParameter`], [`Error::NonFinite`]) indicate malformed
/// arguments. Degenerate errors indicate that the data admits no test:
/// a zero studentizer means the statistic carries no information about
/// the null (typically the two response samples are identical).
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("size mismatch for {what}: {left} vs {right}")]
    SizeMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// The null-variance estimate is exactly zero; the z-score is undefined.
    /// Carries the point estimate computed before the studentizer collapsed.
    #[error("degenerate variance (statistic = {statistic}): responses carry no paired discrepancy")]
    DegenerateVariance { statistic: f64 },

    #[error("conditional sampler failed at unit {unit}: {message}")]
    Sampler { unit: usize, message: String },
}

impl Error {
    /// True for errors that signal degenerate statistics rather than bad input.
    pub fn is_degenerate(&self) -> bool {
        matches!(
            self,
            Error::DegenerateVariance { .. } | Error::DegenerateData(_)
        )
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors raised by the echo retrieval library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("frequency grid reaches {max_frequency} Hz, above Nyquist ({nyquist} Hz)")]
    AboveNyquist { max_frequency: f64, nyquist: f64 },

    #[error("spectrum nearly vanishes at {frequency} Hz (|s| = {magnitude:e})")]
    VanishingSpectrum { frequency: f64, magnitude: f64 },

    #[error("channel {0} has no energy on the analysis grid")]
    SilentChannel(usize),

    #[error("{echoes} echoes need at least {required} frequencies, got {available}")]
    TooFewFrequencies {
        echoes: usize,
        required: usize,
        available: usize,
    },

    #[error("polynomial has no roots (all-zero or constant after trimming)")]
    DegeneratePolynomial,

    #[error("roots are not distinct (minimum separation {0:e})")]
    RepeatedRoots(f64),

    #[error("zero root cannot be mapped to a delay")]
    ZeroRoot,

    #[error("reference echo has zero weight")]
    ZeroReferenceWeight,

    #[error("cardinality mismatch: {0}")]
    CardinalityMismatch(String),

    #[error("all {0} restarts ended with a non-finite cost")]
    Diverged(usize),

    #[error("could not generate a source meeting the spectral floor after {0} attempts")]
    SpectralFloor(usize),

    #[error("wav: {0}")]
    Wav(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// True for failures of the numerical pipeline itself, as opposed to bad
    /// arguments or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::VanishingSpectrum { .. }
                | Error::SilentChannel(_)
                | Error::DegeneratePolynomial
                | Error::RepeatedRoots(_)
                | Error::ZeroRoot
                | Error::ZeroReferenceWeight
                | Error::Diverged(_)
                | Error::SpectralFloor(_)
        )
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

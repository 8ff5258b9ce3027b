use thiserror::Error;

/// Errors produced anywhere in the ranging pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not Hermitian (max asymmetry {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:.3e})")]
    NoConvergence { sweeps: usize, off_norm: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("overlapping gap blocks at tone {0}")]
    OverlappingGaps(usize),

    #[error("no available tones")]
    NoData,

    #[error("band too short for subspace decomposition: {0}")]
    DegenerateBand(String),

    #[error("no pseudospectrum peak reaches the prominence threshold")]
    NoPeak,

    #[error("gap of width {width} at tone {start} cannot be recovered: {reason}")]
    Unrecoverable {
        start: usize,
        width: usize,
        reason: String,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

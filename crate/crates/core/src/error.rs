use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("ambiguous or non-ACGT base {0:?}")]
    AmbiguousBase(char),
    #[error("sequence length {found} does not match k={expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("prefix length {requested} exceeds k-mer length {k}")]
    PrefixTooLong { requested: usize, k: usize },
    #[error("k={0} is outside the supported range 1..=60")]
    InvalidK(usize),
    #[error("taxid {0} is reserved")]
    InvalidTaxId(u32),

    #[error("calibration sample is empty")]
    EmptySample,
    #[error("invalid frequency bounds: min={min}, max={max}")]
    BadRange { min: u32, max: u32 },
    #[error("host budget of {budget} bytes cannot hold a {needed}-byte bucket plan")]
    BudgetTooSmall { budget: u64, needed: u64 },

    #[error("no input sequences")]
    EmptyInput,
    #[error("inconsistent sketch levels: {0}")]
    InconsistentLevels(String),
    #[error("taxid list of {0} entries exceeds the 65535 limit")]
    TaxIdOverflow(usize),

    #[error("input stream is not strictly increasing at position {position}")]
    UnsortedInput { position: usize },
    #[error("containment threshold {0} is outside (0, 1]")]
    BadThreshold(f64),
    #[error("k-mer length mismatch: reads use k={reads}, database uses k={db}")]
    KMismatch { reads: usize, db: usize },

    #[error("malformed file: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    RawIo(#[from] std::io::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

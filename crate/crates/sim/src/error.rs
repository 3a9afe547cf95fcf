use thiserror::Error;

pub type Result<T, E = SimError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("database of {size} bytes exceeds the device capacity of {capacity} bytes")]
    CapacityExceeded { size: u64, capacity: u64 },
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error("invalid SSD configuration: {0}")]
    InvalidConfig(String),
    #[error("bad config file: {0}")]
    ConfigSyntax(#[from] toml::de::Error),
    #[error(transparent)]
    Plan(#[from] kmerstream::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

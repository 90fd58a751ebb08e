use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// Argument outside the domain of a function.
    #[error("domain error: {0}")]
    Domain(String),
    /// A runtime precondition was violated (e.g. a chain left the support).
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("dataset `{name}` is malformed: {msg}")]
    Dataset { name: String, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

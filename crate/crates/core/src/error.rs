//! Shared error type for all library modules.

/// Errors surfaced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed input: bad dimensions, out-of-range parameters, non-finite data.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An argument lies outside the domain of the requested function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A pair of symmetric matrices does not commute within tolerance.
    #[error("matrices do not commute: {0}")]
    NotCommuting(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

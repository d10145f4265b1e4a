use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Inconsistent or invalid run/objective parameters.
    #[error("configuration error: {0}")]
    Config(String),
    /// The object cannot perform the requested operation (e.g. analytic
    /// moments on a non-analytic objective).
    #[error("capability error: {0}")]
    Capability(String),
    /// A bound or formula was evaluated outside the region where it holds.
    #[error("domain error: {0}")]
    Domain(String),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! config_err {
    ($($arg:tt)*) => { $crate::error::Error::Config(alloc::format!($($arg)*)) };
}
macro_rules! domain_err {
    ($($arg:tt)*) => { $crate::error::Error::Domain(alloc::format!($($arg)*)) };
}
macro_rules! capability_err {
    ($($arg:tt)*) => { $crate::error::Error::Capability(alloc::format!($($arg)*)) };
}
pub(crate) use {capability_err, config_err, domain_err};

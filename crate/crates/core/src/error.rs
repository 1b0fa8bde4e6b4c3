use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what} outside its domain: {detail}")]
    Domain { what: &'static str, detail: String },
    #[error("{what} failed to converge: {detail}")]
    NoConvergence { what: &'static str, detail: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("step cap of {0} reached before absorption")]
    StepCap(u64),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(what: &'static str, detail: impl Into<String>) -> Error {
    Error::Domain {
        what,
        detail: detail.into(),
    }
}

pub(crate) fn no_convergence(what: &'static str, detail: impl Into<String>) -> Error {
    Error::NoConvergence {
        what,
        detail: detail.into(),
    }
}

impl Error {
    /// True for errors that come from the numerics rather than from bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NoConvergence { .. })
    }
}

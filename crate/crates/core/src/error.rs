use thiserror::Error;

use crate::model::CodeFamily;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    /// A family/parameter combination that the code family cannot realise.
    #[error("{family} code [{m},{h},{r}] violates constraint: {constraint}")]
    CodeConstraint {
        family: CodeFamily,
        m: u32,
        h: u32,
        r: u32,
        constraint: String,
    },

    #[error("{op} does not apply to {family} codes; use {instead}")]
    WrongFamily {
        op: &'static str,
        family: CodeFamily,
        instead: &'static str,
    },

    #[error("stationary recursion did not converge after {iterations} steps (residual {residual:e})")]
    NoConvergence { iterations: u64, residual: f64 },

    #[error("simulation config rejected: {0}")]
    SimConfig(String),

    #[error("search space is empty: {0}")]
    EmptySearch(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            name,
            reason: reason.into(),
        }
    }
}

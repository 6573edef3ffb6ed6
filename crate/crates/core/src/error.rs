use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed game or input file; `field` names the offending field.
    #[error("invalid input in `{field}`: {message}")]
    InvalidInput { field: String, message: String },

    #[error("strategy index {index} out of range for player {player} ({count} strategies)")]
    StrategyOutOfRange {
        player: usize,
        index: usize,
        count: usize,
    },

    /// A transient node has no path to any absorbing node.
    #[error("node {node} cannot reach an absorbing node")]
    NoAbsorption { node: usize },

    #[error("component is not strongly connected: {0}")]
    NotIrreducible(String),

    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    #[error("epsilon {eps} too large: node {node} has negative residual mass")]
    EpsilonTooLarge { eps: f64, node: usize },

    /// An internal contract was violated. These indicate a bug, never bad input.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidInput {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for failures caused by numerics rather than malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoAbsorption { .. }
                | Error::NotIrreducible(_)
                | Error::NonConvergence(_)
                | Error::EpsilonTooLarge { .. }
                | Error::Contract(_)
        )
    }
}

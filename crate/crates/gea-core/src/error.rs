//! Crate-wide error type.

use thiserror::Error;

use crate::archive::AgentId;

pub type Result<T, E = GeaError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GeaError {
    #[error("duplicate agent id {0}")]
    DuplicateId(AgentId),

    #[error("non-sequential agent id {id}, expected {expected}")]
    NonSequentialId { id: AgentId, expected: u64 },

    #[error("agent {0} not found")]
    AgentNotFound(AgentId),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("{what} out of range: {value}")]
    OutOfRange { what: &'static str, value: f64 },

    #[error("no selectable agents in archive")]
    EmptyArchive,

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unsupported format version {found}, expected {expected}")]
    FormatVersion { found: u32, expected: u32 },

    #[error("infeasible world parameters: {0}")]
    InfeasibleWorld(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown bug {0}")]
    UnknownBug(u32),

    #[error("duplicate trace contributor {0}")]
    DuplicateContributor(AgentId),

    #[error("invalid directive: {0}")]
    InvalidDirective(String),

    #[error("remote operator error ({kind}): {detail}")]
    RemoteOperator {
        kind: RemoteErrorKind,
        detail: String,
    },

    #[error("replay divergence at iteration {iteration}, field {field}")]
    ReplayDivergence { iteration: u32, field: String },

    #[error("mismatched evolved-agent budgets: {left} vs {right}")]
    BudgetMismatch { left: usize, right: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RemoteErrorKind {
    Timeout,
    Transport,
    Status,
    Schema,
}

impl std::fmt::Display for RemoteErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RemoteErrorKind::Timeout => "timeout",
            RemoteErrorKind::Transport => "transport",
            RemoteErrorKind::Status => "status",
            RemoteErrorKind::Schema => "schema",
        };
        f.write_str(s)
    }
}

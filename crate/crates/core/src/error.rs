use std::time::Duration;

use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("node index {index} out of range (instance has {customers} customers)")]
    Index { index: usize, customers: usize },

    #[error("invalid instance: {0}")]
    Instance(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("shape mismatch for `{name}`: declared {declared:?}, expected {expected:?}, found {found} values")]
    Shape {
        name: String,
        declared: Vec<usize>,
        expected: Vec<usize>,
        found: usize,
    },

    #[error("model error: {0}")]
    Model(String),

    #[error("sub-graph is stale: {0}")]
    Stale(String),

    #[error("sub-graph coverage mismatch: {0}")]
    Coverage(String),

    #[error("recreate operator `{operator}` failed: {kind}")]
    Operator {
        operator: String,
        kind: OperatorFailure,
    },

    #[error("metric error: {0}")]
    Metric(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum OperatorFailure {
    #[error("no response within {0:?}")]
    Timeout(Duration),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("infeasible response: {0}")]
    Infeasible(String),
    #[error("worker unavailable: {0}")]
    Unavailable(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

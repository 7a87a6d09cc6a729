use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A single configuration problem, addressed by its dotted field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("point ({x}, {y}) lies outside the grid region")]
    OutOfRegion { x: f64, y: f64 },

    #[error("unknown cell id {0}")]
    UnknownCell(usize),

    #[error("unknown node id {0}")]
    UnknownNode(usize),

    #[error("no route from node {from} to node {to}")]
    NoRoute { from: usize, to: usize },

    #[error("instance too large for exhaustive search: {subsets} subsets (limit {limit})")]
    TooLarge { subsets: u128, limit: u128 },

    #[error("solution does not fit the instance: {0}")]
    Validation(String),

    #[error("{path}:{row}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("configuration has {} problem(s): {}", .0.len(), join_issues(.0))]
    Config(Vec<ConfigIssue>),

    #[error("simulation invariant broken: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn join_issues(issues: &[ConfigIssue]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

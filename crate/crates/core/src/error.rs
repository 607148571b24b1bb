use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid tree height, variant, subtree count or similar parameter.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("node {index} is a leaf and has no children")]
    NoChild { index: usize },

    /// A read addressed a node outside the storage element it was issued to.
    /// Always a simulator bug.
    #[error("addressing error: node {index} is not stored in {target}")]
    Addressing { index: usize, target: String },

    /// More reads than ports reached a partition in one cycle inside the
    /// engine. Always a simulator bug.
    #[error("port conflict on partition {partition} in cycle {cycle}")]
    PortConflict { partition: usize, cycle: u64 },

    /// Broken simulator invariant.
    #[error("internal simulator error: {0}")]
    Internal(String),

    #[error("livelock: {pending} keys unresolved after {cycles} cycles")]
    Livelock { cycles: u64, pending: usize },

    #[error("runs are not comparable: {0}")]
    Mismatch(String),

    #[error("malformed key-set file: {0}")]
    KeyFile(String),

    #[error("malformed report: {0}")]
    Report(String),

    #[error("in cell {cell}")]
    Cell {
        cell: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

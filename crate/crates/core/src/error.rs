use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {source}")]
    AtLine {
        path: PathBuf,
        line: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("duplicate entity `{0}`")]
    DuplicateEntity(String),
    #[error("duplicate triple <{0}, {1}, {2}>")]
    DuplicateTriple(String, String, String),
    #[error("invalid fact: {0}")]
    InvalidFact(String),
    #[error("fact not present in graph: {0}")]
    FactNotInGraph(String),
    #[error("graph has no triples")]
    EmptyGraph,
    #[error("relationship set is empty")]
    EmptyRelationshipSet,
    #[error("no eligible query facts")]
    NoEligibleQueries,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("batch mixes query facts")]
    MixedQueryBatch,
    #[error("training data contains no positive labels")]
    NoPositives,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least two paired observations")]
    TooFewObservations,
    #[error("run is empty")]
    EmptyRun,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn at_line(path: impl Into<PathBuf>, line: usize, source: Error) -> Self {
        Error::AtLine { path: path.into(), line, source: Box::new(source) }
    }

    /// Innermost error, skipping location wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtLine { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code: 2 for bad input data, 3 for broken internal invariants.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Invariant(_) => 3,
            _ => 2,
        }
    }
}

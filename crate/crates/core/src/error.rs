use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: invalid manifest: {message}")]
    Manifest { path: PathBuf, message: String },

    #[error("no feature files")]
    NoFeatureFiles,

    #[error("{path}:{line}: {kind}")]
    Record {
        path: PathBuf,
        line: usize,
        kind: RecordError,
    },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("cannot split {queries} queries into {k} folds")]
    TooManyFolds { k: usize, queries: usize },

    #[error("query {query_id}: need {needed} unlabeled corpus candidates, only {available} available")]
    InsufficientCorpus {
        query_id: String,
        needed: usize,
        available: usize,
    },

    #[error("kendall tau needs at least two items, got {0}")]
    TooFewItems(usize),

    #[error("rankings are not permutations of the same item set")]
    MismatchedItems,

    #[error("cutoff k must be at least 1")]
    InvalidCutoff,

    #[error("AUC is undefined without both positive and negative examples")]
    UndefinedAuc,

    #[error("cannot average an empty list")]
    EmptyInput,

    #[error("metric reports use different configurations")]
    InconsistentReports,

    #[error("query {0} appears in more than one report")]
    DuplicateQuery(String),

    #[error("no training pairs")]
    EmptyPairSet,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },

    #[error("training data contains a single class")]
    SingleClass,

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Error, PartialEq)]
pub enum RecordError {
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error("feature dimension {actual} does not match dataset dimension {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("duplicate record for query {query_id}, candidate {cand_id}")]
    Duplicate { query_id: String, cand_id: String },
    #[error("relevance {relevance} outside grade range 0..={grade_max}")]
    RelevanceOutOfRange { relevance: i64, grade_max: u32 },
    #[error("non-finite feature value")]
    NonFinite,
}

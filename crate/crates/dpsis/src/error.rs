use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by dataset handling, selectors, and the bench harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot open {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: row {row}, column {col}: cannot parse {cell:?} as a number")]
    BadCell {
        path: PathBuf,
        row: usize,
        col: usize,
        cell: String,
    },
    #[error("{path}: row {row} has {got} fields, expected {expected}")]
    RaggedRow {
        path: PathBuf,
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("{path}: target column {target:?} not found")]
    MissingTarget { path: PathBuf, target: String },
    #[error("{path}: no feature columns remain after removing the target")]
    NoFeatures { path: PathBuf },
    #[error("{path}: file contains no data rows")]
    EmptyFile { path: PathBuf },
    #[error("dataset is already preprocessed")]
    AlreadyPreprocessed,
    #[error("dataset must be preprocessed first (infinity-norm bounds are required)")]
    NotPreprocessed,
    #[error("k = {k} out of range for d = {d}")]
    BadK { k: usize, d: usize },
    #[error("invalid mechanism parameters: {0}")]
    BadParams(String),
    #[error("subset has {got} indices, expected {expected}")]
    BadSubsetSize { got: usize, expected: usize },
    #[error("domain too large for brute force: C({d}, {k}) exceeds {limit}")]
    DomainTooLarge { d: usize, k: usize, limit: u64 },
    #[error("block of {rows} rows is too small; use more data or fewer blocks")]
    BlockTooSmall { rows: usize },
    #[error("reference ranking of length {len} is too short for k = {k}")]
    ReferenceTooShort { len: usize, k: usize },
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("no plottable rows (every row has an empty epsilon)")]
    NothingToPlot,
}

pub type Result<T> = std::result::Result<T, Error>;

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("image {width}x{height} too small for {levels} pyramid levels")]
    ImageTooSmall {
        width: usize,
        height: usize,
        levels: usize,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("empty node: class histogram has zero mass")]
    EmptyNode,
    #[error("degenerate split: one side is empty")]
    DegenerateSplit,
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid topic count K={k} for vocabulary of size {vocab}")]
    InvalidK { k: usize, vocab: usize },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("document has no words")]
    EmptyDocument,
    #[error("class `{0}` has no training documents")]
    EmptyClass(String),
    #[error("no seen sibling pair available for unseen class `{0}`")]
    NoPairAvailable(String),
    #[error("classifier incomplete: class `{0}` has no topic set")]
    IncompleteClassifier(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("fine class `{name}` at line {line} has no coarse parent")]
    OrphanFineClass { name: String, line: usize },
    #[error("class `{name}` declared twice (line {line})")]
    DuplicateClass { name: String, line: usize },
    #[error("corrupt record: {0}")]
    CorruptRecord(String),
    #[error("class directory `{0}` is not in the taxonomy")]
    MissingClassDir(String),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(PathBuf),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("bad file format: {0}")]
    Format(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("image decode error: {0}")]
    Image(#[from] image::ImageError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn in_stage(self, stage: &'static str) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// Process exit code: 2 config, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::InvalidConfig(_) | Error::InvalidK { .. } | Error::InvalidSpec(_) => 2,
            Error::Numeric(_) => 4,
            _ => 3,
        }
    }
}

//! Error types for every module. Display strings carry the module prefix so
//! that callers (the CLI in particular) can surface them unchanged.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus: empty input: {0}")]
    EmptyInput(String),
    #[error("corpus: {path}: line {line}: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },
    #[error("corpus: {path}: missing required column `{column}`")]
    MissingColumn { path: String, column: String },
    #[error("corpus: duplicate id `{id}` on lines {first} and {second}")]
    DuplicateId {
        id: String,
        first: usize,
        second: usize,
    },
    #[error("corpus: invalid synthetic configuration: {0}")]
    Config(String),
    #[error("corpus: io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum TermsError {
    #[error("terms: invalid catalog: {0}")]
    Config(String),
    #[error("terms: term `{term_id}`: pattern `{pattern}` does not compile: {message}")]
    Pattern {
        term_id: String,
        pattern: String,
        message: String,
    },
    #[error("terms: labels are misaligned: {sentences} sentences but {labels} labels")]
    Misaligned { sentences: usize, labels: usize },
    #[error("terms: io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("annotate: invalid configuration: {0}")]
    Config(String),
    #[error("annotate: uneven rater counts; subjects {subjects:?} have {found:?} ratings, expected {expected}")]
    UnevenRaters {
        subjects: Vec<String>,
        found: Vec<usize>,
        expected: usize,
    },
    #[error("annotate: missing annotation records: {0}")]
    MissingRecords(String),
    #[error("annotate: duplicate record for sentence `{sentence_id}` by `{annotator_id}`")]
    DuplicateRecord {
        sentence_id: String,
        annotator_id: String,
    },
    #[error("annotate: record for sentence `{0}` which is not part of the plan")]
    Unplanned(String),
    #[error("annotate: annotator `{0}` is not in the roster")]
    UnknownAnnotator(String),
    #[error("annotate: invalid label `{0}`, expected one of yes, no, ?")]
    InvalidLabel(String),
}

#[derive(Debug, Error)]
pub enum FeaturesError {
    #[error("features: empty training set")]
    EmptyTrainingSet,
    #[error("features: {path}: line {line}: {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },
    #[error("features: artifact mismatch: {0}")]
    Artifact(String),
    #[error("features: no contextual vector for sentence `{0}`")]
    Miss(String),
    #[error("features: io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("classify: training set is empty or misaligned ({rows} rows, {labels} labels)")]
    Shape { rows: usize, labels: usize },
    #[error("classify: training labels contain a single class")]
    SingleClass,
    #[error("classify: non-finite feature value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },
    #[error("classify: feature dimension mismatch: model expects {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("classify: feature space mismatch: model was trained on `{expected}`, got `{found}`")]
    FeatureSpaceMismatch { expected: String, found: String },
    #[error("classify: invalid hyperparameter: {0}")]
    Hyperparameter(String),
    #[error("classify: unsupported model format version {0}")]
    Version(u32),
    #[error("classify: model serialization failed: {0}")]
    Serde(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum EvaluateError {
    #[error("evaluate: metric undefined: {0}")]
    UndefinedMetric(String),
    #[error("evaluate: scores and labels differ in length ({scores} vs {labels})")]
    Length { scores: usize, labels: usize },
    #[error("evaluate: empty stratum {0}")]
    EmptyStratum(String),
    #[error("evaluate: invalid fold configuration: {0}")]
    Folds(String),
    #[error("evaluate: invalid configuration: {0}")]
    Config(String),
    #[error("evaluate: no grid point could be evaluated")]
    NoValidGridPoint,
    #[error(transparent)]
    Features(#[from] FeaturesError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store: io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("store: {path}: line {line}: {message}")]
    Corrupt {
        path: String,
        line: usize,
        message: String,
    },
}

use std::path::PathBuf;

use thiserror::Error;

use crate::dataset::SampleId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse error family, used for process exit codes and FFI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad arguments, configuration or violated preconditions.
    Usage,
    /// Malformed or inconsistent data files.
    Data,
    /// Non-finite values or numerically impossible requests.
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: malformed header: {reason}")]
    MalformedHeader { line: usize, reason: String },
    #[error("line {line}: bad category code `{code}` (expected 0, 1 or 2)")]
    BadCategoryCode { line: usize, code: String },
    #[error("line {line}: class {class} out of range for category {category}")]
    ClassOutOfRange { line: usize, class: i64, category: u8 },
    #[error("line {line}: expected {expected} values, found {found}")]
    DimensionMismatchAt {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: malformed value `{token}`")]
    MalformedValue { line: usize, token: String },
    #[error("line {line}: duplicate sample id {id}")]
    DuplicateId { line: usize, id: SampleId },
    #[error("header declares {declared} samples but file holds {found}")]
    SampleCountMismatch { declared: usize, found: usize },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("sample {0} is not in the unlabeled pool")]
    AnnotatedNotInUnlabeled(SampleId),
    #[error("sample {0} appears more than once in one annotation batch")]
    DuplicateAnnotation(SampleId),
    #[error("sample {0} was already annotated")]
    AlreadyAnnotated(SampleId),
    #[error("unknown sample id {0}")]
    UnknownId(SampleId),

    #[error("projection vector {index} has norm {norm}, expected unit length")]
    NonUnitInput { index: usize, norm: f64 },
    #[error("no label occurs twice in the batch; supervised contrastive loss undefined")]
    NoPositivePairs,
    #[error("training loss became non-finite at step {step}")]
    DivergedLoss { step: usize },
    #[error("need at least one example of two distinct labels, found {distinct} distinct")]
    InsufficientLabels { distinct: usize },
    #[error("label {label} out of range 1..={max}")]
    LabelOutOfRange { label: usize, max: usize },

    #[error("need at least {k} points to fit {k} clusters, got {n}")]
    TooFewPoints { n: usize, k: usize },
    #[error("cluster index {index} out of range (model has {count} clusters)")]
    BadClusterIndex { index: usize, count: usize },

    #[error("not a probability vector: {0}")]
    NotAProbabilityVector(String),
    #[error("no labeled data available")]
    NoLabeledData,
    #[error("no eligible cluster has unlabeled members")]
    NoEligibleClusters,
    #[error("unlabeled pool exhausted after {found} of {wanted} iD samples")]
    PoolExhausted { found: usize, wanted: usize },

    #[error("could not place class means {separation} apart after {attempts} attempts")]
    PlacementFailure { separation: f64, attempts: usize },
    #[error("ambiguous generation kept {kept} of {wanted} after {attempts} attempts")]
    BudgetExhausted {
        kept: usize,
        wanted: usize,
        attempts: usize,
    },

    #[error("accuracy must be positive to compute cost per accuracy")]
    ZeroAccuracy,
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("test sample {0} is not in-distribution")]
    NonIdTestSample(SampleId),

    #[error("invalid value for `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },
    #[error("malformed checkpoint: {0}")]
    MalformedCheckpoint(String),
    #[error("malformed summary {path}: {reason}")]
    MalformedSummary { path: PathBuf, reason: String },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            Io { .. }
            | MalformedHeader { .. }
            | BadCategoryCode { .. }
            | ClassOutOfRange { .. }
            | DimensionMismatchAt { .. }
            | MalformedValue { .. }
            | DuplicateId { .. }
            | SampleCountMismatch { .. }
            | MalformedCheckpoint(_)
            | PlacementFailure { .. }
            | BudgetExhausted { .. }
            | PoolExhausted { .. }
            | EmptyTestSet
            | NonIdTestSample(_) => ErrorKind::Data,
            NonUnitInput { .. } | DivergedLoss { .. } | ZeroAccuracy => ErrorKind::Numeric,
            _ => ErrorKind::Usage,
        }
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

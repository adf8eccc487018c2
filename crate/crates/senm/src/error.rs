use std::path::PathBuf;

/// Errors produced by the library. Variants are grouped by the stage that
/// raises them; the CLI maps them onto validation vs. data exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line {0}: malformed record")]
    MalformedRecord(usize),
    #[error("timeline contains no lines")]
    EmptyTimeline,
    #[error("ego {0} missing from the external labels file")]
    ClassifierUnavailable(String),
    #[error("frequencies are degenerate (fewer than two points or zero range)")]
    DegenerateInput,
    #[error("ego {0} has no active alters")]
    EmptyNetwork(String),
    #[error("signed relationship references alter {alter_id} unknown to ego {ego_id}'s circles")]
    AlterMismatch { ego_id: String, alter_id: String },
    #[error("no signed relationships in scope")]
    NoSignedRelationships,
    #[error("need at least {needed} egos, found {found}")]
    InsufficientEgos { needed: usize, found: usize },
    #[error("no egos with exactly {0} circles")]
    NoMatchingEgos(usize),
    #[error("zero variance in correlation input")]
    DegenerateVariance,
    #[error("correlation needs at least 3 paired values, found {0}")]
    TooFewPoints(usize),
    #[error("infeasible scenario: {0}")]
    InfeasibleConfig(String),
    #[error("unknown strategy {name:?}; registered: {known:?}")]
    UnknownStrategy { name: String, known: Vec<String> },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    BadInputFile { path: PathBuf, message: String },
    #[error("stage file {path} has version {found}, expected {expected}")]
    StageVersionMismatch {
        path: PathBuf,
        found: u32,
        expected: u32,
    },
    #[error("missing stage output {path}; run the {stage} stage first")]
    MissingStage { stage: &'static str, path: PathBuf },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error stems from how the run was configured rather than
    /// from the data itself.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::UnknownStrategy { .. }
                | Error::InvalidConfig(_)
                | Error::InfeasibleConfig(_)
                | Error::MissingStage { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

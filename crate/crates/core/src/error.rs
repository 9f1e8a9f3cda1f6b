use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing feature file for video {video_id}: {path}")]
    MissingFeatures { video_id: String, path: PathBuf },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid record {video_id}: {message}")]
    Validation { video_id: String, message: String },

    #[error("bad feature file {path}: {message}")]
    FeatureFormat { path: PathBuf, message: String },

    #[error("insufficient context at t={t}")]
    InsufficientContext { t: f64 },

    #[error("unlabeled target at t={t}")]
    UnlabeledTarget { t: f64 },

    #[error("record {0} has no view track")]
    NoViewTrack(String),

    #[error("empty narration interval [{begin_s}, {end_s}]")]
    EmptyNarrationInterval { begin_s: f64, end_s: f64 },

    #[error("empty feature matrix")]
    EmptyFeatures,

    #[error("shot below clip length: {duration_s}s < {clip_len_s}s")]
    ShotBelowClipLength { duration_s: f64, clip_len_s: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("past narration text is empty")]
    EmptyNarrationText,

    #[error("sequence length {len} exceeds maximum {max}")]
    SequenceTooLong { len: usize, max: usize },

    #[error("non-finite activation in {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Divergence { epoch: usize, step: usize, loss: f64 },

    #[error("degenerate subset: {0}")]
    DegenerateSubset(String),

    #[error("no positive items")]
    NoPositives,

    #[error("cohen's kappa undefined: expected agreement is 1")]
    KappaUndefined,

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("too few bootstrap resamples: {0} < 100")]
    TooFewResamples(usize),

    #[error("retrieval index is empty")]
    EmptyIndex,

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("incompatible model configuration: {0}")]
    ConfigMismatch(String),

    #[error("empty label set")]
    EmptyLabelSet,

    #[error("invalid grammar: {0}")]
    InvalidGrammar(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable tag for error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::MissingFeatures { .. } => "missing_features",
            Error::Parse { .. } => "parse",
            Error::Validation { .. } => "validation",
            Error::FeatureFormat { .. } => "feature_format",
            Error::InsufficientContext { .. } => "insufficient_context",
            Error::UnlabeledTarget { .. } => "unlabeled_target",
            Error::NoViewTrack(_) => "no_view_track",
            Error::EmptyNarrationInterval { .. } => "empty_narration_interval",
            Error::EmptyFeatures => "empty_features",
            Error::ShotBelowClipLength { .. } => "shot_below_clip_length",
            Error::DimMismatch { .. } => "dim_mismatch",
            Error::EmptyNarrationText => "empty_narration_text",
            Error::SequenceTooLong { .. } => "sequence_too_long",
            Error::NonFinite(_) => "non_finite",
            Error::Divergence { .. } => "divergence",
            Error::DegenerateSubset(_) => "degenerate_subset",
            Error::NoPositives => "no_positives",
            Error::KappaUndefined => "kappa_undefined",
            Error::LengthMismatch(..) => "length_mismatch",
            Error::TooFewResamples(_) => "too_few_resamples",
            Error::EmptyIndex => "empty_index",
            Error::MissingInput(_) => "missing_input",
            Error::ConfigMismatch(_) => "config_mismatch",
            Error::EmptyLabelSet => "empty_label_set",
            Error::InvalidGrammar(_) => "invalid_grammar",
            Error::Config(_) => "config",
            Error::Json(_) => "json",
        }
    }
}

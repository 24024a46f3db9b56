use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("expected {expected} landmarks, found {found}")]
    LandmarkCount { expected: usize, found: usize },

    #[error("non-finite coordinate at landmark {index}")]
    NonFiniteCoordinate { index: usize },

    #[error("degenerate normalization factor ({what}) for {context}")]
    DegenerateNormalization { what: &'static str, context: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate image_id `{0}`")]
    DuplicateId(String),

    #[error("no images have both predictions and ground truth")]
    ZeroCoverage,

    #[error("singular transform (determinant {0:e})")]
    SingularTransform(f64),

    #[error("affinity search did not bracket perplexity {perplexity} for row {row}")]
    PerplexitySearch { row: usize, perplexity: f64 },

    #[error("non-finite value in t-SNE at iteration {iteration}: {detail}")]
    NonFinite { iteration: usize, detail: String },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn in_file(self, path: impl Into<PathBuf>) -> Self {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }

    /// Short stable identifier for the error variant, used in CLI diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::LandmarkCount { .. } => "landmark_count",
            Error::NonFiniteCoordinate { .. } => "non_finite_coordinate",
            Error::DegenerateNormalization { .. } => "degenerate_normalization",
            Error::EmptyInput(_) => "empty_input",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Parse { .. } => "parse",
            Error::DuplicateId(_) => "duplicate_id",
            Error::ZeroCoverage => "zero_coverage",
            Error::SingularTransform(_) => "singular_transform",
            Error::PerplexitySearch { .. } => "perplexity_search",
            Error::NonFinite { .. } => "non_finite",
            Error::File { source, .. } => source.kind(),
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

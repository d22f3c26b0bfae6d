use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),
    #[error("alpha must lie in [0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("label `{label}` is not in label space `{space}`")]
    OutOfVocabulary { label: String, space: String },
    #[error("no emotion label found in response: {0:?}")]
    UnparseableResponse(String),
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("dataset layout error under {root}: {reason}")]
    Layout { root: PathBuf, reason: String },
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("split too small: {0}")]
    SplitTooSmall(String),
    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("schema error in {path}: {reason}")]
    Schema { path: PathBuf, reason: String },
    #[error("duplicate sample id `{0}`")]
    DuplicateSample(String),
    #[error("infeasible synthetic spec: {0}")]
    InfeasibleSpec(String),

    #[error("generation failed for sample `{sample_id}`: {reason}")]
    Generation { sample_id: String, reason: String },
    #[error("feature extraction failed for {} image(s): {}", .failures.len(), .failures.iter().map(|(p, e)| format!("{}: {e}", p.display())).collect::<Vec<_>>().join("; "))]
    Extraction { failures: Vec<(PathBuf, String)> },
    #[error("client error: {0}")]
    Client(String),

    #[error("training diverged at epoch {epoch}: {reason}")]
    TrainingDiverged { epoch: usize, reason: String },
    #[error("invalid sweep grid: {0}")]
    InvalidGrid(String),
    #[error("{context}: {source}")]
    Annotated {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error("checkpoint error in {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn annotate(self, context: impl Into<String>) -> Self {
        Error::Annotated {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Process exit code for the command-line surface.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Annotated { source, .. } => source.exit_code(),
            Error::Config(_)
            | Error::InvalidAlpha(_)
            | Error::InvalidTemperature(_)
            | Error::InvalidGrid(_)
            | Error::Shape(_) => 2,
            Error::MissingArtifact(_) => 3,
            Error::TrainingDiverged { .. } => 4,
            Error::Io { .. }
            | Error::Client(_)
            | Error::Generation { .. }
            | Error::Extraction { .. } => 5,
            Error::EmptyDataset(_) | Error::SplitTooSmall(_) | Error::InfeasibleSpec(_) => 4,
            _ => 5,
        }
    }
}

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("components {i} and {j} are not orthogonal (|dot| = {dot:.3e})")]
    NonOrthogonal { i: usize, j: usize, dot: f64 },

    #[error("rejection sampler exceeded {0} iterations")]
    SamplerStalled(usize),

    #[error(
        "target epsilon {target} infeasible in sigma bracket [{lo}, {hi}] \
         (epsilon at endpoints: {eps_lo}, {eps_hi})"
    )]
    Infeasible {
        target: f64,
        lo: f64,
        hi: f64,
        eps_lo: f64,
        eps_hi: f64,
    },

    #[error("training diverged at step {step}: {reason}")]
    Diverged { step: usize, reason: String },

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error("out-of-vocabulary: every token on the {0} side is missing from the embedding table")]
    OutOfVocabulary(&'static str),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("grid point {point}: {source}")]
    GridPoint {
        point: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for failures of the numerical machinery itself, as opposed to bad
    /// input data or bad parameters.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::SamplerStalled(_) | Error::Infeasible { .. } | Error::Diverged { .. } => true,
            Error::GridPoint { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    /// True for failures caused by input files or their contents.
    pub fn is_data(&self) -> bool {
        match self {
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::ShapeMismatch(_)
            | Error::OutOfVocabulary(_)
            | Error::EmptyInput(_) => true,
            Error::GridPoint { source, .. } => source.is_data(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid stimulus {image_id}: {message}")]
    InvalidStimulus { image_id: String, message: String },

    #[error("unknown stimulus `{0}`")]
    UnknownStimulus(String),

    #[error("fixation ({x}, {y}) outside the {width}x{height} stimulus")]
    OutOfBounds {
        x: f64,
        y: f64,
        width: u32,
        height: u32,
    },

    #[error("negative fixation duration {0} ms")]
    NegativeDuration(f64),

    #[error("fixation ({x}, {y}) falls outside the {width}x{height} grid")]
    FixationOutsideGrid {
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },

    #[error("grid geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("map has zero variance")]
    DegenerateMap,

    #[error("not a probability map: {0}")]
    NotProbability(String),

    #[error("invalid map: {0}")]
    InvalidMap(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("every candidate is rejected")]
    TotalRejection,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("objective is not finite at the initial point ({0})")]
    NonFiniteObjective(f64),

    #[error("missing saliency map for image `{0}`")]
    MissingSaliency(String),

    #[error("SMAP format error: {0}")]
    SmapFormat(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("image {image_id}, scanpath {scanpath_index}, fixation {fixation_index}: {source}")]
    Model {
        image_id: String,
        scanpath_index: usize,
        fixation_index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error stems from bad user input rather than an environment
    /// or internal failure. The CLI maps this onto its exit codes.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Io { .. } => false,
            Error::Model { source, .. } => source.is_validation(),
            _ => true,
        }
    }
}

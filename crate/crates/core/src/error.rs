use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileMissing(PathBuf),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("schema violation at {location}: {message}")]
    Schema { location: String, message: String },

    #[error("degenerate polygon at {location}: {reason}")]
    PolygonDegenerate { location: String, reason: String },

    #[error("vertex ({x}, {y}) at {location} lies outside the {width}x{height} image")]
    VertexOutOfBounds {
        location: String,
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },

    #[error("region rasterizes to an empty mask on a {height}x{width} grid")]
    EmptyMask { height: usize, width: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("image {height}x{width} is smaller than every configured scale {scales:?}")]
    NoApplicableScale {
        height: usize,
        width: usize,
        scales: Vec<u32>,
    },

    #[error("pixel (row {row}, col {col}) is not covered by any tile")]
    UncoveredPixel { row: usize, col: usize },

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("median kernel must be odd, got {0}")]
    EvenKernel(usize),

    #[error("median kernel {kernel} exceeds map size {height}x{width}")]
    KernelTooLarge { kernel: usize, height: usize, width: usize },

    #[error("invalid probability map: {0}")]
    InvalidMap(String),

    #[error("ground truth is empty")]
    EmptyGt,

    #[error("cannot aggregate an empty list of scores")]
    EmptyList,

    #[error("no SeLo map for case {case_id} in {dir}")]
    MissingMap { case_id: String, dir: PathBuf },

    #[error("dimension mismatch: expected {expected_h}x{expected_w}, got {actual_h}x{actual_w}")]
    DimMismatch {
        expected_h: usize,
        expected_w: usize,
        actual_h: usize,
        actual_w: usize,
    },

    #[error("unknown case id {0}")]
    UnknownCase(String),

    #[error("npy format error: {0}")]
    Npy(String),

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Scorer(#[from] ScorerError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::FileMissing(path)
        } else {
            Error::Io { path, source }
        }
    }

    /// Short machine-readable category, used in reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::FileMissing(_) => "file-missing",
            Error::Io { .. } => "io",
            Error::Schema { .. } => "schema-violation",
            Error::PolygonDegenerate { .. } => "polygon-degenerate",
            Error::VertexOutOfBounds { .. } => "vertex-out-of-bounds",
            Error::EmptyMask { .. } => "empty-mask",
            Error::InvalidConfig(_) => "invalid-config",
            Error::NoApplicableScale { .. } => "no-applicable-scale",
            Error::UncoveredPixel { .. } => "uncovered-pixel",
            Error::LengthMismatch { .. } => "length-mismatch",
            Error::EvenKernel(_) => "even-kernel",
            Error::KernelTooLarge { .. } => "kernel-too-large",
            Error::InvalidMap(_) => "invalid-map",
            Error::EmptyGt => "empty-gt",
            Error::EmptyList => "empty-list",
            Error::MissingMap { .. } => "missing-map",
            Error::DimMismatch { .. } => "dim-mismatch",
            Error::UnknownCase(_) => "unknown-case",
            Error::Npy(_) => "npy",
            Error::Image { .. } => "image",
            Error::Json(_) => "json",
            Error::Scorer(e) => e.kind(),
        }
    }

    pub(crate) fn image(path: impl Into<PathBuf>, source: image::ImageError) -> Self {
        let path = path.into();
        match source {
            image::ImageError::IoError(e) if e.kind() == std::io::ErrorKind::NotFound => Error::FileMissing(path),
            source => Error::Image { path, source },
        }
    }
}

/// Failures raised by similarity scorers.
#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("scorer unavailable: {0}")]
    Unavailable(String),

    #[error("failed to spawn scorer {command:?}: {source}")]
    SpawnFailure {
        command: Vec<String>,
        #[source]
        source: std::io::Error,
    },

    #[error("handshake mismatch: {0}")]
    HandshakeMismatch(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("scorer returned an error for request {id}: {message}")]
    Remote { id: u64, message: String },

    #[error("scorer did not answer within {0:?}")]
    Timeout(std::time::Duration),

    #[error("scorer produced a non-finite score {score} for tile {index}")]
    NonFinite { index: usize, score: f64 },
}

impl ScorerError {
    pub fn kind(&self) -> &'static str {
        match self {
            ScorerError::Unavailable(_) => "scorer-unavailable",
            ScorerError::SpawnFailure { .. } => "spawn-failure",
            ScorerError::HandshakeMismatch(_) => "handshake-mismatch",
            ScorerError::Protocol(_) => "protocol-error",
            ScorerError::Remote { .. } => "remote-error",
            ScorerError::Timeout(_) => "timeout",
            ScorerError::NonFinite { .. } => "non-finite-score",
        }
    }
}

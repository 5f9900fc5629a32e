use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong in the processing chain.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("acquisition catalog is empty")]
    EmptyCatalog,

    #[error("pair network is disconnected ({} components: {components:?})", components.len())]
    DisconnectedNetwork { components: Vec<Vec<usize>> },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("min-cost flow network infeasible: {0}")]
    InfeasibleNetwork(String),

    #[error("not enough pixels for a {levels}-level decomposition: have {have}, need {need}")]
    InsufficientPixels {
        levels: usize,
        have: usize,
        need: usize,
    },

    #[error("elevation is constant over the pixel set; topographic delay is unidentifiable")]
    ConstantElevation,

    #[error("pixel geometry is degenerate (collinear or too few pixels) for ramp estimation")]
    DegenerateGeometry,

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("need at least {need} epochs, have {have}")]
    InsufficientEpochs { need: usize, have: usize },

    #[error("no product pixels within {radius_m} m of station {station}")]
    NoPixelsNearStation { station: String, radius_m: f64 },

    #[error("pixel {pixel} at ({lon}, {lat}) lies outside the GIA grid")]
    PixelOutsideGrid { pixel: usize, lon: f64, lat: f64 },

    #[error("product contains no pixels")]
    EmptyProduct,

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}

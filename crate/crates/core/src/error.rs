use std::path::PathBuf;

/// Errors produced anywhere in the rectification toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension too small: {what} must be at least {min}, got {got}")]
    DimensionTooSmall {
        what: &'static str,
        min: usize,
        got: usize,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported format version {0}")]
    BadVersion(u16),
    #[error("dimension overflow: {rows}x{cols}")]
    DimensionOverflow { rows: u64, cols: u64 },
    #[error("non-finite value in payload at element {0}")]
    NonFinitePayload(usize),
    #[error("bad format: {0}")]
    BadFormat(String),
    #[error("image codec failure: {0}")]
    Image(#[from] image::ImageError),

    #[error("singular transform (|det| = {0:e})")]
    SingularTransform(f64),
    #[error("zero-size output")]
    ZeroSizeOutput,
    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(&'static str),
    #[error("degenerate bounding box ({width} x {height})")]
    DegenerateBbox { width: f64, height: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("image too small: {height}x{width}, need at least {min} px per side")]
    ImageTooSmall {
        height: usize,
        width: usize,
        min: usize,
    },
    #[error("empty line set")]
    EmptyLineSet,
    #[error("degenerate interpolation centers: {0}")]
    DegenerateCenters(String),

    #[error("predictor failure: {0}")]
    PredictorFailure(String),
    #[error("external command failed: {0}")]
    Subprocess(String),

    #[error("mask selects no pixels")]
    EmptyMask,
    #[error("total gradient weight is zero")]
    ZeroTotalWeight,
    #[error("reference text is empty")]
    EmptyReference,
    #[error("layout has no blocks")]
    EmptyLayout,

    #[error("distortion is not injective: {0}")]
    NonInjectiveSpec(String),
    #[error("Newton inversion diverged at pixel ({x}, {y})")]
    NewtonDivergence { x: usize, y: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

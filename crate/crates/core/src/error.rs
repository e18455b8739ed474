use thiserror::Error;

/// Errors produced by the eddy-current imaging pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point ({r:e}, {z:e}) lies outside the mesh")]
    OutsideMesh { r: f64, z: f64 },

    #[error("region specs {first} and {second} overlap at triangle {triangle}")]
    OverlappingRegions {
        triangle: usize,
        first: usize,
        second: usize,
    },

    #[error("no material assigned to region tag `{0}`")]
    UnknownTag(String),

    #[error("singular evaluation: {0}")]
    Singular(String),

    #[error("factorization failed at pivot {pivot} (condition estimate {condition:e})")]
    IllConditioned { pivot: usize, condition: f64 },

    #[error("linear solve residual {residual:e} exceeds tolerance {tolerance:e}")]
    Residual { residual: f64, tolerance: f64 },

    #[error("field belongs to a different mesh")]
    MeshMismatch,

    #[error("no scattering data: multistatic matrix is identically zero")]
    NoScatteringData,

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("version mismatch: expected `{expected}`, found `{found}`")]
    Version { expected: String, found: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Whether the error comes from input validation rather than a numerical failure.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Singular(_)
                | Error::IllConditioned { .. }
                | Error::Residual { .. }
                | Error::NoScatteringData
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}

use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid operator spec: {0}")]
    InvalidSpec(String),
    #[error("dimension n = {0} not supported: the W^(4,2) to L^inf embedding needs n <= 7")]
    DimensionNotSupported(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("resolution too coarse: N = {0}, need N >= 16")]
    ResolutionTooCoarse(usize),
    #[error("singular assembly: {0}")]
    SingularAssembly(String),
    #[error("truncation K = {k} too large: need K <= N/4 = {max}")]
    TruncationTooLarge { k: usize, max: usize },
    #[error("eigensolve failed: {0}")]
    EigensolveFailure(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("touchdown imminent: max u = {max_u}")]
    TouchdownImminent { max_u: f64 },
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
    #[error("ball too large: C_emb * r = {0} >= 1")]
    BallTooLarge(f64),
    #[error("rho too large: C_lin * rho + r/2 = {lhs} is not below r = {r}")]
    RhoTooLarge { lhs: f64, r: f64 },
    #[error("not certified: {0}")]
    NotCertified(String),
    #[error("first eigenfunction changes sign: value {value} at node {index}")]
    PositivityFailure { index: usize, value: f64 },
    #[error("domain not admissible: {0}")]
    DomainNotAdmissible(String),
    #[error("mass at touchdown: M = {0} >= 1")]
    MassAtTouchdown(f64),
    #[error("not supercritical: c0 = {0} <= 0")]
    NotSupercritical(f64),
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("format version mismatch: file has version {found}, this build reads up to {supported}")]
    FormatVersionMismatch { found: u32, supported: u32 },
    #[error("cache corrupt: {0}")]
    CacheCorrupt(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the input.
    pub fn is_numerical(&self) -> bool {
        !matches!(
            self,
            Error::ConfigInvalid(_)
                | Error::InvalidSpec(_)
                | Error::DimensionNotSupported(_)
                | Error::DimensionMismatch(_)
                | Error::ResolutionTooCoarse(_)
                | Error::TruncationTooLarge { .. }
                | Error::Io(_)
                | Error::Parse(_)
                | Error::FormatVersionMismatch { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

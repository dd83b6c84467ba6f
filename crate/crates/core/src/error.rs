use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScalarError {
    #[error("cannot parse scalar: {0}")]
    Parse(String),
    #[error("scalar domain error: {0}")]
    Domain(String),
    #[error("irrational value {0} is not representable in the exact backend; use the float backend")]
    IrrationalInExact(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("a lift needs at least one marked point")]
    EmptyInput,
    #[error("breaks and values differ in length ({breaks} vs {values})")]
    LengthMismatch { breaks: usize, values: usize },
    #[error("not an orientation-preserving homeomorphism: {0}")]
    NonMonotone(String),
    #[error("piece count {pieces} exceeds the cap of {cap}")]
    Overflow { pieces: usize, cap: usize },
    #[error("marked point {index} is not a genuine break (equal one-sided slopes)")]
    NotABreak { index: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("F^q - x - p vanishes on the whole piece [{lo}, {hi}]")]
    IdentityPiece { lo: f64, hi: f64 },
    #[error("no exact rotation number with denominator <= {q_cap}; periodicity cannot be certified")]
    RotationIrrational { q_cap: u64 },
    #[error("map is not conjugate to a rigid rotation: {0}")]
    NotConjugate(String),
    #[error("periodicity test and F^q rigidity test disagree: {0}")]
    InternalMismatch(String),
    #[error("parameter outside the family's domain: {0}")]
    OutOfDomain(String),
    #[error("rotation number does not cross the target inside the bracket: {0}")]
    NotBracketed(String),
    #[error("landmarks closer than the differentiation step: {0}")]
    SegmentCollision(String),
    #[error("logarithm argument {argument} <= 0 in passage-time coefficient")]
    LogDomain { argument: f64 },
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error(transparent)]
    Scalar(#[from] ScalarError),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("degree {degree} exceeds the supported cap {cap}")]
    DegreeCap { degree: u32, cap: u32 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("non-quadratic action needs a background configuration")]
    MissingConfiguration,
    #[error("supports are not causally ordered")]
    SupportsOverlap,
    #[error("constant term is not invertible")]
    NotInvertible,
    #[error("series has a nonzero constant term")]
    NonzeroConstantTerm,
    #[error("cap mismatch: {0}")]
    CapMismatch(String),
    #[error("kernel is not positive: {0}")]
    NotPositive(String),
    #[error("degenerate form: {0}")]
    Degenerate(String),
    #[error("divergence cap exceeded: {0}")]
    DivergenceCap(String),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("invalid window: {0}")]
    Window(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("off-grid shift: {0}")]
    OffGrid(String),
    #[error("not local: {0}")]
    NotLocal(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

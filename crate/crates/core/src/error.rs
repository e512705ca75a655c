use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid mesh: {0}")]
    Validation(String),

    #[error("degenerate element {0}")]
    DegenerateElement(usize),

    #[error("no free nodes")]
    NoFreeNodes,

    #[error("no Dirichlet node")]
    NoDirichlet,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("tensor field is not symmetric positive definite at {at}: {detail}")]
    NotSpd { at: String, detail: String },

    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("Lanczos breakdown persisted after {0} restarts")]
    Breakdown(usize),

    #[error("stability certificate violated: {0}")]
    Certificate(String),

    #[error("identity check failed: {0}")]
    IdentityCheck(String),
}

pub type Result<T> = std::result::Result<T, Error>;

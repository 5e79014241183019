use crate::lattice::Rect;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("invalid rectangle {rect}: {reason}")]
    InvalidRect { rect: Rect, reason: String },

    #[error("no minimal rectangle defined: {0} and {1} are disjoint")]
    Disjoint(Rect, Rect),

    #[error("{inner} is not strictly contained in {target}")]
    NotStrictlyContained { inner: Rect, target: Rect },

    #[error("support {support} is not contained in {into}")]
    NotContained { support: Rect, into: Rect },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("operator is not Hermitian (defect {0:e})")]
    NotHermitian(f64),

    #[error("invalid model: {0}")]
    Model(String),

    #[error("inner potential not yet diagonalized on {rect} (off-block norm {norm:e})")]
    NotDiagonalized { rect: Rect, norm: f64 },

    #[error("coupling outside certified convergence region: {0}")]
    OutsideRadius(String),

    #[error("series truncation error {tail:e} at step {rect} exceeds tolerance {tol:e}")]
    Truncation { rect: Rect, tail: f64, tol: f64 },

    #[error("gap of G on {rect} is {gap}, below 1/2")]
    GapViolation { rect: Rect, gap: f64 },

    #[error("consistency residual {residual:e} at step {rect} exceeds tolerance {tol:e}")]
    Consistency { rect: Rect, residual: f64, tol: f64 },

    #[error("rectangle family is disconnected")]
    Disconnected,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("linear algebra failure: {0}")]
    Linalg(#[from] ndarray_linalg::error::LinalgError),

    #[error("{}", config_message(.line, .message))]
    Config { line: Option<usize>, message: String },

    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn config_message(line: &Option<usize>, message: &str) -> String {
    match line {
        Some(l) => format!("config line {l}: {message}"),
        None => format!("config: {message}"),
    }
}

pub type Result<T> = std::result::Result<T, Error>;

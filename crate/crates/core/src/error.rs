use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("expression error at column {column}: {message}")]
    Expr { column: usize, message: String },

    #[error("expression is not a polynomial: {0}")]
    NotPolynomial(String),

    #[error("invalid frame: {0}")]
    Frame(String),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("node {node} is on the boundary; interior node required")]
    BoundaryNode { node: usize },

    /// The matrix is not in the admissible cone `A >= gamma I`.
    #[error("matrix not >= {gamma} I: smallest eigenvalue {min_eigenvalue}")]
    Domain { gamma: f64, min_eigenvalue: f64 },

    #[error("invalid Bellman control: {0}")]
    Control(String),

    #[error("invalid Hamiltonian: {0}")]
    Hamiltonian(String),

    #[error("invalid problem: {0}")]
    Problem(String),

    #[error(
        "linear solver did not converge after {iterations} iterations \
         (relative residual {relative_residual:.3e}, target {target:.1e})"
    )]
    LinearSolver {
        iterations: usize,
        relative_residual: f64,
        target: f64,
    },

    #[error("exponent overflow in perturbation: max exponent {max_exponent}")]
    Overflow { max_exponent: f64 },

    #[error("{path}:{line}: {message}")]
    Spec {
        path: String,
        line: usize,
        message: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("unknown vertex `{0}`")]
    UnknownVertex(String),

    #[error("vertex set is empty")]
    EmptyVertexSet,

    #[error("graph is disconnected ({} components)", components.len())]
    Disconnected { components: Vec<Vec<String>> },

    #[error("matrix is reducible ({} components)", components.len())]
    Reducible { components: Vec<Vec<usize>> },

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("exact cross-check disagrees: iterative {iterative} vs exact bracket [{lo}, {hi}]")]
    CrossCheck { iterative: f64, lo: f64, hi: f64 },

    #[error("weights must be strictly positive (vertex {0})")]
    NonPositiveWeight(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("multiplicity {0} exceeds 2^31-1")]
    MultiplicityOverflow(u64),

    #[error("P_{n}(lambda) is not positive")]
    NonPositivePolynomial { n: i64 },

    #[error("tower too shallow: need at least {needed} levels, have {have}")]
    TooShallow { needed: usize, have: usize },

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("not a subalgebra: {0}")]
    NotSubalgebra(String),

    #[error("orthonormal basis breakdown: {0}")]
    RankDeficiency(String),

    #[error("cell is not verified: {0}")]
    UnverifiedCell(String),

    #[error("weights are not Markov (relative residual {residual:e})")]
    NotMarkov { residual: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

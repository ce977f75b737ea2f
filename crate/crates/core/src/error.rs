use thiserror::Error;

/// Errors raised by the library.
///
/// Variants are split into input problems (malformed graphs, unbalanced
/// flows, bad parameters) and numerical problems (non-convergence,
/// singular systems); the CLI maps them onto different exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("graph is not connected")]
    Disconnected,

    #[error("unknown vertex id `{0}`")]
    UnknownVertex(String),

    #[error("unknown edge id `{0}`")]
    UnknownEdge(String),

    #[error("invalid cost specification: {0}")]
    InvalidCost(String),

    #[error("flow {value} on edge `{edge}` is outside the validity interval [{lo}, {hi}]")]
    OutsideDomain {
        edge: String,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("external flow not balanced (sum = {0:e})")]
    Unbalanced(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty vertex set")]
    EmptySet,

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("series not absolutely summable; use L+ form")]
    Periodic,

    #[error("walk eigenvalue {0} >= 1: decay bound does not apply, use a non-bipartite instance")]
    NoSpectralGap(f64),

    #[error("budget invalid: rho = {0} >= 1")]
    BudgetInvalid(f64),

    #[error("infeasible point: max residual {0:e}")]
    Infeasible(f64),

    #[error("boundary values inconsistent with frozen constraints: max residual {0:e}")]
    BoundaryMismatch(f64),

    #[error("perturbation support is not contained in the subgraph")]
    SupportOutsideSubgraph,

    #[error("weight {weight} outside [{lo}, {hi}]")]
    WeightOutOfRange { weight: f64, lo: f64, hi: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad input rather than numerical trouble.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::NoConvergence { .. }
                | Error::Singular(_)
                | Error::Periodic
                | Error::NoSpectralGap(_)
                | Error::BudgetInvalid(_)
                | Error::OutsideDomain { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

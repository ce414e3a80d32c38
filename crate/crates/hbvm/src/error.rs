//! Error types shared across the crate.

/// Errors produced by basis evaluation, tableau construction, time stepping,
/// and serialization.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A polynomial degree beyond the basis capacity was requested.
    #[error("degree {degree} exceeds the basis max_degree {max_degree}")]
    DegreeOverflow { degree: usize, max_degree: usize },

    /// A parameter violated a documented precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The Nystrom coefficient field is only defined for s >= 2; with s = 1
    /// the secondary weights degenerate to the constant 1.
    #[error("unsupported truncation s = {s}: the Runge-Kutta-Nystrom form requires s >= 2")]
    UnsupportedTruncation { s: usize },

    /// Root finding for quadrature nodes did not converge. Must not occur
    /// for the supported node counts.
    #[error("internal error: node search for the {k}-point rule did not converge")]
    QuadratureNonConvergence { k: usize },

    /// The nonlinear stage iteration exhausted its iteration budget.
    #[error(
        "stage iteration did not converge after {iters} iterations \
         (last residual {residual:.3e}, tol {tol:.3e})"
    )]
    StepNonConvergence {
        iters: usize,
        residual: f64,
        tol: f64,
    },

    /// A state component became non-finite or exceeded the divergence limit.
    #[error("state diverged during stage iteration (non-finite or magnitude above {limit:.1e})")]
    Divergence { limit: f64 },

    /// The linear solve inside the simplified Newton iteration broke down.
    #[error("simplified Newton matrix is singular to working precision")]
    SingularNewtonMatrix,

    /// A step of a multi-step integration failed; carries the step index.
    #[error("step {step} failed: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    /// An unrecognized serialization format name.
    #[error("unknown export format {0:?} (expected \"json\" or \"csv\")")]
    UnknownFormat(String),

    /// Exported tableau bytes that cannot be parsed back.
    #[error("malformed tableau data: {0}")]
    MalformedTableau(String),

    /// Mismatched vector/matrix dimensions between cooperating objects.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("infeasible point for {family}: {detail}")]
    InfeasiblePoint { family: String, detail: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("input is not Hermitian (deviation {0:e})")]
    NonHermitianInput(f64),

    #[error("dimension error: expected {expected}, got {got}")]
    Dimension { expected: String, got: usize },

    #[error("finite-difference stencil leaves the feasible set along coordinate {coord}")]
    BoundaryPoint { coord: usize },

    #[error("degenerate state: dropped eigenpair carries numerator {0:e}")]
    DegenerateState(f64),

    #[error("quadrature failed: {0}")]
    QuadratureFailure(String),

    #[error("no convergence after {evals} evaluations")]
    NonConvergence { evals: u64 },

    #[error("total volume is consistent with zero ({value:e} +/- {err:e})")]
    DegenerateTotal { value: f64, err: f64 },

    #[error("normalization failed: {0}")]
    NormalizationFailure(String),

    #[error("support mismatch: {0}")]
    SupportMismatch(String),

    #[error("divergent quantity: {0}")]
    Divergence(String),

    #[error("undefined branch: {0}")]
    UndefinedBranch(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Stable snake_case name of the variant, for machine-readable diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InfeasiblePoint { .. } => "infeasible_point",
            Error::Domain(_) => "domain",
            Error::NonHermitianInput(_) => "non_hermitian_input",
            Error::Dimension { .. } => "dimension",
            Error::BoundaryPoint { .. } => "boundary_point",
            Error::DegenerateState(_) => "degenerate_state",
            Error::QuadratureFailure(_) => "quadrature_failure",
            Error::NonConvergence { .. } => "non_convergence",
            Error::DegenerateTotal { .. } => "degenerate_total",
            Error::NormalizationFailure(_) => "normalization_failure",
            Error::SupportMismatch(_) => "support_mismatch",
            Error::Divergence(_) => "divergence",
            Error::UndefinedBranch(_) => "undefined_branch",
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonConvergence { .. } | Error::QuadratureFailure(_) => 3,
            Error::SupportMismatch(_) | Error::NormalizationFailure(_) | Error::Divergence(_) => 4,
            _ => 2,
        }
    }
}

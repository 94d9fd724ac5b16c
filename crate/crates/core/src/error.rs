use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid metric tensor: {0}")]
    InvalidMetric(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A model evaluator (mass matrix, constraint, ...) could not be evaluated.
    #[error("model evaluation failed: {0}")]
    Model(String),

    /// The constraint inertia matrix could not be factorized. Structurally this
    /// cannot happen for a positive-definite mass matrix, so it signals an
    /// inconsistent model.
    #[error("constraint inertia matrix is singular")]
    SingularInertia,

    #[error("constraint Jacobian is rank deficient (rank {rank} < {rows} rows)")]
    RankDeficient { rank: usize, rows: usize },

    #[error("Newton-Raphson projection diverged; residuals {residuals:?}")]
    ProjectionFailure { residuals: Vec<f64> },

    #[error("task Jacobian is singular (sigma_min {sigma_min:e}, sigma_max {sigma_max:e})")]
    TaskSingularity { sigma_min: f64, sigma_max: f64 },

    #[error("passive joints cannot be compensated in this configuration")]
    Uncontrollable,
}

pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}

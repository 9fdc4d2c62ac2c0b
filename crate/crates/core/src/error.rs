use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid constraint set: {0}")]
    InvalidConstraint(String),

    /// The projected-gradient iteration hit its iteration budget.
    #[error("inner solver did not converge after {iterations} iterations (last step {last_step:e})")]
    Convergence {
        iterations: usize,
        last_step: f64,
        last_iterate: Vec<f64>,
    },

    #[error("internal consistency violated: {0}")]
    InternalConsistency(String),

    #[error("unsupported dimension {0} (brute force is limited to d <= 3)")]
    UnsupportedDimension(usize),

    #[error("constraint set is not separable across the factor blocks: {0}")]
    NotSeparable(String),

    #[error("Riccati solution escaped at tau = {tau}: |A| = {a_abs:e}, |B| = {b_norm:e}")]
    FiniteEscape { tau: f64, a_abs: f64, b_norm: f64 },

    #[error("simulation produced a non-finite value on path {path} at step {step}: {detail}")]
    Simulation {
        path: usize,
        step: usize,
        detail: String,
    },

    #[error("dual control is inadmissible (support function infinite) at t = {t} on path {path}")]
    InadmissibleDual { t: f64, path: usize },
}

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        });
    }
    Ok(())
}

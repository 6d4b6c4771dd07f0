use thiserror::Error;

/// Errors produced by the simulation library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid Fock truncation dimension {dim} (need at least 2)")]
    InvalidDimension { dim: usize },
    #[error("parameter `{name}` must be positive, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },
    #[error("parameter `{name}` must be non-negative, got {value}")]
    NegativeParameter { name: &'static str, value: f64 },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("operator `{name}` is not Hermitian (max |X - X^dag| = {residual:e})")]
    NotHermitian { name: &'static str, residual: f64 },
    #[error("not a valid density matrix: {reason}")]
    InvalidDensityMatrix { reason: String },
    #[error("truncation too small: discarded population {leak:e} exceeds {threshold:e}")]
    TruncationInsufficient { leak: f64, threshold: f64 },
    #[error("Fock index {index} out of range for dimension {dim}")]
    InvalidIndex { index: usize, dim: usize },
    #[error("overdamped regime: lambda = {lambda} >= 2 gives no real oscillation frequency")]
    OverdampedRegime { lambda: f64 },
    #[error("superoperator size {size} exceeds the cap {cap}")]
    DimensionCapExceeded { size: usize, cap: usize },
    #[error("Liouvillian kernel is degenerate (second-smallest singular value {sigma:e})")]
    DegenerateKernel { sigma: f64 },
    #[error("steady-state solve did not converge (residual {residual:e})")]
    NoConvergence { residual: f64 },
    #[error("step size {dt} rejected: dt * generator bound = {product:.3} exceeds {limit}")]
    StepSizeRejected { dt: f64, product: f64, limit: f64 },
    #[error("positivity violated at t = {time}: min eigenvalue {min_eigenvalue:e}")]
    PositivityViolation { time: f64, min_eigenvalue: f64 },
    #[error("no damping (lambda = 0): the moment equations have no steady state")]
    NoDamping,
    #[error("no thermal equilibrium: lambda = {lambda} does not exceed 4*kappa*hbar = {bound}")]
    NoEquilibrium { lambda: f64, bound: f64 },
    #[error("conditioned state collapsed at step {step} (squared norm {norm_sqr:e})")]
    NormUnderflow { step: usize, norm_sqr: f64 },
    #[error("expectation of `{name}` has imaginary part {value:e}")]
    ImaginaryPartTooLarge { name: &'static str, value: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn require_positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveParameter { name, value })
    }
}

pub(crate) fn require_nonnegative(name: &'static str, value: f64) -> Result<()> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::NegativeParameter { name, value })
    }
}

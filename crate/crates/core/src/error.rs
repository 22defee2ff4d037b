//! Error type shared by every module of the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HqdError {
    /// Bessel order outside the supported set {0, 1/2, 1, 3/2, 2, 5/2}.
    #[error("unsupported Bessel order nu = {0}")]
    UnsupportedOrder(f64),

    /// Argument outside the domain of a special function.
    #[error("domain error: {0}")]
    Domain(String),

    /// |J_nu(kR)| below threshold; the fundamental solution loses all digits.
    #[error("singular configuration: |J_nu(kR)| = {j_abs:.3e} < 1e-12")]
    SingularConfiguration { j_abs: f64 },

    /// Mean-value constant non-positive, mollifier undefined.
    #[error("non-positive mean-value constant c = {c:.6e} at radius {radius}")]
    NonPositiveMvtConstant { c: f64, radius: f64 },

    /// Measure support escapes the ball the operation requires.
    #[error("support violation: {0}")]
    SupportViolation(String),

    /// A documented precondition does not hold.
    #[error("precondition failed: {0}")]
    Precondition(String),

    /// Iterative solver hit its sweep cap before reaching tolerance.
    #[error("solver did not converge: residual {residual:.3e} after {iterations} sweeps")]
    NonConvergence { iterations: usize, residual: f64 },

    /// A Theorem-7.1 pipeline validation failed; names the broken inequality.
    #[error("admissibility failure: {0}")]
    AdmissibilityFailure(String),

    /// Empty or otherwise unusable domain mask.
    #[error("degenerate domain: {0}")]
    DegenerateDomain(String),

    /// Conformal map with identically vanishing derivative.
    #[error("degenerate map: {0}")]
    DegenerateMap(String),

    /// Input file or config failed to parse or validate.
    #[error("malformed input: {0}")]
    MalformedInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HqdError>;

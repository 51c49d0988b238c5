//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used by every fallible operation in the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by cocycle construction and analysis.
#[derive(Debug, Error)]
pub enum Error {
    /// Matrix or vector dimensions do not match the operation.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A matrix failed row-stochasticity validation.
    #[error("not a stochastic matrix: {0}")]
    NotStochastic(String),

    /// An input value lies outside the operation's domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A restriction that must be injective has a kernel.
    #[error("singular restriction: {0}")]
    SingularRestriction(String),

    /// A subspace field is not invariant under the cocycle within tolerance.
    #[error("splitting not invariant: residual {residual:.3e} exceeds {tolerance:.3e}")]
    NotInvariant { residual: f64, tolerance: f64 },

    /// A contraction precondition does not hold, so a fixed-point
    /// iteration was refused.
    #[error("contraction condition violated: measured norm {norm:.6} >= {bound:.6}")]
    NoContraction { norm: f64, bound: f64 },

    /// No iterate count up to the budget certifies domination; carries the
    /// best (smallest) ratio that was observed and where.
    #[error(
        "no domination certificate up to m = {m_max}: best ratio {best_ratio:.6} at m = {best_m}"
    )]
    NotDominated { m_max: usize, best_m: usize, best_ratio: f64 },

    /// An iteration ran out of budget before reaching its tolerance.
    #[error("no convergence after {iterations} iterations: residual {residual:.3e}")]
    NoConvergence { iterations: usize, residual: f64 },

    /// No spectral gap where one is required.
    #[error("no spectral gap: {0}")]
    NoSpectralGap(String),

    /// A transport/accessibility precondition was breached.
    #[error("transport precondition breached: {0}")]
    TransportPrecondition(String),

    /// Randomized repair failed within its draw budget.
    #[error("repair failed: {0}")]
    RepairFailed(String),
}

//! Crate-wide error type.
//!
//! Variants split into two broad classes: misuse of the API surface
//! (`Domain`, `Boundary`, `Unsupported`) and numerical trouble discovered
//! while computing (`Quadrature`, `Regularity`, `NoRoot`, `NonFinite`,
//! `InsufficientData`, `Simulation`). Callers that need to distinguish the
//! classes can use [`Error::is_usage`].

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A point, interval, or argument violates a declared domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A finite-difference step would leave the parameter domain.
    #[error("boundary error: finite-difference step {step:e} around theta[{index}] = {value} leaves the domain")]
    Boundary { index: usize, value: f64, step: f64 },

    /// The requested operation is outside the supported scope.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Adaptive quadrature failed to reach the requested tolerance.
    #[error("quadrature did not converge: requested {requested:e}, achieved {achieved:e}")]
    Quadrature { requested: f64, achieved: f64 },

    /// A Fisher matrix failed the positive-definiteness gate.
    #[error("regularity failure: {0}")]
    Regularity(String),

    /// Root bracketing or iteration failed in a solver.
    #[error("no root: {0}")]
    NoRoot(String),

    /// A density, score, or statistic evaluated to NaN or infinity.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Too few effective samples to report an estimate.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Too many Monte Carlo replications failed.
    #[error("simulation error: {failed} of {total} replications failed")]
    Simulation { failed: usize, total: usize },
}

impl Error {
    /// True for errors caused by how the API was called rather than by
    /// numerical behaviour at run time.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Domain(_) | Error::Boundary { .. } | Error::Unsupported(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

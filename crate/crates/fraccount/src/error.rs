//! One error type for the whole crate.
//!
//! The variants split into three families, which the CLI maps onto exit
//! codes: domain violations (bad arguments, unsupported parameter regimes),
//! numeric failures (series that refuse to converge, unstable inversions,
//! exhausted budgets), and statistical check failures.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the documented domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Γ evaluated at a non-positive integer.
    #[error("gamma pole at non-positive integer x = {0}")]
    GammaPole(f64),

    /// A result (or a mandatory intermediate) exceeds f64 range.
    #[error("overflow: {0}")]
    Overflow(String),

    /// A series hit its term cap before reaching the requested tolerance.
    #[error("series did not converge within {terms} terms (relative error estimate {rel_err:.3e})")]
    NonConvergence { terms: usize, rel_err: f64 },

    /// The two inversion node counts (and the Gaver-Stehfest detector)
    /// disagree beyond tolerance; the transform is outside the method's
    /// comfort zone at this t.
    #[error("laplace inversion unstable at t = {t}: consistency spread {spread:.3e}")]
    InversionUnstable { t: f64, spread: f64 },

    /// Adaptive quadrature exceeded its subdivision budget.
    #[error("quadrature budget exhausted over [{a}, {b}]")]
    QuadratureBudget { a: f64, b: f64 },

    /// Rejection sampling spun past its iteration budget.
    #[error("rejection sampling budget exhausted after {0} iterations")]
    RejectionBudget(u64),

    /// A sampled path never reached the requested level.
    #[error("path horizon too short: reached {reached} < target {target} at horizon {horizon}")]
    HorizonTooShort {
        horizon: f64,
        reached: f64,
        target: f64,
    },

    /// The rate polynomial has roots off the real axis.
    #[error("rate polynomial has complex roots (max |Im| = {0:.3e})")]
    ComplexRoots(f64),

    /// A closed form was requested outside the regime where it holds.
    #[error("parameter regime not covered by this evaluator: {0}")]
    Regime(String),

    /// Two supposedly equivalent representations disagree.
    #[error("dual representations disagree: {a} vs {b} (|diff| = {diff:.3e})")]
    DualFormMismatch { a: f64, b: f64, diff: f64 },

    /// An analytic pmf covers too little mass to compare against.
    #[error("analytic pmf covers mass {covered}, need at least {required}")]
    InsufficientCoverage { covered: f64, required: f64 },

    /// The ruin-probability convolution series hit its term cap.
    #[error("convolution series hit the cap of {0} terms before tolerance")]
    SeriesCap(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors that indicate bad input rather than numeric trouble.
    pub fn is_domain(&self) -> bool {
        matches!(
            self,
            Error::Domain(_) | Error::GammaPole(_) | Error::Regime(_) | Error::ComplexRoots(_)
        )
    }
}

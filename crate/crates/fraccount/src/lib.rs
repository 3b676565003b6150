//! Counting processes subordinated to inverse stable clocks.
//!
//! The library evaluates probability laws of generalized counting processes
//! `M(t) = Σ_j j·N_j(t)` (independent Poisson streams of j-sized jumps) after
//! a time change by the inverse of a sum of independent stable subordinators,
//! e.g. `H(t) = H_1^{2ν}(t) + (2λ)^{1/ν} H_2^{ν}(t)` or its tempered
//! analogue. Everything needed to do that honestly ships together:
//!
//! * [`specialfn`] — Γ, incomplete Γ, Pochhammer, and the multi-index
//!   Mittag-Leffler series the closed-form pmfs are written in;
//! * [`laplace`] — forward Laplace quadrature, Talbot/Gaver-Stehfest
//!   inversion, discrete Caputo and tempered-Caputo operators, and residual
//!   checks of the governing fractional difference-differential equations;
//! * [`subordinators`] — exact-increment simulation of stable and tempered
//!   stable subordinators, composite clocks, and first-passage inverses;
//! * [`processes`] — pmf/pgf evaluators for the plain, fractional, and
//!   time-changed counting processes, including the multi-root closed form
//!   and a transform-inversion oracle that covers every regime;
//! * [`montecarlo`] — seeded path simulation and goodness-of-fit comparison
//!   of empirical laws against the analytic tables;
//! * [`risk`] — survival probabilities for the risk process driven by the
//!   counting process, via the convolution-series solution of the ruin
//!   integro-differential equation, plus a simulator to check it.

pub mod error;
// modules land in dependency order while the crate is being built out
pub mod laplace;
pub mod montecarlo;
pub mod processes;
pub mod risk;
pub mod specialfn;
pub mod subordinators;

pub use error::{Error, Result};

/// Version tag embedded in every serialized artifact (tables, reports).
pub const SCHEMA_VERSION: u32 = 1;

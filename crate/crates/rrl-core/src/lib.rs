//! Asymptotic risk of ridge and ridgeless least squares in the proportional
//! regime `p/n -> gamma`, together with the finite-sample machinery needed to
//! check the formulas by Monte Carlo.
//!
//! | module       | contents                                                       |
//! |--------------|----------------------------------------------------------------|
//! | `spectra`    | discrete spectral measures, model catalog, geometry extraction |
//! | `stieltjes`  | Marchenko-Pastur transforms and companion fixed points         |
//! | `risk_theory`| limiting bias/variance decompositions, closed forms            |
//! | `estimators` | ridge / min-norm fits, conditional risk, cross-validation      |
//! | `simulate`   | seeded data generators and Monte Carlo risk curves             |
//! | `nonlinear`  | block resolvents for random-feature models, Laurent variance   |
//!
//! Everything is deterministic: random draws are ChaCha8 streams keyed by
//! explicit seeds, and parallel reductions preserve ordering.

pub mod estimators;
pub mod nonlinear;
pub mod risk_theory;
pub mod simulate;
pub mod spectra;
pub mod stieltjes;

pub use spectra::{DiscreteSpectrum, GeometryPair, KappaMode, ModelSpec};

/// Crate-wide error type. Numerical routines fail loudly rather than return
/// poisoned values.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("model `{model}` has no spectral representation; {hint}")]
    NoSpectrum { model: &'static str, hint: &'static str },

    #[error("matrix is not symmetric: max |A - A^T| entry {defect:.3e} exceeds {tol:.1e}")]
    NotSymmetric { defect: f64, tol: f64 },

    #[error("matrix is not positive semidefinite: min eigenvalue {min_eig:.3e}")]
    NotPsd { min_eig: f64 },

    #[error("{what} requires the overparametrized regime, got gamma = {gamma}")]
    NotOverparametrized { what: &'static str, gamma: f64 },

    #[error("risk diverges at the interpolation boundary, gamma = {gamma} is within {band:.1e} of 1")]
    InterpolationBoundary { gamma: f64, band: f64 },

    #[error("{context}: no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { context: &'static str, iterations: usize, residual: f64 },

    #[error("{context}: bracket expansion found no sign change after {doublings} doublings")]
    NoBracket { context: &'static str, doublings: usize },

    #[error("spectrum is degenerate for {context}: {reason}")]
    DegenerateSpectrum { context: &'static str, reason: String },

    #[error("norm limit diverges: spectrum carries mass {mass:.3e} at zero with gamma = {gamma} < 1")]
    DivergentNorm { mass: f64, gamma: f64 },

    #[error("leave-one-out shortcut undefined: rank(X) = {rank} < n = {n} at lambda = 0")]
    RidgelessCvUndefined { rank: usize, n: usize },

    #[error("generalized cross-validation undefined at the ridgeless limit: trace(S)/n = 1")]
    GcvUndefined,

    #[error("leave-one-out denominator vanishes at observation {index}")]
    ZeroDenominator { index: usize },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch { context: &'static str, expected: usize, got: usize },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },

    #[error("evaluation point {point} lies inside the spectrum ({context})")]
    InSpectrum { point: String, context: &'static str },

    #[error("all {total} grid points failed; first error: {first}")]
    AllPointsFailed { total: usize, first: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Shorthand used by argument validators.
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}

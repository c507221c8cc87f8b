//! Optimal double-barrier impulse dividend strategies for spectrally
//! negative Lévy surplus processes killed at a level-dependent bankruptcy
//! intensity.
//!
//! The pipeline is:
//!
//! 1. [`levy`] — the surplus process and its Laplace exponent ψ, the right
//!    inverse Φ and the real roots of ψ(s) = q for (hyper)exponential jumps.
//! 2. [`scale`] — closed-form scale functions W_q, Z_q(·;Φ(s)) built from
//!    the roots by partial fractions.
//! 3. [`omega`] — the bankruptcy rate function ω and the generalised scale
//!    function H, solved from a second-kind Volterra equation on a grid.
//! 4. [`optimizer`] — the optimal barrier pair (c₁*, c₂*) via the reduction
//!    to one-dimensional minimisations of g₀ and g₁.
//! 5. [`policy`] — the analytic value function of a (c₁, c₂) strategy and
//!    numerical verification of the variational inequalities.
//! 6. [`sim`] — an independent Monte Carlo estimator of the same value for
//!    cross-validation.
//!
//! The `omega-dividends` binary exposes all of this behind a CLI; see
//! [`config`] for the run-configuration schema it consumes.

pub mod config;
pub mod levy;
pub mod numeric;
pub mod omega;
pub mod optimizer;
pub mod policy;
pub mod scale;
pub mod sim;

pub use config::RunConfig;
pub use levy::LevyModel;
pub use omega::{BankruptcyRate, OmegaScaleTable};
pub use optimizer::{optimize, BarrierPair, OptimizerDiagnostics};
pub use policy::ValueFunction;
pub use scale::ScaleBasis;
pub use sim::{simulate_value, SimConfig, SimMode};

/// Errors produced anywhere in the pipeline.
///
/// The CLI maps these onto exit codes: configuration and input problems
/// exit with 1, numeric-quality failures with 2, verification failures
/// with 3.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid model: {0}")]
    Model(String),
    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
    #[error("x_max too small: {0}")]
    XMaxTooSmall(String),
    #[error("optimizer diagnostic: {0}")]
    Optimizer(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("simulation fault: {0}")]
    Simulation(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

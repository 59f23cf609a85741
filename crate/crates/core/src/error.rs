//! Error types shared across the crate.

use thiserror::Error;

/// Invalid game parameters or out-of-range arguments.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum GameError {
    #[error("p_h must lie in (0, 1/2), got {0}")]
    ProbabilityOutOfRange(f64),
    #[error("delta must lie in (0, 1), got {0}")]
    DiscountOutOfRange(f64),
    #[error("costs must be strictly decreasing and nonnegative: {0}")]
    BadCosts(String),
    #[error("prior must be strictly positive and sum to one: {0}")]
    BadPrior(String),
    #[error("costs and prior must have equal positive length ({costs} vs {prior})")]
    LengthMismatch { costs: usize, prior: usize },
    #[error("{0}")]
    InvalidArgument(String),
    /// Operation needs every lying cost below one (non-ethical types only).
    #[error("operation requires all costs below 1, got max cost {0}")]
    RequiresCostsBelowOne(f64),
}

/// Failures of the occupation-measure linear program.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum LpError {
    #[error("feasible set is empty")]
    Infeasible,
    #[error("objective is unbounded")]
    Unbounded,
    #[error("invalid program: {0}")]
    InvalidProgram(String),
    #[error(transparent)]
    Game(#[from] GameError),
}

/// Failures of equilibrium/punishment machine construction or stepping.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum MachineError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("initial weights ({0:.6}, {1:.6}, {2:.6}) lie outside the equilibrium payoff polytope")]
    WeightsOutsidePolytope(f64, f64, f64),
    #[error("history is off the equilibrium path: {0}")]
    OffPath(String),
    #[error("belief update is not Bayes-consistent: {0}")]
    NonBayesian(String),
    #[error("reachable state graph exceeded the cap of {0} states")]
    StateExplosion(usize),
    #[error("no lie frequency on the search grid yields a valid punishment target")]
    NoPunishmentTarget,
    #[error("commitment payoff is not attainable for these parameters")]
    NotAttainable,
}

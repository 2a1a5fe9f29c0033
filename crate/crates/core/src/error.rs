use thiserror::Error;

use crate::ocp::OcpSolution;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// The adaptive step controller could not advance, or the vector field
    /// was evaluated outside its domain.
    #[error("integration failed at t = {time:.6e}: {reason}")]
    IntegrationFailure { time: f64, reason: String },

    /// A step inside a rollout failed.
    #[error("rollout failed at stage {index}: {source}")]
    Rollout {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("solver hit the iteration limit ({iterations}) with residual {residual:.3e}")]
    MaxIterationsExceeded {
        iterations: usize,
        residual: f64,
        best: Box<OcpSolution>,
    },

    #[error("objective is not finite at the initial guess")]
    NonFiniteObjective,

    #[error(
        "equilibrium reached: stage cost {stage_cost:.3e} is below the threshold {threshold:.3e}"
    )]
    EquilibriumReached { stage_cost: f64, threshold: f64 },

    #[error(
        "horizon cap {n_max} reached with alpha = {alpha_at_cap:.6} < alpha_bar = {alpha_bar} \
         ({solves} solves)"
    )]
    HorizonCapReached {
        n_max: usize,
        alpha_at_cap: f64,
        alpha_bar: f64,
        solves: usize,
    },

    #[error("auxiliary solve failed: {0}")]
    SolverFailure(Box<Error>),

    #[error("enumeration of {leaves} leaves exceeds the cap of {cap}")]
    EnumerationTooLarge { leaves: f64, cap: usize },

    #[error("Riccati recursion hit a singular innovation matrix at stage {stage}")]
    SingularInnovation { stage: usize },

    #[error("no feasible gamma for alpha_bar = {0}")]
    NoFeasibleGamma(f64),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Strips rollout/auxiliary wrappers to find the originating error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Rollout { source, .. } => source.root(),
            Error::SolverFailure(inner) => inner.root(),
            other => other,
        }
    }

    pub fn is_equilibrium(&self) -> bool {
        matches!(self.root(), Error::EquilibriumReached { .. })
    }
}

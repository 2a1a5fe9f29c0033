//! Nonlinear model predictive control with adaptively chosen optimization
//! horizons, driven by a posteriori and a priori suboptimality estimates.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapt;
pub mod bench;
pub mod cli;
pub mod closed_loop;
pub mod error;
pub mod estimate;
pub mod model;
pub mod ocp;

pub use adapt::{adapt_step, AdaptationConfig, AdaptationPlan, ShorteningMode};
pub use closed_loop::{
    run_adaptive, run_fixed, ClosedLoopTrace, StepRecord, StopRule, Termination,
};
pub use error::{Error, Result};
pub use model::SystemModel;
pub use ocp::{OcpSolution, OcpSolver, SolverOptions};

//! The ADAPD family and the baselines, over a shared iteration engine.

mod adapd;
mod baselines;
mod chebyshev;
mod config;
mod engine;
mod inner;
mod state;

use thiserror::Error;

pub use adapd::{adapd_init, AdapdSolver, DIVERGENCE_THRESHOLD};
pub use baselines::{DgdSolver, ProxGpdaSolver};
pub use chebyshev::{chebyshev_mix, chebyshev_poly, chebyshev_rate_bound, CommOperator};
pub use config::{
    default_mc_degree, lyapunov_c, lyapunov_c_hat, Budget, CommMode, InnerConfig, InnerMethod, Method, SolverConfig,
};
pub use engine::{run, RunOutcome, Solver, TraceOptions};
pub use inner::{inner_solve, InnerResult};
pub use state::AgentState;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("agent {agent}: inner solve reached residual {best_residual:.3e}, tolerance {tol:.3e}")]
    Inexact { agent: usize, best_residual: f64, tol: f64 },
    #[error("iterates diverged at iteration {k}")]
    Diverged { k: usize },
    #[error(transparent)]
    Topology(#[from] crate::topology::TopologyError),
}

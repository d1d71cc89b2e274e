use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::chebyshev::CommOperator;
use super::config::{InnerMethod, Method, SolverConfig};
use super::inner::inner_solve;
use super::state::AgentState;
use super::SolverError;
use crate::problems::{stacked_grad, ObjectiveOracle};
use crate::rng::{stream_rng, Stream};
use crate::topology::MixingMatrix;

/// Iterates whose largest entry exceeds this are treated as divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// `X = X₀ = x_start`, `Y = 0`, `Z̃ = 0` (trivially in the range of `√(I−W)`).
pub fn adapd_init(
    problem: &dyn ObjectiveOracle,
    w: &MixingMatrix,
    x_start: ArrayView2<f64>,
) -> Result<AgentState, SolverError> {
    let (n, p) = x_start.dim();
    if n != problem.n_agents() || n != w.n_agents() || p != problem.dim() {
        return Err(SolverError::Dimension(format!(
            "start is {n}×{p}, problem has {} agents in dimension {}, W has {} agents",
            problem.n_agents(),
            problem.dim(),
            w.n_agents()
        )));
    }
    Ok(AgentState::new(x_start))
}

/// ADAPD or ADAPD-OG over a communication operator `P` (plain `W`, a
/// Chebyshev polynomial of `W`, or `W^R`).
#[derive(Debug, Clone)]
pub struct AdapdSolver {
    pub state: AgentState,
    cfg: SolverConfig,
    op: CommOperator,
    lipschitz: Option<f64>,
    one_gradient: bool,
    rng: ChaCha8Rng,
}

impl AdapdSolver {
    pub fn new(
        problem: &dyn ObjectiveOracle,
        w: &MixingMatrix,
        x_start: ArrayView2<f64>,
        cfg: SolverConfig,
    ) -> Result<Self, SolverError> {
        cfg.validate().map_err(SolverError::Config)?;
        let one_gradient = match cfg.method {
            Method::Adapd => false,
            Method::AdapdOg => true,
            other => return Err(SolverError::Config(format!("{} is not an ADAPD method", other.name()))),
        };
        let state = adapd_init(problem, w, x_start)?;
        let op = CommOperator::new(w, cfg.comm)?;
        let lipschitz = cfg.lipschitz.or_else(|| problem.smoothness());
        if one_gradient {
            if let Some(l) = lipschitz {
                let bound = 1.0 / (2.0 * super::lyapunov_c_hat(op.rho()) * l);
                if cfg.eta >= bound {
                    log::debug!("eta = {} is above the one-gradient theory bound {bound:.3e}", cfg.eta);
                }
            }
        }
        let rng = stream_rng(cfg.seed, Stream::Minibatch);
        Ok(Self { state, cfg, op, lipschitz, one_gradient, rng })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn operator(&self) -> &CommOperator {
        &self.op
    }

    pub fn is_one_gradient(&self) -> bool {
        self.one_gradient
    }

    /// Communication rounds the next iteration will use.
    pub fn next_comm_cost(&self) -> u64 {
        if self.state.k == 0 {
            2 * self.op.rounds()
        } else {
            self.op.rounds()
        }
    }

    /// One full iteration: X, X₀, Y and Z̃ updates.
    pub fn step(&mut self, problem: &dyn ObjectiveOracle) -> Result<(), SolverError> {
        let eta = self.cfg.eta;
        let s = self.cfg.dual_scale;
        let k = self.state.k;
        let n = self.state.n_agents();

        let x_new = if self.one_gradient { self.forward_step(problem) } else { self.local_solves(problem)? };

        let st = &mut self.state;
        // W X₀ᵏ: an explicit exchange at k = 0, afterwards recovered locally
        // from the last two Z̃ values.
        let px0 = if k == 0 {
            st.comms += self.op.rounds();
            self.op.apply(st.x0.view())
        } else {
            &st.x0 - &((&st.ztilde - &st.ztilde_prev) * (eta / s))
        };
        let x0_new = (px0 + &x_new + &((&st.y - &st.ztilde) * eta)) * 0.5;
        let y_new = &st.y + &((&x_new - &x0_new) * (s / eta));
        let p_new = self.op.apply(x0_new.view());
        st.comms += self.op.rounds();
        let z_new = &st.ztilde + &((&x0_new - &p_new) * (s / eta));

        st.x_prev = std::mem::replace(&mut st.x, x_new);
        st.x0_prev = std::mem::replace(&mut st.x0, x0_new);
        st.y = y_new;
        st.ztilde_prev = std::mem::replace(&mut st.ztilde, z_new);
        st.k += 1;
        debug_assert_eq!(st.n_agents(), n);

        match st.max_abs() {
            Some(m) if m <= DIVERGENCE_THRESHOLD => Ok(()),
            _ => Err(SolverError::Diverged { k: st.k }),
        }
    }

    /// `X₀ᵏ − η(∇F(Xᵏ) + Yᵏ)`, with mini-batch gradients when configured.
    fn forward_step(&mut self, problem: &dyn ObjectiveOracle) -> Array2<f64> {
        let st = &mut self.state;
        let grad = match self.cfg.minibatch {
            None => stacked_grad(problem, st.x.view()),
            Some(b) => {
                let mut g = Array2::zeros(st.x.raw_dim());
                for (i, mut row) in g.axis_iter_mut(Axis(0)).enumerate() {
                    let m = problem.local_samples(i);
                    let idx = rand::seq::index::sample(&mut self.rng, m, b.min(m)).into_vec();
                    let gi = problem.batch_grad(i, st.x.row(i), &idx).unwrap_or_else(|| problem.grad(i, st.x.row(i)));
                    row.assign(&gi);
                }
                g
            }
        };
        st.grad_evals += st.n_agents() as u64;
        &st.x0 - &((grad + &st.y) * self.cfg.eta)
    }

    /// Per-agent inexact subproblem solves, in parallel.
    fn local_solves(&mut self, problem: &dyn ObjectiveOracle) -> Result<Array2<f64>, SolverError> {
        let st = &self.state;
        let n = st.n_agents();
        let tol = self.cfg.inner.tolerance(st.k + 1) / n as f64;
        let seeds: Vec<u64> = if self.cfg.inner.method == InnerMethod::Stochastic {
            (0..n).map(|_| self.rng.random()).collect()
        } else {
            vec![0; n]
        };
        let results: Vec<_> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut agent_rng = ChaCha8Rng::seed_from_u64(seeds[i]);
                inner_solve(
                    problem,
                    i,
                    st.x.row(i),
                    st.y.row(i),
                    st.x0.row(i),
                    self.cfg.eta,
                    tol,
                    &self.cfg.inner,
                    self.lipschitz,
                    Some(&mut agent_rng),
                    self.cfg.minibatch,
                )
            })
            .collect();
        let mut x_new = Array2::zeros(st.x.raw_dim());
        let mut evals = 0;
        for (i, r) in results.into_iter().enumerate() {
            let r = r?;
            if !r.converged {
                log::warn!("agent {i} inner solve stopped at residual {:.3e} > {tol:.3e}", r.residual_sq);
            }
            evals += r.grad_evals;
            x_new.row_mut(i).assign(&r.x);
        }
        self.state.grad_evals += evals;
        Ok(x_new)
    }
}

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

/// Iterate blocks of the ADAPD family, each `N×p`, plus the previous values
/// needed by the agent-view updates and by the diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub x: Array2<f64>,
    pub x_prev: Array2<f64>,
    pub x0: Array2<f64>,
    pub x0_prev: Array2<f64>,
    pub y: Array2<f64>,
    /// `Z̃ = √(I−W)Z`, the dual that can be exchanged over the graph.
    pub ztilde: Array2<f64>,
    pub ztilde_prev: Array2<f64>,
    pub k: usize,
    pub comms: u64,
    /// Gradient evaluations summed over agents.
    pub grad_evals: u64,
}

impl AgentState {
    /// `X = X₀ = x_start`, `Y = Z̃ = 0`, previous buffers equal to current.
    pub fn new(x_start: ArrayView2<f64>) -> Self {
        let zeros = Array2::zeros(x_start.raw_dim());
        Self {
            x: x_start.to_owned(),
            x_prev: x_start.to_owned(),
            x0: x_start.to_owned(),
            x0_prev: x_start.to_owned(),
            y: zeros.clone(),
            ztilde: zeros.clone(),
            ztilde_prev: zeros,
            k: 0,
            comms: 0,
            grad_evals: 0,
        }
    }

    pub fn n_agents(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Gradient evaluations per agent.
    pub fn grads_per_agent(&self) -> f64 {
        self.grad_evals as f64 / self.n_agents() as f64
    }

    /// Largest absolute entry over all blocks, or `None` if any is non-finite.
    pub fn max_abs(&self) -> Option<f64> {
        let mut m: f64 = 0.0;
        for block in [&self.x, &self.x0, &self.y, &self.ztilde] {
            for &v in block.iter() {
                if !v.is_finite() {
                    return None;
                }
                m = m.max(v.abs());
            }
        }
        Some(m)
    }
}

use ndarray::{s, Array1, Array2, ArrayView1};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{ObjectiveOracle, ProblemError, Result};
use crate::rng::{stream_rng, Stream};
use crate::topology::{build_geometric, Graph};

/// Variance of each target coordinate.
pub const TARGET_VARIANCE: f64 = 0.1;

/// Cooperative localization data: agent `i` at `ω_i` observes
/// `ξ_{i,t} = ‖x*[t] − ω_i‖² + e_{i,t}` for every target `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationInstance {
    /// `N×2`.
    pub agent_positions: Array2<f64>,
    /// `N_T×2`.
    pub targets: Array2<f64>,
    /// `N×N_T`, the `e_{i,t}` actually added.
    pub noise: Array2<f64>,
    /// `N×N_T`.
    pub measurements: Array2<f64>,
    pub sigma2: f64,
}

impl LocalizationInstance {
    pub fn from_parts(agent_positions: Array2<f64>, targets: Array2<f64>, noise: Array2<f64>, sigma2: f64) -> Self {
        let measurements = Array2::from_shape_fn(noise.raw_dim(), |(i, t)| {
            let dx = targets[[t, 0]] - agent_positions[[i, 0]];
            let dy = targets[[t, 1]] - agent_positions[[i, 1]];
            dx * dx + dy * dy + noise[[i, t]]
        });
        Self { agent_positions, targets, noise, measurements, sigma2 }
    }

    pub fn n_agents(&self) -> usize {
        self.agent_positions.nrows()
    }

    pub fn n_targets(&self) -> usize {
        self.targets.nrows()
    }

    /// Targets stacked as `(x*[1]ᵀ, …, x*[N_T]ᵀ)`.
    pub fn stacked_targets(&self) -> Array1<f64> {
        self.targets.iter().copied().collect()
    }
}

/// Agent positions from a geometric graph on `[−1, 1]²`, target coordinates
/// `~ N(0, 0.1)` and measurement noise `~ N(0, σ²)`, both from the noise
/// stream (targets first).
pub fn generate_localization_instance(
    n: usize,
    n_targets: usize,
    sigma2: f64,
    seed: u64,
    graph_radius: f64,
) -> Result<(Graph, LocalizationInstance)> {
    if n_targets == 0 {
        return Err(ProblemError::Dimension("need at least one target".into()));
    }
    if !(sigma2 >= 0.0) {
        return Err(ProblemError::Dimension(format!("noise variance {sigma2} must be non-negative")));
    }
    let (graph, positions) = build_geometric(n, graph_radius, seed)?;
    let mut rng = stream_rng(seed, Stream::Noise);
    let target_sd = TARGET_VARIANCE.sqrt();
    let targets = Array2::from_shape_fn((n_targets, 2), |_| {
        let z: f64 = StandardNormal.sample(&mut rng);
        target_sd * z
    });
    let noise_sd = sigma2.sqrt();
    let noise = Array2::from_shape_fn((n, n_targets), |_| {
        let z: f64 = StandardNormal.sample(&mut rng);
        noise_sd * z
    });
    Ok((graph, LocalizationInstance::from_parts(positions, targets, noise, sigma2)))
}

/// `f_i(x) = ¼ Σ_t (ξ_{i,t} − ‖x[t] − ω_i‖²)²` over stacked `x ∈ ℝ^{2N_T}`.
/// Not globally smooth, so no smoothness hint is given.
#[derive(Debug, Clone)]
pub struct LocalizationObjective {
    inst: LocalizationInstance,
}

impl LocalizationObjective {
    pub fn new(inst: LocalizationInstance) -> Self {
        Self { inst }
    }

    pub fn instance(&self) -> &LocalizationInstance {
        &self.inst
    }
}

impl ObjectiveOracle for LocalizationObjective {
    fn n_agents(&self) -> usize {
        self.inst.n_agents()
    }

    fn dim(&self) -> usize {
        2 * self.inst.n_targets()
    }

    fn value(&self, i: usize, x: ArrayView1<f64>) -> f64 {
        let w = self.inst.agent_positions.row(i);
        (0..self.inst.n_targets())
            .map(|t| {
                let d = &x.slice(s![2 * t..2 * t + 2]) - &w;
                let r = self.inst.measurements[[i, t]] - d.dot(&d);
                0.25 * r * r
            })
            .sum()
    }

    fn grad(&self, i: usize, x: ArrayView1<f64>) -> Array1<f64> {
        let w = self.inst.agent_positions.row(i);
        let mut g = Array1::zeros(self.dim());
        for t in 0..self.inst.n_targets() {
            let d = &x.slice(s![2 * t..2 * t + 2]) - &w;
            let r = self.inst.measurements[[i, t]] - d.dot(&d);
            g.slice_mut(s![2 * t..2 * t + 2]).assign(&(d * -r));
        }
        g
    }

    fn lower_bound(&self) -> Option<f64> {
        Some(0.0)
    }
}

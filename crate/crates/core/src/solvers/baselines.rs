//! Decentralized gradient descent and Prox-GPDA.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::adapd::DIVERGENCE_THRESHOLD;
use super::config::{Method, SolverConfig};
use super::SolverError;
use crate::problems::{stacked_grad, ObjectiveOracle};
use crate::topology::{Graph, MixingMatrix};

fn check_finite(x: &Array2<f64>, k: usize) -> Result<(), SolverError> {
    if x.iter().all(|v| v.is_finite() && v.abs() <= DIVERGENCE_THRESHOLD) {
        Ok(())
    } else {
        Err(SolverError::Diverged { k })
    }
}

/// `Xᵏ⁺¹ = WXᵏ − α_k ∇F(Xᵏ)`, `α_k = α₀/(k+1)^q`.
#[derive(Debug, Clone)]
pub struct DgdSolver {
    pub x: Array2<f64>,
    pub k: usize,
    pub comms: u64,
    pub grad_evals: u64,
    w: MixingMatrix,
    alpha0: f64,
    q: f64,
}

impl DgdSolver {
    pub fn new(w: &MixingMatrix, x_start: ArrayView2<f64>, cfg: &SolverConfig) -> Result<Self, SolverError> {
        cfg.validate().map_err(SolverError::Config)?;
        let Method::Dgd { alpha0, q } = cfg.method else {
            return Err(SolverError::Config("DGD solver needs a dgd method".into()));
        };
        if x_start.nrows() != w.n_agents() {
            return Err(SolverError::Dimension("start rows must match W".into()));
        }
        Ok(Self { x: x_start.to_owned(), k: 0, comms: 0, grad_evals: 0, w: w.clone(), alpha0, q })
    }

    pub fn step_size(&self, k: usize) -> f64 {
        self.alpha0 / ((k + 1) as f64).powf(self.q)
    }

    pub fn step(&mut self, problem: &dyn ObjectiveOracle) -> Result<(), SolverError> {
        let grad = stacked_grad(problem, self.x.view());
        self.x = self.w.apply(self.x.view()) - grad * self.step_size(self.k);
        self.k += 1;
        self.comms += 1;
        self.grad_evals += self.x.nrows() as u64;
        check_finite(&self.x, self.k)
    }
}

/// Linearized proximal primal-dual method on the edge formulation:
///
/// `Xᵏ⁺¹ = Xᵏ − (2βD)⁻¹(∇F(Xᵏ) + αᵏ + βL⁻Xᵏ)`, `αᵏ⁺¹ = αᵏ + βL⁻Xᵏ⁺¹`,
///
/// with `D` the degree matrix and `L⁻` the graph Laplacian. `L⁻Xᵏ⁺¹` is kept
/// for the next X update, so each iteration is one neighbor exchange (plus
/// one for `L⁻X⁰` at the start).
#[derive(Debug, Clone)]
pub struct ProxGpdaSolver {
    pub x: Array2<f64>,
    pub alpha: Array2<f64>,
    pub k: usize,
    pub comms: u64,
    pub grad_evals: u64,
    graph: Graph,
    degree: Array1<f64>,
    beta: f64,
    lx: Option<Array2<f64>>,
}

impl ProxGpdaSolver {
    pub fn new(graph: &Graph, x_start: ArrayView2<f64>, cfg: &SolverConfig) -> Result<Self, SolverError> {
        cfg.validate().map_err(SolverError::Config)?;
        let Method::ProxGpda { beta } = cfg.method else {
            return Err(SolverError::Config("Prox-GPDA solver needs a prox_gpda method".into()));
        };
        let n = graph.n_agents();
        if x_start.nrows() != n {
            return Err(SolverError::Dimension("start rows must match the graph".into()));
        }
        let degree = Array1::from_iter((0..n).map(|i| graph.degree(i) as f64));
        if degree.iter().any(|&d| d == 0.0) {
            return Err(SolverError::Config("Prox-GPDA needs every agent to have a neighbor".into()));
        }
        Ok(Self {
            x: x_start.to_owned(),
            alpha: Array2::zeros(x_start.raw_dim()),
            k: 0,
            comms: 0,
            grad_evals: 0,
            graph: graph.clone(),
            degree,
            beta,
            lx: None,
        })
    }

    pub fn next_comm_cost(&self) -> u64 {
        if self.lx.is_some() {
            1
        } else {
            2
        }
    }

    /// `L⁻X` by neighbor differences.
    fn laplacian_apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(x.raw_dim());
        for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
            row.scaled_add(self.degree[i], &x.row(i));
            for &j in self.graph.neighbors(i) {
                row.scaled_add(-1.0, &x.row(j));
            }
        }
        out
    }

    pub fn step(&mut self, problem: &dyn ObjectiveOracle) -> Result<(), SolverError> {
        let lx = match self.lx.take() {
            Some(lx) => lx,
            None => {
                self.comms += 1;
                self.laplacian_apply(self.x.view())
            }
        };
        let grad = stacked_grad(problem, self.x.view());
        let mut dir = grad + &self.alpha + &(lx * self.beta);
        let scale = self.degree.mapv(|d| 1.0 / (2.0 * self.beta * d));
        dir *= &scale.insert_axis(Axis(1));
        self.x -= &dir;
        let lx_new = self.laplacian_apply(self.x.view());
        self.comms += 1;
        self.alpha.scaled_add(self.beta, &lx_new);
        self.lx = Some(lx_new);
        self.k += 1;
        self.grad_evals += self.x.nrows() as u64;
        check_finite(&self.x, self.k)
    }
}

//! Per-agent objective oracles and the data they are built from.

mod libsvm;
mod localization;
mod logistic;
mod quadratic;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use thiserror::Error;

use crate::rng::{stream_rng, Stream};

pub use libsvm::{parse_libsvm, parse_libsvm_str, partition_uniform, synthetic_logistic, BinaryDataset};
pub use localization::{generate_localization_instance, LocalizationInstance, LocalizationObjective};
pub use logistic::LogisticNonconvex;
pub use quadratic::QuadraticConsensus;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("label {label} at line {line} is not one of -1, +1, 0, 1")]
    LabelDomain { line: usize, label: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Topology(#[from] crate::topology::TopologyError),
}

pub type Result<T> = std::result::Result<T, ProblemError>;

/// Local objectives `f_i : ℝᵖ → ℝ` of an `N`-agent consensus problem.
///
/// Implementations are immutable, so agents can be evaluated concurrently.
pub trait ObjectiveOracle: Send + Sync {
    fn n_agents(&self) -> usize;

    /// Decision dimension `p`.
    fn dim(&self) -> usize;

    fn value(&self, i: usize, x: ArrayView1<f64>) -> f64;

    fn grad(&self, i: usize, x: ArrayView1<f64>) -> Array1<f64>;

    /// Global Lipschitz constant of every `∇f_i`, when one exists.
    fn smoothness(&self) -> Option<f64> {
        None
    }

    /// Analytic lower bound on `f`, when known.
    fn lower_bound(&self) -> Option<f64> {
        None
    }

    /// Number of local samples held by agent `i` (1 for non-data problems).
    fn local_samples(&self, _i: usize) -> usize {
        1
    }

    /// Mini-batch gradient over local sample indices `batch`. `None` when the
    /// problem has no sample structure.
    fn batch_grad(&self, _i: usize, _x: ArrayView1<f64>, _batch: &[usize]) -> Option<Array1<f64>> {
        None
    }

    /// Exact minimizer of `f_i(x) + ⟨y, x − x0⟩ + ‖x − x0‖²/(2η)` if the
    /// problem admits one in closed form.
    fn solve_subproblem(
        &self,
        _i: usize,
        _y: ArrayView1<f64>,
        _x0: ArrayView1<f64>,
        _eta: f64,
    ) -> Option<Array1<f64>> {
        None
    }
}

/// Rows `∇f_i(x_i)`.
pub fn stacked_grad(problem: &dyn ObjectiveOracle, x: ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(x.raw_dim());
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        row.assign(&problem.grad(i, x.row(i)));
    }
    out
}

/// `(1/N) Σ_i f_i(x_i)`.
pub fn stacked_value(problem: &dyn ObjectiveOracle, x: ArrayView2<f64>) -> f64 {
    let n = problem.n_agents();
    (0..n).map(|i| problem.value(i, x.row(i))).sum::<f64>() / n as f64
}

/// `f(x) = (1/N) Σ_i f_i(x)`.
pub fn global_value(problem: &dyn ObjectiveOracle, x: ArrayView1<f64>) -> f64 {
    let n = problem.n_agents();
    (0..n).map(|i| problem.value(i, x)).sum::<f64>() / n as f64
}

/// `∇f(x) = (1/N) Σ_i ∇f_i(x)`.
pub fn global_grad(problem: &dyn ObjectiveOracle, x: ArrayView1<f64>) -> Array1<f64> {
    let n = problem.n_agents();
    let mut g = Array1::zeros(problem.dim());
    for i in 0..n {
        g += &problem.grad(i, x);
    }
    g / n as f64
}

/// Empirical smoothness estimate: the largest `‖∇f_i(x) − ∇f_i(y)‖/‖x − y‖`
/// over `samples` random pairs per agent drawn uniformly from
/// `[−half_width, half_width]ᵖ`, doubled.
pub fn estimate_smoothness(problem: &dyn ObjectiveOracle, half_width: f64, samples: usize, seed: u64) -> f64 {
    let mut rng = stream_rng(seed, Stream::Initialization);
    let p = problem.dim();
    let mut best: f64 = 0.0;
    for i in 0..problem.n_agents() {
        for _ in 0..samples {
            let x = Array1::from_shape_fn(p, |_| rng.random_range(-half_width..=half_width));
            let y = Array1::from_shape_fn(p, |_| rng.random_range(-half_width..=half_width));
            let dx = (&x - &y).mapv(|v| v * v).sum().sqrt();
            if dx == 0.0 {
                continue;
            }
            let dg = (&problem.grad(i, x.view()) - &problem.grad(i, y.view())).mapv(|v| v * v).sum().sqrt();
            best = best.max(dg / dx);
        }
    }
    2.0 * best
}

use ndarray::{Array1, ArrayView1, ArrayView2};

use super::{BinaryDataset, ObjectiveOracle, ProblemError, Result};
use crate::linalg::SymEigen;

/// Logistic loss with the sparsity-promoting non-convex penalty
/// `α Σ_d x_d²/(1 + x_d²)`:
///
/// `f_i(x) = (1/m_i) Σ_j log(1 + exp(−b_j⟨x, a_j⟩)) + α Σ_d x_d²/(1 + x_d²)`.
#[derive(Debug, Clone)]
pub struct LogisticNonconvex {
    data: BinaryDataset,
    alpha: f64,
    lipschitz: f64,
}

impl LogisticNonconvex {
    pub fn new(data: BinaryDataset, alpha: f64) -> Result<Self> {
        data.validate_partition()?;
        if !(alpha >= 0.0) {
            return Err(ProblemError::Dimension(format!("alpha = {alpha} must be non-negative")));
        }
        // σ_max²(A_i) from the Gram matrix; the penalty's second derivative
        // (2 − 6x²)/(1 + x²)³ is bounded by 2 in magnitude.
        let lipschitz = (0..data.n_agents())
            .map(|i| {
                let a = data.agent_features(i);
                let gram = a.t().dot(&a);
                SymEigen::new(gram.view()).max() / (4.0 * a.nrows() as f64)
            })
            .fold(0.0, f64::max)
            + 2.0 * alpha;
        Ok(Self { data, alpha, lipschitz })
    }

    pub fn data(&self) -> &BinaryDataset {
        &self.data
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    fn penalty(&self, x: ArrayView1<f64>) -> f64 {
        self.alpha * x.iter().map(|v| v * v / (1.0 + v * v)).sum::<f64>()
    }

    fn penalty_grad(&self, x: ArrayView1<f64>) -> Array1<f64> {
        x.mapv(|v| 2.0 * self.alpha * v / (1.0 + v * v).powi(2))
    }

    /// `(1/|rows|) Aᵀ c` with `c_j = −b_j σ(−b_j⟨x, a_j⟩)`.
    fn loss_grad(a: ArrayView2<f64>, b: ArrayView1<f64>, x: ArrayView1<f64>) -> Array1<f64> {
        let margins = a.dot(&x) * b;
        let coef = ndarray::Zip::from(&margins).and(&b).map_collect(|&z, &bj| -bj * sigmoid(-z));
        a.t().dot(&coef) / a.nrows() as f64
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + eᶻ)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl ObjectiveOracle for LogisticNonconvex {
    fn n_agents(&self) -> usize {
        self.data.n_agents()
    }

    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn value(&self, i: usize, x: ArrayView1<f64>) -> f64 {
        let a = self.data.agent_features(i);
        let b = self.data.agent_labels(i);
        let margins = a.dot(&x) * b;
        margins.iter().map(|&z| softplus(-z)).sum::<f64>() / a.nrows() as f64 + self.penalty(x)
    }

    fn grad(&self, i: usize, x: ArrayView1<f64>) -> Array1<f64> {
        Self::loss_grad(self.data.agent_features(i), self.data.agent_labels(i), x) + self.penalty_grad(x)
    }

    fn smoothness(&self) -> Option<f64> {
        Some(self.lipschitz)
    }

    fn lower_bound(&self) -> Option<f64> {
        Some(0.0)
    }

    fn local_samples(&self, i: usize) -> usize {
        self.data.partition[i].len()
    }

    fn batch_grad(&self, i: usize, x: ArrayView1<f64>, batch: &[usize]) -> Option<Array1<f64>> {
        let a = self.data.agent_features(i).select(ndarray::Axis(0), batch);
        let b = self.data.agent_labels(i).select(ndarray::Axis(0), batch);
        Some(Self::loss_grad(a.view(), b.view(), x) + self.penalty_grad(x))
    }
}

use ndarray::{Array1, Array2, ArrayView1, Axis};

use super::ObjectiveOracle;

/// `f_i(x) = (c_i/2)‖x − a_i‖²`, a closed-form reference problem.
///
/// With unit weights the consensus minimizer is the target mean and `L = 1`.
#[derive(Debug, Clone)]
pub struct QuadraticConsensus {
    targets: Array2<f64>,
    weights: Array1<f64>,
}

impl QuadraticConsensus {
    pub fn new(targets: Array2<f64>) -> Self {
        let n = targets.nrows();
        Self { targets, weights: Array1::ones(n) }
    }

    /// Per-agent curvatures `c_i > 0`.
    pub fn weighted(targets: Array2<f64>, weights: Array1<f64>) -> Self {
        assert_eq!(targets.nrows(), weights.len());
        assert!(weights.iter().all(|&c| c > 0.0), "quadratic weights must be positive");
        Self { targets, weights }
    }

    pub fn targets(&self) -> &Array2<f64> {
        &self.targets
    }

    /// `x* = Σ c_i a_i / Σ c_i`.
    pub fn minimizer(&self) -> Array1<f64> {
        let weighted = &self.targets * &self.weights.view().insert_axis(Axis(1));
        weighted.sum_axis(Axis(0)) / self.weights.sum()
    }
}

impl ObjectiveOracle for QuadraticConsensus {
    fn n_agents(&self) -> usize {
        self.targets.nrows()
    }

    fn dim(&self) -> usize {
        self.targets.ncols()
    }

    fn value(&self, i: usize, x: ArrayView1<f64>) -> f64 {
        let d = &x - &self.targets.row(i);
        0.5 * self.weights[i] * d.dot(&d)
    }

    fn grad(&self, i: usize, x: ArrayView1<f64>) -> Array1<f64> {
        (&x - &self.targets.row(i)) * self.weights[i]
    }

    fn smoothness(&self) -> Option<f64> {
        self.weights.iter().copied().reduce(f64::max)
    }

    fn lower_bound(&self) -> Option<f64> {
        let x = self.minimizer();
        let n = self.n_agents();
        Some((0..n).map(|i| self.value(i, x.view())).sum::<f64>() / n as f64)
    }

    fn solve_subproblem(&self, i: usize, y: ArrayView1<f64>, x0: ArrayView1<f64>, eta: f64) -> Option<Array1<f64>> {
        let c = self.weights[i];
        let num = &self.targets.row(i) * (eta * c) + &x0 - &(&y * eta);
        Some(num / (1.0 + eta * c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::global_grad;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn minimizer_is_mean() {
        let q = QuadraticConsensus::new(array![[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]]);
        assert_eq!(q.minimizer(), array![0.0, 0.0]);
        let q = QuadraticConsensus::new(Array2::from_elem((4, 3), 2.5));
        assert_eq!(q.minimizer(), array![2.5, 2.5, 2.5]);
        assert_eq!(q.smoothness(), Some(1.0));
    }

    #[test]
    fn mean_gradient_is_shift_from_mean() {
        let q = QuadraticConsensus::new(array![[1.0, 2.0], [3.0, -1.0]]);
        let x = array![0.5, 0.5];
        let g = global_grad(&q, x.view());
        assert_eq!(g, &x - &array![2.0, 0.5]);
    }

    #[test]
    fn subproblem_closed_form_has_zero_residual() {
        let q = QuadraticConsensus::weighted(array![[1.0, -2.0]], array![3.0]);
        let y = array![0.3, 0.1];
        let x0 = array![-1.0, 4.0];
        let eta = 0.2;
        let x = q.solve_subproblem(0, y.view(), x0.view(), eta).unwrap();
        let r = q.grad(0, x.view()) + &y + (&x - &x0) / eta;
        for v in r.iter() {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-12);
        }
    }
}

//! Small dense linear-algebra helpers shared by the topology and diagnostics
//! modules. Eigendecompositions are delegated to nalgebra.

use ndarray::{Array1, Array2, ArrayView2, Axis};

/// Eigendecomposition of a symmetric matrix, eigenvalues sorted ascending and
/// eigenvectors stored as columns in the matching order.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

impl SymEigen {
    /// Decomposes the symmetric part `(a + aᵀ)/2`.
    pub fn new(a: ArrayView2<f64>) -> Self {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "eigendecomposition needs a square matrix");
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| 0.5 * (a[[i, j]] + a[[j, i]]));
        let eig = m.symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let values = Array1::from_iter(order.iter().map(|&i| eig.eigenvalues[i]));
        let mut vectors = Array2::zeros((n, n));
        for (col, &src) in order.iter().enumerate() {
            for row in 0..n {
                vectors[[row, col]] = eig.eigenvectors[(row, src)];
            }
        }
        Self { values, vectors }
    }

    /// `V f(Λ) Vᵀ` for a scalar map applied to each eigenvalue.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Array2<f64> {
        let scaled = &self.vectors * &self.values.mapv(f).insert_axis(Axis(0));
        scaled.dot(&self.vectors.t())
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }
}

/// Squared Frobenius norm.
pub fn fro2(a: ArrayView2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum()
}

pub fn fro(a: ArrayView2<f64>) -> f64 {
    fro2(a).sqrt()
}

/// Frobenius inner product.
pub fn inner(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Row mean `(1/N) eᵀ A` as a vector.
pub fn row_mean(a: ArrayView2<f64>) -> Array1<f64> {
    a.mean_axis(Axis(0)).expect("matrix with at least one row")
}

/// `A − (1/N) e eᵀ A`.
pub fn deviation_from_mean(a: ArrayView2<f64>) -> Array2<f64> {
    let mean = row_mean(a);
    &a - &mean.insert_axis(Axis(0))
}

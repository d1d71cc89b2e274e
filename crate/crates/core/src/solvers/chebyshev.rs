//! Chebyshev-accelerated mixing and the communication operator used by the
//! ADAPD family.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::config::{default_mc_degree, CommMode};
use crate::linalg::row_mean;
use crate::topology::{power_matrix, MixingMatrix, TopologyError, DEGENERATE_GAP_TOL};

/// Ratios `θ_r = μ_{r−1}/μ_r` of the Chebyshev recursion
/// `μ₀ = 1, μ₁ = 1/ρ, μ_{r+1} = (2/ρ)μ_r − μ_{r−1}`, for `r = 1..=R`.
///
/// Working with ratios avoids overflow of `μ_r ~ ρ^{−r}` at large `R`.
fn mu_ratios(rho: f64, degree: usize) -> Vec<f64> {
    let mut theta = Vec::with_capacity(degree);
    theta.push(rho);
    for r in 1..degree {
        let prev = theta[r - 1];
        theta.push(1.0 / (2.0 / rho - prev));
    }
    theta
}

/// `P(W, R)·A⁰` for the degree-`R` scaled Chebyshev polynomial
/// `P(λ) = T_R(λ/ρ)/T_R(1/ρ)`. Row means are preserved; costs `R` rounds.
///
/// `R = 1` returns `W·A⁰`. `ρ = 0` returns the exact row average.
pub fn chebyshev_mix(w: &MixingMatrix, a0: ArrayView2<f64>, degree: usize) -> Result<Array2<f64>, TopologyError> {
    assert!(degree >= 1, "Chebyshev degree must be >= 1");
    let rho = w.rho();
    if rho >= 1.0 - DEGENERATE_GAP_TOL {
        return Err(TopologyError::DegenerateSpectrum { rho });
    }
    if rho == 0.0 {
        let mean = row_mean(a0);
        return Ok(mean.insert_axis(Axis(0)).broadcast(a0.raw_dim()).unwrap().to_owned());
    }
    let theta = mu_ratios(rho, degree);
    let mut prev = a0.to_owned();
    let mut cur = w.apply(a0);
    for r in 1..degree {
        // θ_{r+1} = μ_r/μ_{r+1}
        let next_ratio = 1.0 / (2.0 / rho - theta[r - 1]);
        let wa = w.apply(cur.view());
        let next = wa * (2.0 / rho * next_ratio) - &prev * (theta[r - 1] * next_ratio);
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// Scalar value of the polynomial used by [`chebyshev_mix`] at eigenvalue `λ`.
pub fn chebyshev_poly(lambda: f64, rho: f64, degree: usize) -> f64 {
    if rho == 0.0 {
        return if (lambda - 1.0).abs() < 1e-12 { 1.0 } else { 0.0 };
    }
    let theta = mu_ratios(rho, degree);
    let mut prev = 1.0;
    let mut cur = lambda;
    for r in 1..degree {
        let next_ratio = 1.0 / (2.0 / rho - theta[r - 1]);
        let next = 2.0 / rho * next_ratio * lambda * cur - theta[r - 1] * next_ratio * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Contraction guaranteed by the Chebyshev bound, `2(1 − √(1−ρ))^R`.
pub fn chebyshev_rate_bound(rho: f64, degree: usize) -> f64 {
    2.0 * (1.0 - (1.0 - rho).sqrt()).powi(degree as i32)
}

#[derive(Debug, Clone)]
enum OpKind {
    Single,
    Chebyshev { degree: usize },
    Power { degree: usize, matrix: MixingMatrix },
}

/// The linear operator `P` standing in for `W` in the X0 and Z̃ updates,
/// together with its communication cost per application.
#[derive(Debug, Clone)]
pub struct CommOperator {
    base: MixingMatrix,
    kind: OpKind,
}

impl CommOperator {
    pub fn single(w: &MixingMatrix) -> Self {
        Self { base: w.clone(), kind: OpKind::Single }
    }

    pub fn new(w: &MixingMatrix, mode: CommMode) -> Result<Self, TopologyError> {
        let kind = match mode {
            CommMode::Single => OpKind::Single,
            CommMode::Chebyshev { degree } => {
                OpKind::Chebyshev { degree: degree.unwrap_or_else(|| default_mc_degree(w.rho())) }
            }
            CommMode::Power { degree } => {
                let degree = degree.unwrap_or_else(|| default_mc_degree(w.rho()));
                OpKind::Power { degree, matrix: power_matrix(w, degree)? }
            }
        };
        if let OpKind::Chebyshev { .. } = kind {
            if w.rho() >= 1.0 - DEGENERATE_GAP_TOL {
                return Err(TopologyError::DegenerateSpectrum { rho: w.rho() });
            }
        }
        Ok(Self { base: w.clone(), kind })
    }

    pub fn base(&self) -> &MixingMatrix {
        &self.base
    }

    /// Neighbor rounds per application.
    pub fn rounds(&self) -> u64 {
        match &self.kind {
            OpKind::Single => 1,
            OpKind::Chebyshev { degree } | OpKind::Power { degree, .. } => *degree as u64,
        }
    }

    /// Measured `‖P − (1/N)eeᵀ‖₂`: the largest `|p(λ)|` over all but the top
    /// eigenvalue of `W`.
    pub fn rho(&self) -> f64 {
        match &self.kind {
            OpKind::Single => self.base.rho(),
            OpKind::Power { matrix, .. } => matrix.rho(),
            OpKind::Chebyshev { .. } => {
                let p = self.eigenvalues();
                p.iter().take(p.len() - 1).fold(0.0, |m: f64, v| m.max(v.abs()))
            }
        }
    }

    /// Recorded effective `ρ`: `ρ`, `2(1 − √(1−ρ))^R` or `ρ^R`.
    pub fn effective_rho(&self) -> f64 {
        let rho = self.base.rho();
        match &self.kind {
            OpKind::Single => rho,
            OpKind::Chebyshev { degree } => chebyshev_rate_bound(rho, *degree),
            OpKind::Power { degree, .. } => rho.powi(*degree as i32),
        }
    }

    pub fn apply(&self, a: ArrayView2<f64>) -> Array2<f64> {
        match &self.kind {
            OpKind::Single => self.base.apply(a),
            OpKind::Chebyshev { degree } => {
                chebyshev_mix(&self.base, a, *degree).expect("spectrum checked at construction")
            }
            OpKind::Power { matrix, .. } => {
                let mut out = a.to_owned();
                for _ in 0..matrix.rounds() {
                    out = self.base.apply(out.view());
                }
                out
            }
        }
    }

    /// Eigenvalues of `P` in the eigenbasis of `W` (`base().eigen().vectors`).
    pub fn eigenvalues(&self) -> Array1<f64> {
        let values = &self.base.eigen().values;
        match &self.kind {
            OpKind::Single => values.clone(),
            OpKind::Chebyshev { degree } => values.mapv(|l| chebyshev_poly(l, self.base.rho(), *degree)),
            OpKind::Power { degree, .. } => values.mapv(|l| l.powi(*degree as i32)),
        }
    }

    /// `V g(p(Λ)) Vᵀ` for a scalar map `g` of the eigenvalues of `P`.
    pub fn spectral_map(&self, g: impl Fn(f64) -> f64) -> Array2<f64> {
        let eig = self.base.eigen();
        let mapped = self.eigenvalues().mapv(g);
        let scaled = &eig.vectors * &mapped.insert_axis(Axis(0));
        scaled.dot(&eig.vectors.t())
    }
}

//! Metrics evaluated on iterates: stationarity, consensus error, Lyapunov
//! functions and dual-relation residuals.
//!
//! `F(X)` inside the Lyapunov functions is the stacked objective
//! `Σ_i f_i(x_i)`, the function the solvers actually descend.

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::linalg::{deviation_from_mean, fro, fro2, inner, row_mean};
use crate::problems::{global_grad, global_value, stacked_grad, stacked_value, LocalizationInstance, ObjectiveOracle};
use crate::solvers::{lyapunov_c, lyapunov_c_hat, AgentState, CommOperator};

/// One row of a solver trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    pub comms: u64,
    /// Cumulative gradient evaluations per agent.
    pub grads: f64,
    /// `mean_grad_norm2 + consensus_err`.
    pub stationarity: f64,
    pub consensus_err: f64,
    pub mean_grad_norm2: f64,
    /// `(1/N) Σ_i f_i(x_i)`.
    #[serde(rename = "objective_F")]
    pub objective_f: f64,
    /// `f(x̄)`.
    pub objective_fbar: f64,
    pub lyapunov: Option<f64>,
    pub dual_residual: Option<f64>,
    pub wall_time_s: Option<f64>,
    /// Localization only; kept last so the other columns have fixed positions.
    pub target_distance: Option<f64>,
}

/// Parts of the stationarity violation at `X`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stationarity {
    pub mean_grad_norm2: f64,
    pub consensus_err: f64,
}

impl Stationarity {
    pub fn total(&self) -> f64 {
        self.mean_grad_norm2 + self.consensus_err
    }
}

/// `‖(1/N) Σ_i ∇f_i(x̄)‖² + ‖X − X̄‖²_F` split into its two terms.
pub fn stationarity_parts(x: ArrayView2<f64>, problem: &dyn ObjectiveOracle) -> Stationarity {
    let xbar = row_mean(x);
    let g = global_grad(problem, xbar.view());
    Stationarity { mean_grad_norm2: g.dot(&g), consensus_err: fro2(deviation_from_mean(x).view()) }
}

pub fn stationarity_violation(x: ArrayView2<f64>, problem: &dyn ObjectiveOracle) -> f64 {
    stationarity_parts(x, problem).total()
}

/// Fills every field of a [`TraceRecord`] that depends only on `X`.
pub fn base_record(k: usize, comms: u64, grads: f64, x: ArrayView2<f64>, problem: &dyn ObjectiveOracle) -> TraceRecord {
    let s = stationarity_parts(x, problem);
    let xbar = row_mean(x);
    TraceRecord {
        k,
        comms,
        grads,
        stationarity: s.total(),
        consensus_err: s.consensus_err,
        mean_grad_norm2: s.mean_grad_norm2,
        objective_f: stacked_value(problem, x),
        objective_fbar: global_value(problem, xbar.view()),
        lyapunov: None,
        dual_residual: None,
        wall_time_s: None,
        target_distance: None,
    }
}

/// `√(I − P)` from the cached eigendecomposition, with tiny negative
/// eigenvalues of `I − P` (magnitude ≤ 1e−12) clamped to zero.
pub fn sqrt_i_minus(op: &CommOperator) -> Array2<f64> {
    op.spectral_map(|p| {
        let v = 1.0 - p;
        if v < 0.0 && v >= -1e-12 {
            0.0
        } else {
            v.sqrt()
        }
    })
}

/// `L_η(X, X₀; Y, Z)` with `⟨Z, √(I−P)X₀⟩` evaluated as `⟨Z̃, X₀⟩`.
pub fn augmented_lagrangian(state: &AgentState, problem: &dyn ObjectiveOracle, sqrt_lap: &Array2<f64>, eta: f64) -> f64 {
    let n = problem.n_agents();
    let f_sum: f64 = stacked_value(problem, state.x.view()) * n as f64;
    let gap = &state.x - &state.x0;
    let s_x0 = sqrt_lap.dot(&state.x0);
    f_sum + inner(state.y.view(), gap.view()) + fro2(gap.view()) / (2.0 * eta) + inner(state.ztilde.view(), state.x0.view())
        + fro2(s_x0.view()) / (2.0 * eta)
}

/// `Φ = L_η + (C/2η)‖√(I−P)X₀‖² + (C/η)‖X₀ᵏ − X₀ᵏ⁻¹‖²` with `C = 28/(1−ρ)²`.
pub fn lyapunov_adapd(state: &AgentState, problem: &dyn ObjectiveOracle, op: &CommOperator, eta: f64, rho: f64) -> f64 {
    let c = lyapunov_c(rho);
    let s = sqrt_i_minus(op);
    let s_x0 = s.dot(&state.x0);
    let dx0 = &state.x0 - &state.x0_prev;
    augmented_lagrangian(state, problem, &s, eta) + c / (2.0 * eta) * fro2(s_x0.view()) + c / eta * fro2(dx0.view())
}

/// Weight of `‖Xᵏ − Xᵏ⁻¹‖²` in the one-gradient Lyapunov function:
/// `(4L²(1−ρ)η + 8L²η + ĈL(1−ρ)) / (2(1−ρ))`.
pub fn og_difference_weight(l: f64, rho: f64, eta: f64) -> f64 {
    let gap = 1.0 - rho;
    (4.0 * l * l * gap * eta + 8.0 * l * l * eta + lyapunov_c_hat(rho) * l * gap) / (2.0 * gap)
}

/// `Φ̂ = L_η + (Ĉ/2η)‖√(I−P)X₀‖² + (Ĉ/η)‖ΔX₀‖² + κ‖ΔX‖²` with `Ĉ = 16/(1−ρ)²`.
pub fn lyapunov_og(state: &AgentState, problem: &dyn ObjectiveOracle, op: &CommOperator, eta: f64, rho: f64, l: f64) -> f64 {
    let c = lyapunov_c_hat(rho);
    let s = sqrt_i_minus(op);
    let s_x0 = s.dot(&state.x0);
    let dx0 = &state.x0 - &state.x0_prev;
    let dx = &state.x - &state.x_prev;
    augmented_lagrangian(state, problem, &s, eta)
        + c / (2.0 * eta) * fro2(s_x0.view())
        + c / eta * fro2(dx0.view())
        + og_difference_weight(l, rho, eta) * fro2(dx.view())
}

/// Slack factor `c` in `Φᵏ⁺¹ ≤ Φᵏ + c·ε_k`:
/// `((1−ρ) + (32L + 16L(1−ρ))η + 4C(1−ρ)) / (2L(1−ρ))`.
pub fn lyapunov_slack(l: f64, rho: f64, eta: f64) -> f64 {
    let gap = 1.0 - rho;
    (gap + (32.0 * l + 16.0 * l * gap) * eta + 4.0 * lyapunov_c(rho) * gap) / (2.0 * l * gap)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualRelation {
    /// `Z̃ᵏ = Yᵏ − (1/η)P(X₀ᵏ − X₀ᵏ⁻¹)`.
    Adapd,
    /// `Yᵏ = −∇F(Xᵏ⁻¹) − (1/η)(X₀ᵏ − X₀ᵏ⁻¹)`.
    OneGradient,
}

/// Frobenius defect of the dual relation divided by `max(1, ‖Yᵏ‖_F)`.
/// Meaningful for `k ≥ 1` with unit dual scale.
pub fn dual_relation_residual(
    state: &AgentState,
    op: &CommOperator,
    eta: f64,
    relation: DualRelation,
    problem: &dyn ObjectiveOracle,
) -> f64 {
    let dx0 = &state.x0 - &state.x0_prev;
    let defect = match relation {
        DualRelation::Adapd => &state.ztilde - &state.y + &(op.apply(dx0.view()) / eta),
        DualRelation::OneGradient => &state.y + &stacked_grad(problem, state.x_prev.view()) + &(dx0 / eta),
    };
    fro(defect.view()) / fro(state.y.view()).max(1.0)
}

/// Largest column of `|eᵀZ̃|`.
pub fn ztilde_column_sums(state: &AgentState) -> f64 {
    state.ztilde.sum_axis(ndarray::Axis(0)).iter().fold(0.0, |m: f64, v| m.max(v.abs()))
}

/// `‖x̄ − vec(x*)‖₂`.
pub fn target_distance(x: ArrayView2<f64>, inst: &LocalizationInstance) -> Result<f64, String> {
    let truth: Array1<f64> = inst.stacked_targets();
    if x.ncols() != truth.len() {
        return Err(format!("iterate has {} columns, instance needs {}", x.ncols(), truth.len()));
    }
    let d = row_mean(x) - truth;
    Ok(d.dot(&d).sqrt())
}

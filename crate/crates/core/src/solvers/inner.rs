//! Local subproblem solvers for
//! `g(x) = f_i(x) + ⟨y, x − x0⟩ + ‖x − x0‖²/(2η)`.

use ndarray::{Array1, ArrayView1};
use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;

use super::config::{InnerConfig, InnerMethod};
use super::SolverError;
use crate::problems::ObjectiveOracle;

#[derive(Debug, Clone, PartialEq)]
pub struct InnerResult {
    pub x: Array1<f64>,
    /// `‖∇g(x)‖²`.
    pub residual_sq: f64,
    pub iterations: usize,
    pub grad_evals: u64,
    /// False when best-effort mode returned a point above tolerance.
    pub converged: bool,
}

struct Subproblem<'a> {
    problem: &'a dyn ObjectiveOracle,
    i: usize,
    y: ArrayView1<'a, f64>,
    x0: ArrayView1<'a, f64>,
    eta: f64,
}

impl Subproblem<'_> {
    fn value(&self, x: ArrayView1<f64>) -> f64 {
        let d = &x - &self.x0;
        self.problem.value(self.i, x) + self.y.dot(&d) + d.dot(&d) / (2.0 * self.eta)
    }

    fn grad_from(&self, x: ArrayView1<f64>, local: Array1<f64>) -> Array1<f64> {
        local + &self.y + &((&x - &self.x0) / self.eta)
    }

    fn grad(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.grad_from(x, self.problem.grad(self.i, x))
    }
}

fn norm2(v: &Array1<f64>) -> f64 {
    v.dot(v)
}

/// Approximately minimizes the agent-`i` subproblem, warm-started at `x_init`,
/// until `‖∇f_i(x) + y + (x − x0)/η‖² ≤ tol`.
///
/// `lipschitz` is the smoothness of `f_i` if known; otherwise the step is
/// found by backtracking.
#[allow(clippy::too_many_arguments)]
pub fn inner_solve(
    problem: &dyn ObjectiveOracle,
    i: usize,
    x_init: ArrayView1<f64>,
    y: ArrayView1<f64>,
    x0: ArrayView1<f64>,
    eta: f64,
    tol: f64,
    cfg: &InnerConfig,
    lipschitz: Option<f64>,
    rng: Option<&mut ChaCha8Rng>,
    batch: Option<usize>,
) -> Result<InnerResult, SolverError> {
    let sub = Subproblem { problem, i, y, x0, eta };
    match cfg.method {
        InnerMethod::Exact => {
            let x = problem
                .solve_subproblem(i, y, x0, eta)
                .ok_or_else(|| SolverError::Config("problem has no closed-form subproblem solution".into()))?;
            let residual_sq = norm2(&sub.grad(x.view()));
            Ok(InnerResult { x, residual_sq, iterations: 0, grad_evals: 1, converged: true })
        }
        InnerMethod::Stochastic => {
            let rng = rng.ok_or_else(|| SolverError::Config("stochastic inner solver needs a rng".into()))?;
            Ok(stochastic(&sub, x_init, cfg.max_iters, lipschitz, rng, batch))
        }
        InnerMethod::Fista | InnerMethod::GradientDescent => {
            let accelerated = cfg.method == InnerMethod::Fista;
            let result = first_order(&sub, x_init, tol, cfg.max_iters, lipschitz, accelerated);
            if result.converged || cfg.best_effort {
                Ok(result)
            } else {
                Err(SolverError::Inexact { agent: i, best_residual: result.residual_sq, tol })
            }
        }
    }
}

fn first_order(
    sub: &Subproblem<'_>,
    x_init: ArrayView1<f64>,
    tol: f64,
    max_iters: usize,
    lipschitz: Option<f64>,
    accelerated: bool,
) -> InnerResult {
    let mut evals = 0u64;
    // Step 1/(L + 1/η) when L is known; otherwise backtracking from 2/η.
    let mut lg = lipschitz.map_or(2.0 / sub.eta, |l| l + 1.0 / sub.eta);
    let mut x = x_init.to_owned();
    let mut gx_val = sub.value(x.view());
    let mut point = x.clone();
    let mut t: f64 = 1.0;
    let mut best = (f64::INFINITY, x.clone());

    for it in 0..max_iters {
        let g = sub.grad(point.view());
        evals += 1;
        let r2 = norm2(&g);
        if r2 < best.0 {
            best = (r2, point.clone());
        }
        if r2 <= tol {
            return InnerResult { x: point, residual_sq: r2, iterations: it, grad_evals: evals, converged: true };
        }
        if !r2.is_finite() {
            break;
        }
        let point_val = sub.value(point.view());
        let mut next;
        loop {
            next = &point - &(&g / lg);
            let d = &next - &point;
            let upper = point_val + g.dot(&d) + 0.5 * lg * d.dot(&d);
            let next_val = sub.value(next.view());
            if next_val <= upper + 1e-12 * upper.abs().max(1.0) || lg > 1e300 {
                break;
            }
            lg *= 2.0;
        }
        let next_val = sub.value(next.view());
        if accelerated {
            if next_val > gx_val {
                // Restart: drop momentum and step again from the last iterate.
                t = 1.0;
                point = x.clone();
                continue;
            }
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            point = &next + &((&next - &x) * ((t - 1.0) / t_next));
            t = t_next;
        } else {
            point = next.clone();
        }
        x = next;
        gx_val = next_val;
    }
    InnerResult { x: best.1, residual_sq: best.0, iterations: max_iters, grad_evals: evals, converged: false }
}

/// Fixed number of (mini-batch) gradient steps with step `1/(L + 1/η)`.
fn stochastic(
    sub: &Subproblem<'_>,
    x_init: ArrayView1<f64>,
    steps: usize,
    lipschitz: Option<f64>,
    rng: &mut ChaCha8Rng,
    batch: Option<usize>,
) -> InnerResult {
    let step = 1.0 / (lipschitz.unwrap_or(0.0) + 1.0 / sub.eta);
    let mut x = x_init.to_owned();
    let local_n = sub.problem.local_samples(sub.i);
    for _ in 0..steps {
        let local = match batch {
            Some(b) => {
                let idx = sample(rng, local_n, b.min(local_n)).into_vec();
                sub.problem
                    .batch_grad(sub.i, x.view(), &idx)
                    .unwrap_or_else(|| sub.problem.grad(sub.i, x.view()))
            }
            None => sub.problem.grad(sub.i, x.view()),
        };
        let g = sub.grad_from(x.view(), local);
        x = &x - &(g * step);
    }
    InnerResult { x, residual_sq: f64::NAN, iterations: steps, grad_evals: steps as u64, converged: true }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{partition_uniform, synthetic_logistic, LogisticNonconvex, QuadraticConsensus};
    use ndarray::array;

    fn quad() -> QuadraticConsensus {
        QuadraticConsensus::new(array![[1.0, -2.0, 0.5], [0.0, 3.0, -1.0]])
    }

    #[test]
    fn fista_lands_on_closed_form() {
        let q = quad();
        let (y, x0, eta) = (array![0.2, -0.1, 0.4], array![2.0, 0.0, 1.0], 0.5);
        let exact = q.solve_subproblem(0, y.view(), x0.view(), eta).unwrap();
        for method in [InnerMethod::Fista, InnerMethod::GradientDescent] {
            let cfg = InnerConfig { method, ..Default::default() };
            let tol: f64 = 1e-14;
            let r = inner_solve(&q, 0, x0.view(), y.view(), x0.view(), eta, tol, &cfg, Some(1.0), None, None).unwrap();
            assert!(r.residual_sq <= tol);
            // g is (1 + 1/η)-strongly convex, so ‖x − x̂‖ ≤ ‖∇g‖/(1 + 1/η) ≤ √tol.
            let err = (&r.x - &exact).mapv(|v| v * v).sum().sqrt();
            assert!(err <= tol.sqrt(), "{method:?}: {err}");
        }
    }

    #[test]
    fn stationary_start_returns_immediately() {
        let q = quad();
        let a0 = q.targets().row(0).to_owned();
        let y = Array1::zeros(3);
        let cfg = InnerConfig::default();
        let r = inner_solve(&q, 0, a0.view(), y.view(), a0.view(), 0.3, 0.0, &cfg, Some(1.0), None, None).unwrap();
        assert_eq!(r.residual_sq, 0.0);
        assert_eq!(r.x, a0);
        assert_eq!(r.grad_evals, 1);
    }

    #[test]
    fn backtracking_handles_unknown_smoothness() {
        let data = partition_uniform(&synthetic_logistic(80, 6, 1), 2, 0).unwrap();
        let f = LogisticNonconvex::new(data, 0.5).unwrap();
        let (y, x0) = (Array1::from_elem(6, 0.1), Array1::from_elem(6, -0.3));
        let cfg = InnerConfig::default();
        let r = inner_solve(&f, 1, x0.view(), y.view(), x0.view(), 0.5, 1e-12, &cfg, None, None, None).unwrap();
        assert!(r.converged && r.residual_sq <= 1e-12);
    }

    #[test]
    fn failure_is_reported_unless_best_effort() {
        let q = quad();
        let (y, x0) = (Array1::zeros(3), Array1::from_elem(3, 10.0));
        let mut cfg = InnerConfig { max_iters: 1, ..Default::default() };
        let err = inner_solve(&q, 1, x0.view(), y.view(), x0.view(), 1.0, 1e-20, &cfg, Some(1.0), None, None);
        assert!(matches!(err, Err(SolverError::Inexact { agent: 1, .. })));
        cfg.best_effort = true;
        let r = inner_solve(&q, 1, x0.view(), y.view(), x0.view(), 1.0, 1e-20, &cfg, Some(1.0), None, None).unwrap();
        assert!(!r.converged && r.residual_sq.is_finite());
    }

    #[test]
    fn exact_requires_closed_form() {
        let data = partition_uniform(&synthetic_logistic(20, 2, 1), 2, 0).unwrap();
        let f = LogisticNonconvex::new(data, 0.0).unwrap();
        let z = Array1::zeros(2);
        let cfg = InnerConfig { method: InnerMethod::Exact, ..Default::default() };
        assert!(inner_solve(&f, 0, z.view(), z.view(), z.view(), 0.1, 1.0, &cfg, None, None, None).is_err());
    }
}

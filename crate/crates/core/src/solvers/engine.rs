//! Shared iteration loop: budget enforcement and trace emission.

use std::time::Instant;

use ndarray::{Array2, ArrayView2};

use super::adapd::AdapdSolver;
use super::baselines::{DgdSolver, ProxGpdaSolver};
use super::config::{Budget, Method, SolverConfig};
use super::SolverError;
use crate::diagnostics::{
    base_record, dual_relation_residual, lyapunov_adapd, lyapunov_og, target_distance, DualRelation, TraceRecord,
};
use crate::problems::{LocalizationInstance, ObjectiveOracle};
use crate::topology::{Graph, MixingMatrix};

/// Any runnable method.
#[derive(Debug, Clone)]
pub enum Solver {
    Adapd(Box<AdapdSolver>),
    Dgd(DgdSolver),
    ProxGpda(ProxGpdaSolver),
}

impl Solver {
    pub fn new(
        problem: &dyn ObjectiveOracle,
        graph: &Graph,
        w: &MixingMatrix,
        x_start: ArrayView2<f64>,
        cfg: &SolverConfig,
    ) -> Result<Self, SolverError> {
        Ok(match cfg.method {
            Method::Adapd | Method::AdapdOg => Solver::Adapd(Box::new(AdapdSolver::new(problem, w, x_start, cfg.clone())?)),
            Method::Dgd { .. } => Solver::Dgd(DgdSolver::new(w, x_start, cfg)?),
            Method::ProxGpda { .. } => Solver::ProxGpda(ProxGpdaSolver::new(graph, x_start, cfg)?),
        })
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        match self {
            Solver::Adapd(s) => s.state.x.view(),
            Solver::Dgd(s) => s.x.view(),
            Solver::ProxGpda(s) => s.x.view(),
        }
    }

    pub fn k(&self) -> usize {
        match self {
            Solver::Adapd(s) => s.state.k,
            Solver::Dgd(s) => s.k,
            Solver::ProxGpda(s) => s.k,
        }
    }

    pub fn comms(&self) -> u64 {
        match self {
            Solver::Adapd(s) => s.state.comms,
            Solver::Dgd(s) => s.comms,
            Solver::ProxGpda(s) => s.comms,
        }
    }

    pub fn grads_per_agent(&self) -> f64 {
        let (evals, n) = match self {
            Solver::Adapd(s) => (s.state.grad_evals, s.state.n_agents()),
            Solver::Dgd(s) => (s.grad_evals, s.x.nrows()),
            Solver::ProxGpda(s) => (s.grad_evals, s.x.nrows()),
        };
        evals as f64 / n as f64
    }

    pub fn next_comm_cost(&self) -> u64 {
        match self {
            Solver::Adapd(s) => s.next_comm_cost(),
            Solver::Dgd(_) => 1,
            Solver::ProxGpda(s) => s.next_comm_cost(),
        }
    }

    /// Per-agent gradients of the next iteration when known in advance.
    pub fn next_grad_cost(&self) -> Option<f64> {
        match self {
            Solver::Adapd(s) if !s.is_one_gradient() => None,
            _ => Some(1.0),
        }
    }

    pub fn step(&mut self, problem: &dyn ObjectiveOracle) -> Result<(), SolverError> {
        match self {
            Solver::Adapd(s) => s.step(problem),
            Solver::Dgd(s) => s.step(problem),
            Solver::ProxGpda(s) => s.step(problem),
        }
    }

    /// Whether running one more iteration stays within `budget`.
    pub fn can_step(&self, budget: Budget) -> bool {
        match budget {
            Budget::Communications(limit) => self.comms() + self.next_comm_cost() <= limit,
            Budget::Iterations(limit) => (self.k() as u64) < limit,
            Budget::Gradients(limit) => match self.next_grad_cost() {
                Some(c) => self.grads_per_agent() + c <= limit as f64,
                None => self.grads_per_agent() < limit as f64,
            },
        }
    }
}

/// Optional per-row diagnostics.
#[derive(Debug, Clone, Default)]
pub struct TraceOptions<'a> {
    /// Evaluate `Φ`/`Φ̂` (ADAPD family only).
    pub lyapunov: bool,
    /// Evaluate the dual-relation residual (ADAPD family only, `k ≥ 1`).
    pub dual_residual: bool,
    /// Smoothness constant used by `Φ̂`.
    pub lipschitz: Option<f64>,
    pub localization: Option<&'a LocalizationInstance>,
    /// Record wall time; off by default so traces are byte-reproducible.
    pub timing: bool,
}

/// A trace plus the error that ended the run early, if any.
#[derive(Debug)]
pub struct RunOutcome {
    pub trace: Vec<TraceRecord>,
    pub final_x: Array2<f64>,
    pub error: Option<SolverError>,
}

fn record(solver: &Solver, problem: &dyn ObjectiveOracle, opts: &TraceOptions<'_>, started: Instant) -> TraceRecord {
    let mut rec = base_record(solver.k(), solver.comms(), solver.grads_per_agent(), solver.x(), problem);
    if let Solver::Adapd(s) = solver {
        let eta = s.config().eta;
        let op = s.operator();
        if opts.lyapunov {
            rec.lyapunov = Some(if s.is_one_gradient() {
                let l = opts.lipschitz.or(s.config().lipschitz).or_else(|| problem.smoothness()).unwrap_or(1.0);
                lyapunov_og(&s.state, problem, op, eta, op.rho(), l)
            } else {
                lyapunov_adapd(&s.state, problem, op, eta, op.rho())
            });
        }
        if opts.dual_residual && s.state.k >= 1 {
            let rel = if s.is_one_gradient() { DualRelation::OneGradient } else { DualRelation::Adapd };
            rec.dual_residual = Some(dual_relation_residual(&s.state, op, eta, rel, problem));
        }
    }
    if let Some(inst) = opts.localization {
        rec.target_distance = target_distance(solver.x(), inst).ok();
    }
    if opts.timing {
        rec.wall_time_s = Some(started.elapsed().as_secs_f64());
    }
    rec
}

/// Runs `solver` until the next iteration would exceed `budget`, recording
/// one row for the start and one per iteration.
pub fn run(solver: &mut Solver, problem: &dyn ObjectiveOracle, budget: Budget, opts: &TraceOptions<'_>) -> RunOutcome {
    let started = Instant::now();
    let mut trace = vec![record(solver, problem, opts, started)];
    let mut error = None;
    while solver.can_step(budget) {
        if let Err(e) = solver.step(problem) {
            error = Some(e);
            break;
        }
        trace.push(record(solver, problem, opts, started));
    }
    RunOutcome { trace, final_x: solver.x().to_owned(), error }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::QuadraticConsensus;
    use crate::solvers::config::{CommMode, InnerConfig, InnerMethod};
    use crate::topology::build_ring;
    use ndarray::array;

    fn setup() -> (QuadraticConsensus, Graph, MixingMatrix) {
        let q = QuadraticConsensus::new(array![[1.0, 0.0], [0.0, 2.0], [-1.0, 1.0]]);
        (q, Graph::ring(3).unwrap(), build_ring(3, 0.5).unwrap())
    }

    #[test]
    fn communication_budget_is_never_exceeded() {
        let (q, g, w) = setup();
        let x0 = Array2::zeros((3, 2));
        let methods = [
            Method::Adapd,
            Method::AdapdOg,
            Method::Dgd { alpha0: 0.1, q: 0.5 },
            Method::ProxGpda { beta: 1.0 },
        ];
        for method in methods {
            for comm in [CommMode::Single, CommMode::Chebyshev { degree: Some(3) }] {
                let cfg = SolverConfig {
                    method,
                    eta: 0.3,
                    comm,
                    inner: InnerConfig { method: InnerMethod::Exact, ..Default::default() },
                    ..Default::default()
                };
                let mut s = Solver::new(&q, &g, &w, x0.view(), &cfg).unwrap();
                let r = if matches!(method, Method::Adapd | Method::AdapdOg) { comm_rounds(comm) } else { 1 };
                let out = run(&mut s, &q, Budget::Communications(10), &TraceOptions::default());
                assert!(out.error.is_none());
                let last = out.trace.last().unwrap().comms;
                assert!(last <= 10 && last + r > 10, "{method:?} {comm:?}: {last}");
                assert!(out.trace.iter().filter(|t| t.comms > 0).count() <= 10);
            }
        }
    }

    fn comm_rounds(c: CommMode) -> u64 {
        match c {
            CommMode::Chebyshev { degree: Some(d) } => d as u64,
            _ => 1,
        }
    }

    #[test]
    fn iteration_and_gradient_budgets() {
        let (q, g, w) = setup();
        let cfg = SolverConfig { method: Method::AdapdOg, eta: 0.2, ..Default::default() };
        let mut s = Solver::new(&q, &g, &w, Array2::zeros((3, 2)).view(), &cfg).unwrap();
        let out = run(&mut s, &q, Budget::Iterations(7), &TraceOptions::default());
        assert_eq!(out.trace.len(), 8);
        let mut s = Solver::new(&q, &g, &w, Array2::zeros((3, 2)).view(), &cfg).unwrap();
        let out = run(&mut s, &q, Budget::Gradients(5), &TraceOptions::default());
        assert_eq!(out.trace.last().unwrap().grads, 5.0);
    }

    #[test]
    fn record_invariant_holds() {
        let (q, g, w) = setup();
        let cfg = SolverConfig {
            eta: 0.3,
            inner: InnerConfig { method: InnerMethod::Exact, ..Default::default() },
            ..Default::default()
        };
        let mut s = Solver::new(&q, &g, &w, Array2::zeros((3, 2)).view(), &cfg).unwrap();
        let opts = TraceOptions { lyapunov: true, dual_residual: true, ..Default::default() };
        let out = run(&mut s, &q, Budget::Iterations(20), &opts);
        for r in &out.trace {
            assert_eq!(r.stationarity, r.mean_grad_norm2 + r.consensus_err);
            assert!(r.lyapunov.is_some());
            assert_eq!(r.dual_residual.is_some(), r.k >= 1);
        }
    }
}

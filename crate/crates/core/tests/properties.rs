use adapd::diagnostics::{dual_relation_residual, stationarity_parts, DualRelation};
use adapd::harness::{apply_override, mean_ci};
use adapd::linalg::row_mean;
use adapd::problems::{stacked_grad, QuadraticConsensus};
use adapd::solvers::{
    chebyshev_mix, chebyshev_poly, chebyshev_rate_bound, run, AdapdSolver, Budget, CommMode, InnerConfig, InnerMethod,
    Method, Solver, SolverConfig, TraceOptions,
};
use adapd::topology::{build_erdos_renyi, build_ring, laplacian_weights, metropolis_weights, validate_mixing, Graph};
use ndarray::{Array2, Axis};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    proptest::collection::vec(-5.0..5.0f64, rows * cols)
        .prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn constructed_weights_pass_validation(n in 3usize..25, p in 0.3..1.0f64, seed in 0u64..1000) {
        let g = build_erdos_renyi(n, p, seed).unwrap();
        for w in [laplacian_weights(&g, None).unwrap(), metropolis_weights(&g, 1.0).unwrap()] {
            let report = validate_mixing(&w, &g);
            prop_assert!(report.all_pass(), "{report:?}");
            prop_assert!(w.rho() < 1.0 && w.rho() >= 0.0);
        }
    }

    #[test]
    fn chebyshev_preserves_means_and_contracts(
        n in 3usize..20,
        self_weight in 0.2..0.8f64,
        degree in 1usize..8,
        a0 in matrix(20, 3),
    ) {
        let w = build_ring(n, self_weight).unwrap();
        let a0 = a0.slice(ndarray::s![..n, ..]).to_owned();
        let out = chebyshev_mix(&w, a0.view(), degree).unwrap();
        let (m0, m1) = (row_mean(a0.view()), row_mean(out.view()));
        prop_assert!((&m0 - &m1).iter().all(|d| d.abs() <= 1e-12 * (1.0 + max_abs(&a0))));
        let dev = |a: &Array2<f64>, m: &ndarray::Array1<f64>| {
            (a - &m.view().insert_axis(Axis(0))).iter().map(|v| v * v).sum::<f64>().sqrt()
        };
        let bound = chebyshev_rate_bound(w.rho(), degree) * dev(&a0, &m0);
        prop_assert!(dev(&out, &m0) <= bound * (1.0 + 1e-9) + 1e-12);
        prop_assert!((chebyshev_poly(1.0, w.rho(), degree) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn adapd_keeps_the_dual_in_range_and_the_dual_relation(
        targets in matrix(5, 2),
        start in matrix(5, 2),
        eta in 0.05..2.0f64,
        one_gradient in any::<bool>(),
    ) {
        let q = QuadraticConsensus::new(targets);
        let w = build_ring(5, 0.4).unwrap();
        let method = if one_gradient { Method::AdapdOg } else { Method::Adapd };
        let cfg = SolverConfig {
            method,
            eta,
            inner: InnerConfig { method: InnerMethod::Exact, ..Default::default() },
            ..Default::default()
        };
        let mut s = AdapdSolver::new(&q, &w, start.view(), cfg).unwrap();
        let relation = if one_gradient { DualRelation::OneGradient } else { DualRelation::Adapd };
        for _ in 0..15 {
            if s.step(&q).is_err() {
                break;
            }
            let st = &s.state;
            let scale = 1.0 + max_abs(&st.ztilde);
            prop_assert!(st.ztilde.sum_axis(Axis(0)).iter().all(|v| v.abs() <= 1e-8 * scale));
            prop_assert!(dual_relation_residual(st, s.operator(), eta, relation, &q) <= 1e-8);
        }
    }

    #[test]
    fn communication_budget_is_a_hard_cap(limit in 1u64..60, degree in 1usize..5, method_idx in 0usize..4) {
        let q = QuadraticConsensus::new(Array2::from_shape_fn((4, 2), |(i, j)| (i * 2 + j) as f64));
        let g = Graph::ring(4).unwrap();
        let w = build_ring(4, 0.5).unwrap();
        let method = [Method::Adapd, Method::AdapdOg, Method::Dgd { alpha0: 0.1, q: 0.5 }, Method::ProxGpda { beta: 2.0 }][method_idx];
        let cfg = SolverConfig {
            method,
            eta: 0.3,
            comm: CommMode::Chebyshev { degree: Some(degree) },
            inner: InnerConfig { method: InnerMethod::Exact, ..Default::default() },
            ..Default::default()
        };
        let mut s = Solver::new(&q, &g, &w, Array2::zeros((4, 2)).view(), &cfg).unwrap();
        let out = run(&mut s, &q, Budget::Communications(limit), &TraceOptions::default());
        prop_assert!(out.trace.iter().all(|r| r.comms <= limit));
        prop_assert!(out.trace.windows(2).all(|p| p[0].comms < p[1].comms && p[1].k == p[0].k + 1));
        prop_assert!(!s.can_step(Budget::Communications(limit)));
    }

    #[test]
    fn stationarity_splits_into_gradient_and_consensus(x in matrix(4, 3), targets in matrix(4, 3)) {
        let q = QuadraticConsensus::new(targets.clone());
        let parts = stationarity_parts(x.view(), &q);
        // ∇f(x̄) = x̄ − ā for the mean-of-squares objective.
        let g = row_mean(x.view()) - row_mean(targets.view());
        let dev = &x - &row_mean(x.view()).insert_axis(Axis(0));
        prop_assert!((parts.mean_grad_norm2 - g.dot(&g)).abs() <= 1e-10 * (1.0 + g.dot(&g)));
        prop_assert!((parts.consensus_err - dev.iter().map(|v| v * v).sum::<f64>()).abs() <= 1e-10 * (1.0 + parts.consensus_err));
        prop_assert_eq!(stacked_grad(&q, x.view()), &x - &targets);
    }

    #[test]
    fn mean_ci_is_centered_and_nonnegative(values in proptest::collection::vec(-1e3..1e3f64, 1..40)) {
        let s = mean_ci(&values);
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(s.mean >= lo - 1e-9 && s.mean <= hi + 1e-9);
        prop_assert!(s.ci95 >= 0.0);
        if values.iter().all(|&v| v == values[0]) {
            prop_assert!(s.ci95 <= 1e-9);
        }
    }

    #[test]
    fn overrides_set_numbers_exactly(v in -1e6..1e6f64, n in 0i64..1000) {
        let mut t: toml::Table = toml::from_str("[a]\nb = 1\nlist = [1.0, 2.0]").unwrap();
        apply_override(&mut t, &format!("a.b={v:?}")).unwrap();
        apply_override(&mut t, &format!("a.list.1={n}")).unwrap();
        prop_assert_eq!(t["a"]["b"].as_float(), Some(v));
        prop_assert_eq!(t["a"]["list"][1].as_integer(), Some(n));
    }
}

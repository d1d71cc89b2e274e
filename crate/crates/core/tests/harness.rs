use std::path::Path;

use adapd::diagnostics::TraceRecord;
use adapd::harness::{
    aggregate, export_figures, grid_search, mean_ci, read_checkpoint, read_trace_csv, run_experiment, run_trial,
    select_best, write_checkpoint, write_trace_csv, ExperimentConfig, HarnessError, RunSummary,
};
use adapd::solvers::{AgentState, Method, SolverConfig};
use approx::assert_abs_diff_eq;
use ndarray::Array2;

const QUAD: &str = r#"
name = "t"
trials = 2
seed_base = 3
budget = { kind = "communications", limit = 60 }

[problem]
kind = "quadratic"
dim = 2

[topology]
n_agents = 6
graph = { kind = "ring" }
weights = { kind = "ring", self_weight = 0.5 }

[trace]
lyapunov = true
checkpoint = true

[[algorithms]]
label = "adapd"
grid = [0.1, 0.5, 1.0]
[algorithms.solver]
method = { kind = "adapd" }
inner = { method = "exact" }

[[algorithms]]
label = "dgd"
[algorithms.solver]
method = { kind = "dgd", alpha0 = 0.1, q = 0.5 }
"#;

fn quad_cfg(out: &Path, overrides: &[&str]) -> ExperimentConfig {
    let overrides: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    let mut cfg = ExperimentConfig::from_toml_str(QUAD, &overrides).unwrap();
    cfg.output_dir = out.to_path_buf();
    cfg
}

#[test]
fn overrides_reach_nested_keys_and_array_entries() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = quad_cfg(
        tmp.path(),
        &["trials=5", "problem.dim=4", "algorithms.0.grid=[0.2]", "algorithms.1.label=baseline", "name=sweep"],
    );
    assert_eq!(cfg.trials, 5);
    assert_eq!(cfg.name, "sweep");
    assert_eq!(cfg.algorithms[0].grid, vec![0.2]);
    assert_eq!(cfg.algorithms[1].label(), "baseline");
    match cfg.problem {
        adapd::harness::ProblemSpec::Quadratic { dim, .. } => assert_eq!(dim, 4),
        ref other => panic!("unexpected problem {other:?}"),
    }
}

#[test]
fn bad_configs_are_configuration_errors() {
    let cases = [
        vec!["trials=0".to_string()],
        vec!["topology.graph={ kind = \"erdos_renyi\", p = 0.5 }".to_string()],
        vec!["algorithms.0.grid=[-1.0]".to_string()],
        vec!["algorithms.1.label=adapd".to_string()],
        vec!["unknown_key=1".to_string()],
        vec!["algorithms.7.grid=[1.0]".to_string()],
    ];
    for overrides in cases {
        let err = ExperimentConfig::from_toml_str(QUAD, &overrides).unwrap_err();
        assert_eq!(err.exit_code(), 2, "{overrides:?}: {err}");
    }
}

#[test]
fn resolved_config_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = quad_cfg(tmp.path(), &[]);
    let again = ExperimentConfig::from_toml_str(&cfg.to_toml().unwrap(), &[]).unwrap();
    assert_eq!(again.algorithms, cfg.algorithms);
    assert_eq!(again.budget, cfg.budget);
}

#[test]
fn mean_ci_matches_frozen_values() {
    let s = mean_ci(&[1.0, 2.0, 3.0, 4.0]);
    assert_abs_diff_eq!(s.mean, 2.5, epsilon = 1e-15);
    assert_abs_diff_eq!(s.ci95, 1.2651745597610895, epsilon = 1e-14);
    let s = mean_ci(&[0.5, 0.25, 2.0]);
    assert_abs_diff_eq!(s.mean, 0.9166666666666666, epsilon = 1e-15);
    assert_abs_diff_eq!(s.ci95, 1.07104829230266, epsilon = 1e-14);
    assert_eq!(mean_ci(&[7.0]).ci95, 0.0);
}

#[test]
fn select_best_skips_failures_and_breaks_ties_conservatively() {
    let c = |eta| SolverConfig { eta, ..Default::default() };
    let scored = vec![(c(1.0), Some(1e-3)), (c(0.1), Some(1e-3)), (c(0.5), None), (c(2.0), Some(f64::NAN))];
    assert_eq!(select_best(&scored), Some(1));
    let prox = |beta| SolverConfig { method: Method::ProxGpda { beta }, ..Default::default() };
    // Larger β is the more conservative Prox-GPDA step.
    assert_eq!(select_best(&[(prox(1.0), Some(0.5)), (prox(10.0), Some(0.5))]), Some(1));
    assert_eq!(select_best(&[(c(1.0), None)]), None);
}

#[test]
fn grid_winner_matches_exhaustive_rerun() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = quad_cfg(tmp.path(), &[]);
    let summary = grid_search(&cfg).unwrap();
    let adapd = summary.algorithm("adapd").unwrap();
    let (best_eta, _) = cfg.algorithms[0]
        .candidates()
        .iter()
        .map(|c| (c.eta, run_trial(&cfg, c, 0).final_stationarity().unwrap()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    assert_eq!(adapd.step, best_eta);
    assert_eq!(adapd.grid.len(), 3);

    let resolved = ExperimentConfig::from_path(tmp.path().join("config.resolved.toml"), &[]).unwrap();
    assert_eq!(resolved.algorithms[0].solver.eta, best_eta);
    assert_eq!(RunSummary::read(tmp.path()).unwrap(), summary);
}

#[test]
fn all_divergent_grid_is_exhausted() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = quad_cfg(
        tmp.path(),
        &[
            "problem.target_scale=1e11",
            "algorithms.0.solver.method={ kind = \"adapd_og\" }",
            "algorithms.0.grid=[50.0, 80.0]",
            "budget={ kind = \"iterations\", limit = 200 }",
        ],
    );
    let err = grid_search(&cfg).unwrap_err();
    assert!(matches!(err, HarnessError::GridExhausted { .. }), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn runs_respect_the_budget_and_persist_everything() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = quad_cfg(tmp.path(), &[]);
    let summary = run_experiment(&cfg).unwrap();
    assert!(!summary.any_failed());
    for a in &summary.algorithms {
        assert_eq!(a.trace_files.len(), 2);
        for f in &a.trace_files {
            let trace = read_trace_csv(f).unwrap();
            let last = trace.last().unwrap();
            assert!(last.comms <= 60);
            assert!(trace.windows(2).all(|w| w[0].comms <= w[1].comms));
        }
    }
    assert!(tmp.path().join("adapd/trial_001_state.bin").exists());
    assert!(tmp.path().join("summary.json").exists());

    let figures = export_figures(tmp.path()).unwrap();
    assert_eq!(figures.len(), 2);
    let text = std::fs::read_to_string(&figures[0]).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("comms,"));
    assert!(header.contains("stationarity_mean") && header.contains("stationarity_ci95"));
}

#[test]
fn checkpoint_round_trips_bit_for_bit() {
    let tmp = tempfile::tempdir().unwrap();
    let mut state = AgentState::new(Array2::from_shape_fn((3, 2), |(i, j)| i as f64 - 0.1 * j as f64).view());
    state.y[[1, 1]] = -2.5e-300;
    state.ztilde[[0, 1]] = std::f64::consts::PI;
    state.k = 17;
    state.comms = 18;
    state.grad_evals = 51;
    let stem = tmp.path().join("ck");
    write_checkpoint(&stem, &state, &SolverConfig::default()).unwrap();
    let (back, meta) = read_checkpoint(&stem).unwrap();
    assert_eq!(back, state);
    assert_eq!((meta.n_agents, meta.dim, meta.k), (3, 2, 17));
}

#[test]
fn trace_csv_round_trips_and_aggregates() {
    let tmp = tempfile::tempdir().unwrap();
    let row = |k: usize, comms: u64, s: f64| TraceRecord {
        k,
        comms,
        grads: k as f64,
        stationarity: s,
        consensus_err: s / 2.0,
        mean_grad_norm2: s / 2.0,
        objective_f: 0.1 * k as f64,
        objective_fbar: 1.0 / 3.0,
        lyapunov: Some(-1.5),
        dual_residual: None,
        wall_time_s: None,
        target_distance: None,
    };
    let a = vec![row(0, 0, 1.0), row(1, 2, 0.5), row(2, 3, 0.25)];
    let path = tmp.path().join("a.csv");
    write_trace_csv(&path, &a).unwrap();
    assert_eq!(read_trace_csv(&path).unwrap(), a);
    let header = std::fs::read_to_string(&path).unwrap().lines().next().unwrap().to_string();
    assert_eq!(
        header,
        "k,comms,grads,stationarity,consensus_err,mean_grad_norm2,objective_F,objective_fbar,lyapunov,dual_residual,wall_time_s,target_distance"
    );

    // A second trace on a different grid is sampled at its last row <= c.
    let b = vec![row(0, 0, 3.0), row(1, 3, 0.75)];
    let (comms, bands) = aggregate(&[&a, &b]);
    assert_eq!(comms, vec![0, 2, 3]);
    let st = &bands["stationarity"];
    assert_eq!(st.mean, vec![2.0, 1.75, 0.5]);
    assert!(!bands.contains_key("dual_residual"));
}

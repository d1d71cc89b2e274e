//! Experiment orchestration: TOML configs, seeded multi-trial runs, grid
//! search over step parameters and persistence of traces and summaries.
//!
//! Layout of a run directory:
//!
//! ```text
//! <output_dir>/config.resolved.toml
//! <output_dir>/summary.json
//! <output_dir>/<label>/trial_000.csv        (and .jsonl, _state.{bin,json})
//! <output_dir>/instances/trial_000.json     (localization only)
//! ```

mod build;
mod config;
mod output;

use std::path::PathBuf;

use rayon::prelude::*;
use thiserror::Error;

pub use build::{build_graph, build_mixing, build_topology, build_trial, start_point, TrialSetup, SMOOTHNESS_SAMPLES};
pub use config::{
    apply_override, AlgorithmSpec, DataSpec, ExperimentConfig, GraphSpec, ProblemSpec, StartSpec, TopologySpec,
    TraceSpec, WeightSpec,
};
pub use output::{
    aggregate, export_figures, mean_ci, read_checkpoint, read_trace_csv, write_checkpoint, write_trace_csv,
    write_trace_jsonl, AlgorithmSummary, CheckpointMeta, GridPoint, MetricBand, RunSummary, Stat, TrialFailure,
    SUMMARY_METRICS, Z95,
};

use crate::diagnostics::TraceRecord;
use crate::problems::ProblemError;
use crate::solvers::{run, AgentState, Solver, SolverConfig, SolverError, TraceOptions};
use crate::topology::TopologyError;
use output::{create_dir, write_text};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("every grid point of {label} diverged or failed")]
    GridExhausted { label: String },
}

impl HarnessError {
    /// Process exit code: 2 configuration, 3 numeric divergence, 4 data.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Topology(_) => 2,
            HarnessError::Solver(SolverError::Diverged { .. }) | HarnessError::GridExhausted { .. } => 3,
            HarnessError::Solver(SolverError::Config(_)) => 2,
            HarnessError::Problem(ProblemError::Topology(_)) => 2,
            _ => 4,
        }
    }
}

/// Result of one trial of one algorithm.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub trial: usize,
    pub seed: u64,
    pub solver: SolverConfig,
    pub trace: Vec<TraceRecord>,
    pub failure: Option<TrialFailure>,
    /// Final state of ADAPD-family runs.
    pub state: Option<AgentState>,
}

impl TrialOutcome {
    pub fn final_stationarity(&self) -> Option<f64> {
        self.trace.last().map(|r| r.stationarity)
    }
}

/// Runs trial `trial` (seed `seed_base + trial`) of `solver` under `cfg`.
/// Errors end the trial and are recorded instead of propagated.
pub fn run_trial(cfg: &ExperimentConfig, solver: &SolverConfig, trial: usize) -> TrialOutcome {
    let seed = cfg.seed_base + trial as u64;
    let mut solver_cfg = solver.clone();
    solver_cfg.seed = seed;
    solver_cfg.budget = cfg.budget;
    let fail = |solver_cfg: SolverConfig, e: HarnessError, trace: Vec<TraceRecord>| {
        let diverged = matches!(e, HarnessError::Solver(SolverError::Diverged { .. }));
        TrialOutcome {
            trial,
            seed,
            solver: solver_cfg,
            trace,
            failure: Some(TrialFailure { trial, seed, diverged, message: e.to_string() }),
            state: None,
        }
    };
    let setup = match build_trial(cfg, seed) {
        Ok(s) => s,
        Err(e) => return fail(solver_cfg, e, Vec::new()),
    };
    solver_cfg.lipschitz = solver_cfg.lipschitz.or(Some(setup.lipschitz));
    let mut s = match Solver::new(setup.problem.as_ref(), &setup.graph, &setup.mixing, setup.x_start.view(), &solver_cfg) {
        Ok(s) => s,
        Err(e) => return fail(solver_cfg, e.into(), Vec::new()),
    };
    let opts = TraceOptions {
        lyapunov: cfg.trace.lyapunov,
        dual_residual: cfg.trace.dual_residual,
        lipschitz: solver_cfg.lipschitz,
        localization: setup.localization.as_ref(),
        timing: cfg.trace.timing,
    };
    let out = run(&mut s, setup.problem.as_ref(), cfg.budget, &opts);
    if let Some(e) = out.error {
        return fail(solver_cfg, e.into(), out.trace);
    }
    let state = match s {
        Solver::Adapd(a) => Some(a.state),
        _ => None,
    };
    TrialOutcome {
        trial,
        seed,
        solver: solver_cfg,
        trace: out.trace,
        failure: None,
        state,
    }
}

/// All trials of one algorithm, in parallel, in trial order.
pub fn run_trials(cfg: &ExperimentConfig, solver: &SolverConfig, trials: usize) -> Vec<TrialOutcome> {
    (0..trials).into_par_iter().map(|t| run_trial(cfg, solver, t)).collect()
}

fn summarize(label: &str, solver: &SolverConfig, outcomes: &[TrialOutcome], files: Vec<PathBuf>) -> AlgorithmSummary {
    let ok: Vec<&[TraceRecord]> =
        outcomes.iter().filter(|o| o.failure.is_none()).map(|o| o.trace.as_slice()).collect();
    let (comms, metrics) = aggregate(&ok);
    let lasts: Vec<TraceRecord> = ok.iter().filter_map(|t| t.last().cloned()).collect();
    let mut final_metrics = std::collections::BTreeMap::new();
    if !lasts.is_empty() {
        let finals: Vec<&[TraceRecord]> = lasts.iter().map(std::slice::from_ref).collect();
        let (_, m) = aggregate(&finals);
        for (k, band) in m {
            final_metrics.insert(k, Stat { mean: band.mean[0], ci95: band.ci95[0] });
        }
    }
    AlgorithmSummary {
        label: label.to_string(),
        method: solver.method.name().to_string(),
        step: solver.step_size_raw(),
        solver: solver.clone(),
        trials: outcomes.len(),
        failures: outcomes.iter().filter_map(|o| o.failure.clone()).collect(),
        comms,
        metrics,
        final_metrics,
        grid: Vec::new(),
        trace_files: files,
    }
}

/// Runs and persists every trial of one algorithm.
fn run_algorithm(cfg: &ExperimentConfig, label: &str, solver: &SolverConfig) -> Result<AlgorithmSummary, HarnessError> {
    let dir = cfg.output_dir.join(label);
    create_dir(&dir)?;
    let outcomes = run_trials(cfg, solver, cfg.trials);
    let mut files = Vec::new();
    for o in &outcomes {
        let stem = dir.join(format!("trial_{:03}", o.trial));
        let csv = stem.with_extension("csv");
        write_trace_csv(&csv, &o.trace)?;
        files.push(csv);
        if cfg.trace.jsonl {
            write_trace_jsonl(&stem.with_extension("jsonl"), &o.trace)?;
        }
        if let (true, Some(state)) = (cfg.trace.checkpoint, &o.state) {
            write_checkpoint(&dir.join(format!("trial_{:03}_state", o.trial)), state, &o.solver)?;
        }
        if o.failure.is_some() {
            log::warn!("{label} trial {}: {}", o.trial, o.failure.as_ref().map_or("", |f| &f.message));
        }
    }
    Ok(summarize(label, solver, &outcomes, files))
}

fn write_instances(cfg: &ExperimentConfig) -> Result<(), HarnessError> {
    if !matches!(cfg.problem, ProblemSpec::Localization { .. }) {
        return Ok(());
    }
    let dir = cfg.output_dir.join("instances");
    create_dir(&dir)?;
    for t in 0..cfg.trials {
        if let Ok(setup) = build_trial(cfg, cfg.seed_base + t as u64) {
            if let Some(inst) = setup.localization {
                write_text(&dir.join(format!("trial_{t:03}.json")), &serde_json::to_string(&inst)?)?;
            }
        }
    }
    Ok(())
}

fn finish(cfg: &ExperimentConfig, resolved: &ExperimentConfig, algorithms: Vec<AlgorithmSummary>) -> Result<RunSummary, HarnessError> {
    let summary = RunSummary { name: cfg.name.clone(), output_dir: cfg.output_dir.clone(), algorithms };
    write_text(&cfg.output_dir.join("summary.json"), &serde_json::to_string_pretty(&summary)?)?;
    write_text(&cfg.output_dir.join("config.resolved.toml"), &resolved.to_toml()?)?;
    Ok(summary)
}

/// Checks that the first trial's network builds and that data files
/// referenced by `cfg` load, so these errors surface once instead of as
/// per-trial failures.
pub fn preflight(cfg: &ExperimentConfig) -> Result<(), HarnessError> {
    cfg.validate()?;
    build_topology(cfg, cfg.seed_base)?;
    if let ProblemSpec::Logistic { data: DataSpec::Libsvm { path, dim }, .. } = &cfg.problem {
        let data = crate::problems::parse_libsvm(cfg.resolve(path), *dim)?;
        if data.n_samples() < cfg.topology.n_agents {
            return Err(HarnessError::Data(format!(
                "{} holds {} samples, fewer than {} agents",
                path.display(),
                data.n_samples(),
                cfg.topology.n_agents
            )));
        }
    }
    Ok(())
}

/// Runs every algorithm as configured (grids are ignored) and writes traces,
/// the resolved configuration and `summary.json` under `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary, HarnessError> {
    preflight(cfg)?;
    create_dir(&cfg.output_dir)?;
    write_instances(cfg)?;
    let mut algorithms = Vec::new();
    for a in &cfg.algorithms {
        algorithms.push(run_algorithm(cfg, &a.label(), &a.solver)?);
    }
    finish(cfg, cfg, algorithms)
}

/// Index of the best candidate: lowest score, ties to the smaller
/// [`SolverConfig::step_size`]; unscored candidates are skipped.
pub fn select_best(candidates: &[(SolverConfig, Option<f64>)]) -> Option<usize> {
    candidates
        .iter()
        .enumerate()
        .filter_map(|(i, (c, s))| s.filter(|v| v.is_finite()).map(|v| (i, v, c.step_size())))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.2.total_cmp(&b.2)))
        .map(|(i, _, _)| i)
}

/// Scores every grid candidate of `algo` by mean final stationarity over
/// `grid_trials` trials. A candidate scores `None` if any trial fails.
pub fn evaluate_grid(cfg: &ExperimentConfig, algo: &AlgorithmSpec) -> Vec<(SolverConfig, Option<f64>)> {
    let candidates = algo.candidates();
    let jobs: Vec<(usize, usize)> =
        (0..candidates.len()).flat_map(|c| (0..cfg.grid_trials).map(move |t| (c, t))).collect();
    let finals: Vec<(usize, Option<f64>)> = jobs
        .par_iter()
        .map(|&(c, t)| {
            let o = run_trial(cfg, &candidates[c], t);
            (c, if o.failure.is_some() { None } else { o.final_stationarity() })
        })
        .collect();
    candidates
        .into_iter()
        .enumerate()
        .map(|(c, cand)| {
            let vals: Option<Vec<f64>> = finals.iter().filter(|(i, _)| *i == c).map(|(_, v)| *v).collect();
            let score = vals.map(|v| v.iter().sum::<f64>() / v.len() as f64).filter(|s| s.is_finite());
            (cand, score)
        })
        .collect()
}

/// Picks each algorithm's step parameter from its grid, then performs the
/// full run at the winners. Algorithms without a grid run as configured.
pub fn grid_search(cfg: &ExperimentConfig) -> Result<RunSummary, HarnessError> {
    preflight(cfg)?;
    create_dir(&cfg.output_dir)?;
    write_instances(cfg)?;
    let mut resolved = cfg.clone();
    let mut algorithms = Vec::new();
    for (idx, a) in cfg.algorithms.iter().enumerate() {
        let label = a.label();
        let (solver, grid) = if !a.has_grid() {
            (a.solver.clone(), Vec::new())
        } else {
            let scored = evaluate_grid(cfg, a);
            let best = select_best(&scored).ok_or_else(|| HarnessError::GridExhausted { label: label.clone() })?;
            let grid = scored
                .iter()
                .map(|(c, s)| GridPoint { value: c.step_size_raw(), eps_hat: c.inner.eps_hat, decay: c.inner.decay, score: *s })
                .collect();
            log::info!("{label}: selected step {}", scored[best].0.step_size_raw());
            (scored[best].0.clone(), grid)
        };
        resolved.algorithms[idx].solver = solver.clone();
        let mut summary = run_algorithm(cfg, &label, &solver)?;
        summary.grid = grid;
        algorithms.push(summary);
    }
    finish(cfg, &resolved, algorithms)
}

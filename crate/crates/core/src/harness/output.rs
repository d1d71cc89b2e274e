use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::diagnostics::TraceRecord;
use crate::solvers::{AgentState, SolverConfig};

/// Metrics aggregated across trials, in CSV column names.
pub const SUMMARY_METRICS: [&str; 9] = [
    "stationarity",
    "consensus_err",
    "mean_grad_norm2",
    "objective_F",
    "objective_fbar",
    "lyapunov",
    "dual_residual",
    "target_distance",
    "grads",
];

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.96;

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

pub fn create_dir(path: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(path).map_err(io_err(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(io_err(path))
}

pub fn write_trace_csv(path: &Path, trace: &[TraceRecord]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in trace {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRecord>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(HarnessError::from)).collect()
}

pub fn write_trace_jsonl(path: &Path, trace: &[TraceRecord]) -> Result<(), HarnessError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for r in trace {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Metadata written next to a raw state dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub n_agents: usize,
    pub dim: usize,
    pub k: usize,
    pub comms: u64,
    pub grad_evals: u64,
    /// Block order inside the binary file.
    pub blocks: Vec<String>,
    pub solver: SolverConfig,
}

const STATE_BLOCKS: [&str; 7] = ["x", "x_prev", "x0", "x0_prev", "y", "ztilde", "ztilde_prev"];

fn blocks(state: &AgentState) -> [&Array2<f64>; 7] {
    [&state.x, &state.x_prev, &state.x0, &state.x0_prev, &state.y, &state.ztilde, &state.ztilde_prev]
}

/// Writes `<stem>.bin` (row-major little-endian `f64` blocks) and
/// `<stem>.json`.
pub fn write_checkpoint(stem: &Path, state: &AgentState, solver: &SolverConfig) -> Result<(), HarnessError> {
    let bin = stem.with_extension("bin");
    let mut w = BufWriter::new(File::create(&bin).map_err(io_err(&bin))?);
    for b in blocks(state) {
        for v in b.iter() {
            w.write_all(&v.to_le_bytes()).map_err(io_err(&bin))?;
        }
    }
    w.flush().map_err(io_err(&bin))?;
    let meta = CheckpointMeta {
        n_agents: state.n_agents(),
        dim: state.dim(),
        k: state.k,
        comms: state.comms,
        grad_evals: state.grad_evals,
        blocks: STATE_BLOCKS.iter().map(|s| s.to_string()).collect(),
        solver: solver.clone(),
    };
    let json = stem.with_extension("json");
    write_text(&json, &serde_json::to_string_pretty(&meta)?)
}

pub fn read_checkpoint(stem: &Path) -> Result<(AgentState, CheckpointMeta), HarnessError> {
    let json = stem.with_extension("json");
    let meta: CheckpointMeta = serde_json::from_str(&fs::read_to_string(&json).map_err(io_err(&json))?)?;
    let bin = stem.with_extension("bin");
    let bytes = fs::read(&bin).map_err(io_err(&bin))?;
    let block = meta.n_agents * meta.dim;
    if bytes.len() != 8 * block * STATE_BLOCKS.len() {
        return Err(HarnessError::Data(format!("{}: expected {} bytes, found {}", bin.display(), 8 * block * 7, bytes.len())));
    }
    let values: Vec<f64> =
        bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8 bytes"))).collect();
    let take = |i: usize| {
        Array2::from_shape_vec((meta.n_agents, meta.dim), values[i * block..(i + 1) * block].to_vec())
            .expect("block length checked above")
    };
    let state = AgentState {
        x: take(0),
        x_prev: take(1),
        x0: take(2),
        x0_prev: take(3),
        y: take(4),
        ztilde: take(5),
        ztilde_prev: take(6),
        k: meta.k,
        comms: meta.comms,
        grad_evals: meta.grad_evals,
    };
    Ok((state, meta))
}

/// Mean and 95% normal-approximation half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    #[serde(deserialize_with = "null_nan::one")]
    pub mean: f64,
    #[serde(deserialize_with = "null_nan::one")]
    pub ci95: f64,
}

/// `mean ± 1.96·s/√n` with the `n − 1` sample deviation; the half-width is 0
/// for a single value.
pub fn mean_ci(values: &[f64]) -> Stat {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return Stat { mean, ci95: 0.0 };
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Stat { mean, ci95: Z95 * (var / n).sqrt() }
}

/// NaN is written as JSON `null`; read it back as NaN.
mod null_nan {
    use serde::{Deserialize, Deserializer};

    pub fn one<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }

    pub fn many<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Ok(Vec::<Option<f64>>::deserialize(d)?.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricBand {
    #[serde(deserialize_with = "null_nan::many")]
    pub mean: Vec<f64>,
    #[serde(deserialize_with = "null_nan::many")]
    pub ci95: Vec<f64>,
}

fn metric(r: &TraceRecord, name: &str) -> Option<f64> {
    match name {
        "stationarity" => Some(r.stationarity),
        "consensus_err" => Some(r.consensus_err),
        "mean_grad_norm2" => Some(r.mean_grad_norm2),
        "objective_F" => Some(r.objective_f),
        "objective_fbar" => Some(r.objective_fbar),
        "lyapunov" => r.lyapunov,
        "dual_residual" => r.dual_residual,
        "target_distance" => r.target_distance,
        "grads" => Some(r.grads),
        _ => None,
    }
}

/// Per-metric bands at the communication counts of the first trace. Each
/// trace contributes its last row at or below every count. Metrics missing
/// from every row are dropped; missing entries otherwise become NaN.
pub fn aggregate(traces: &[&[TraceRecord]]) -> (Vec<u64>, BTreeMap<String, MetricBand>) {
    let Some(first) = traces.first() else {
        return (Vec::new(), BTreeMap::new());
    };
    let mut comms: Vec<u64> = first.iter().map(|r| r.comms).collect();
    comms.dedup();
    let rows: Vec<Vec<&TraceRecord>> = comms
        .iter()
        .map(|&c| {
            traces
                .iter()
                .map(|t| {
                    let idx = t.partition_point(|r| r.comms <= c);
                    &t[idx.saturating_sub(1)]
                })
                .collect()
        })
        .collect();
    let mut out = BTreeMap::new();
    for name in SUMMARY_METRICS {
        if !traces.iter().any(|t| t.iter().any(|r| metric(r, name).is_some())) {
            continue;
        }
        let mut band = MetricBand { mean: Vec::with_capacity(comms.len()), ci95: Vec::with_capacity(comms.len()) };
        for at in &rows {
            let vals: Vec<f64> = at.iter().map(|r| metric(r, name).unwrap_or(f64::NAN)).collect();
            let s = mean_ci(&vals);
            band.mean.push(s.mean);
            band.ci95.push(s.ci95);
        }
        out.insert(name.to_string(), band);
    }
    (comms, out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub seed: u64,
    pub diverged: bool,
    pub message: String,
}

/// Score of one grid candidate; `None` when any of its trials failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub value: f64,
    pub eps_hat: f64,
    pub decay: f64,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub label: String,
    pub method: String,
    /// Tuned step parameter (`η`, `α₀` or `β`) actually used.
    pub step: f64,
    pub solver: SolverConfig,
    pub trials: usize,
    pub failures: Vec<TrialFailure>,
    pub comms: Vec<u64>,
    pub metrics: BTreeMap<String, MetricBand>,
    /// Last row of every successful trial.
    pub final_metrics: BTreeMap<String, Stat>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub grid: Vec<GridPoint>,
    pub trace_files: Vec<PathBuf>,
}

impl AlgorithmSummary {
    pub fn final_mean(&self, metric: &str) -> Option<f64> {
        self.final_metrics.get(metric).map(|s| s.mean)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub output_dir: PathBuf,
    pub algorithms: Vec<AlgorithmSummary>,
}

impl RunSummary {
    pub fn algorithm(&self, label: &str) -> Option<&AlgorithmSummary> {
        self.algorithms.iter().find(|a| a.label == label)
    }

    pub fn any_failed(&self) -> bool {
        self.algorithms.iter().any(|a| !a.failures.is_empty())
    }

    pub fn any_diverged(&self) -> bool {
        self.algorithms.iter().flat_map(|a| &a.failures).any(|f| f.diverged)
    }

    pub fn read(run_dir: &Path) -> Result<Self, HarnessError> {
        let path = run_dir.join("summary.json");
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Writes `figures/<label>.csv` per algorithm: the communication count, then
/// `<metric>_mean` and `<metric>_ci95` for every summarized metric.
pub fn export_figures(run_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let summary = RunSummary::read(run_dir)?;
    let dir = run_dir.join("figures");
    create_dir(&dir)?;
    let mut written = Vec::new();
    for a in &summary.algorithms {
        let path = dir.join(format!("{}.csv", a.label));
        let mut w = csv::Writer::from_path(&path)?;
        let mut header = vec!["comms".to_string()];
        for name in a.metrics.keys() {
            header.push(format!("{name}_mean"));
            header.push(format!("{name}_ci95"));
        }
        w.write_record(&header)?;
        for (i, c) in a.comms.iter().enumerate() {
            let mut row = vec![c.to_string()];
            for band in a.metrics.values() {
                row.push(format!("{:?}", band.mean[i]));
                row.push(format!("{:?}", band.ci95[i]));
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}

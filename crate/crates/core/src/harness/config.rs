use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::solvers::{Budget, SolverConfig};

/// Declarative description of one experiment: what to solve, on which
/// network, with which methods, for how long and how many times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "one")]
    pub trials: usize,
    #[serde(default)]
    pub seed_base: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Trials per grid point during grid search.
    #[serde(default = "one")]
    pub grid_trials: usize,
    pub budget: Budget,
    pub problem: ProblemSpec,
    pub topology: TopologySpec,
    #[serde(default)]
    pub start: StartSpec,
    #[serde(default)]
    pub trace: TraceSpec,
    pub algorithms: Vec<AlgorithmSpec>,
    /// Directory relative data paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn one() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// `f_i(x) = ½‖x − a_i‖²` with `a_i ~ N(0, target_scale²)`.
    Quadratic {
        dim: usize,
        #[serde(default = "unit")]
        target_scale: f64,
    },
    Logistic { alpha: f64, data: DataSpec },
    /// Agents are placed by the geometric topology generator.
    Localization { n_targets: usize, sigma2: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    Synthetic { samples: usize, dim: usize },
    Libsvm { path: PathBuf, dim: Option<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub n_agents: usize,
    pub graph: GraphSpec,
    #[serde(default)]
    pub weights: WeightSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    Ring,
    Path,
    Star,
    Complete,
    ErdosRenyi { p: f64 },
    /// Uniform positions on `[−1, 1]²`, edges within `radius`.
    Geometric { radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightSpec {
    Laplacian { tau: Option<f64> },
    Metropolis {
        #[serde(default = "unit")]
        eps: f64,
    },
    Ring { self_weight: f64 },
    Averaging,
}

impl Default for WeightSpec {
    fn default() -> Self {
        WeightSpec::Laplacian { tau: None }
    }
}

/// Starting point, drawn from the initialization stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StartSpec {
    #[default]
    Zero,
    /// Entries uniform on `[−half_width, half_width]`; with `shared` every
    /// agent starts from the same row.
    Uniform {
        half_width: f64,
        #[serde(default)]
        shared: bool,
    },
}

impl StartSpec {
    /// Box used for the smoothness estimate of problems without a hint.
    pub fn half_width(&self) -> f64 {
        match self {
            StartSpec::Zero => 1.0,
            StartSpec::Uniform { half_width, .. } => *half_width,
        }
    }
}

/// Optional trace columns and extra outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct TraceSpec {
    pub lyapunov: bool,
    pub dual_residual: bool,
    /// Fills `wall_time_s`; traces are then no longer byte-reproducible.
    pub timing: bool,
    /// Also write each trace as JSON lines.
    pub jsonl: bool,
    /// Dump the final ADAPD state of every trial.
    pub checkpoint: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    /// Output subdirectory; defaults to the method name.
    pub label: Option<String>,
    /// `budget` and `seed` are overwritten by the experiment.
    #[serde(default)]
    pub solver: SolverConfig,
    /// Candidate values of the method's step parameter (`η`, `α₀` or `β`).
    #[serde(default)]
    pub grid: Vec<f64>,
    /// Candidate inner tolerance scales `ε̂`, crossed with `grid`.
    #[serde(default)]
    pub eps_hat_grid: Vec<f64>,
    /// Candidate tolerance decay exponents `d`, crossed with the others.
    #[serde(default)]
    pub decay_grid: Vec<f64>,
}

impl AlgorithmSpec {
    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.solver.method.name().to_string())
    }

    pub fn has_grid(&self) -> bool {
        !(self.grid.is_empty() && self.eps_hat_grid.is_empty() && self.decay_grid.is_empty())
    }

    /// Cartesian product of the grids; an empty grid keeps the configured
    /// value. Ordered by step, then `ε̂`, then `d`.
    pub fn candidates(&self) -> Vec<SolverConfig> {
        let keep = |g: &[f64], v: f64| if g.is_empty() { vec![v] } else { g.to_vec() };
        let steps = keep(&self.grid, self.solver.step_size_raw());
        let eps = keep(&self.eps_hat_grid, self.solver.inner.eps_hat);
        let decays = keep(&self.decay_grid, self.solver.inner.decay);
        let mut out = Vec::with_capacity(steps.len() * eps.len() * decays.len());
        for &s in &steps {
            for &e in &eps {
                for &d in &decays {
                    let mut c = self.solver.clone().with_step(s);
                    c.inner.eps_hat = e;
                    c.inner.decay = d;
                    out.push(c);
                }
            }
        }
        out
    }
}

impl ExperimentConfig {
    /// Reads a TOML file, applies `key=value` overrides and validates.
    pub fn from_path(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })?;
        let mut cfg = Self::from_toml_str(&text, overrides)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self, HarnessError> {
        let mut value: toml::Table = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: ExperimentConfig = value.try_into().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The fully resolved configuration as TOML.
    pub fn to_toml(&self) -> Result<String, HarnessError> {
        toml::to_string_pretty(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let err = |m: String| Err(HarnessError::Config(m));
        if self.trials == 0 || self.grid_trials == 0 {
            return err("trials and grid_trials must be >= 1".into());
        }
        if self.algorithms.is_empty() {
            return err("at least one [[algorithms]] entry is required".into());
        }
        let n = self.topology.n_agents;
        if n == 0 {
            return err("topology.n_agents must be >= 1".into());
        }
        let mut labels = HashSet::new();
        for a in &self.algorithms {
            let label = a.label();
            if !labels.insert(label.clone()) {
                return err(format!("duplicate algorithm label {label:?}"));
            }
            a.solver.validate().map_err(|m| HarnessError::Config(format!("{label}: {m}")))?;
            if let Some(v) = a.grid.iter().chain(&a.eps_hat_grid).find(|v| !(v.is_finite() && **v > 0.0)) {
                return err(format!("{label}: grid value {v} must be positive"));
            }
            if let Some(v) = a.decay_grid.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return err(format!("{label}: decay {v} must be non-negative"));
            }
        }
        match &self.problem {
            ProblemSpec::Quadratic { dim, target_scale } => {
                if *dim == 0 || !(*target_scale >= 0.0) {
                    return err("quadratic problem needs dim >= 1 and target_scale >= 0".into());
                }
            }
            ProblemSpec::Logistic { alpha, data } => {
                if !(*alpha >= 0.0) {
                    return err(format!("alpha = {alpha} must be non-negative"));
                }
                if let DataSpec::Synthetic { samples, dim } = data {
                    if *samples < n || *dim == 0 {
                        return err(format!("synthetic data needs samples >= n_agents and dim >= 1, got {samples}, {dim}"));
                    }
                }
            }
            ProblemSpec::Localization { n_targets, sigma2 } => {
                if !matches!(self.topology.graph, GraphSpec::Geometric { .. }) {
                    return err("localization requires a geometric topology".into());
                }
                if *n_targets == 0 || !(*sigma2 >= 0.0) {
                    return err("localization needs n_targets >= 1 and sigma2 >= 0".into());
                }
            }
        }
        if matches!(self.topology.weights, WeightSpec::Ring { .. }) && !matches!(self.topology.graph, GraphSpec::Ring) {
            return err("ring weights require a ring graph".into());
        }
        if let StartSpec::Uniform { half_width, .. } = self.start {
            if !(half_width >= 0.0) {
                return err(format!("start half_width = {half_width} must be non-negative"));
            }
        }
        Ok(())
    }

    /// Resolves a data path against the configuration file's directory.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }
}

/// Applies `a.b.c=value`. Numeric segments index arrays. The value is parsed
/// as a TOML literal, falling back to a bare string.
pub fn apply_override(root: &mut toml::Table, spec: &str) -> Result<(), HarnessError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| HarnessError::Config(format!("override {spec:?} is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed table has key v"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(HarnessError::Config(format!("bad override key {key:?}")));
    }
    let (last, path) = parts.split_last().expect("split yields at least one part");
    let mut whole = toml::Value::Table(std::mem::take(root));
    let result = set_path(&mut whole, path, last, value, key);
    if let toml::Value::Table(t) = whole {
        *root = t;
    }
    result
}

fn set_path(whole: &mut toml::Value, path: &[&str], last: &str, value: toml::Value, key: &str) -> Result<(), HarnessError> {
    let mut cur = whole;
    for seg in path {
        cur = descend(cur, seg, key)?;
    }
    match cur {
        toml::Value::Table(t) => {
            t.insert(last.to_string(), value);
        }
        toml::Value::Array(a) => {
            let i: usize = last.parse().map_err(|_| HarnessError::Config(format!("{key}: {last:?} is not an index")))?;
            let slot = a.get_mut(i).ok_or_else(|| HarnessError::Config(format!("{key}: index {i} out of range")))?;
            *slot = value;
        }
        _ => return Err(HarnessError::Config(format!("{key}: cannot set a field on a scalar"))),
    }
    Ok(())
}

fn descend<'a>(cur: &'a mut toml::Value, seg: &str, key: &str) -> Result<&'a mut toml::Value, HarnessError> {
    match cur {
        toml::Value::Table(t) => Ok(t.entry(seg.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()))),
        toml::Value::Array(a) => {
            let i: usize = seg.parse().map_err(|_| HarnessError::Config(format!("{key}: {seg:?} is not an index")))?;
            a.get_mut(i).ok_or_else(|| HarnessError::Config(format!("{key}: index {i} out of range")))
        }
        _ => Err(HarnessError::Config(format!("{key}: {seg:?} descends into a scalar"))),
    }
}

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::{DataSpec, ExperimentConfig, GraphSpec, ProblemSpec, StartSpec, TopologySpec, WeightSpec};
use super::HarnessError;
use crate::problems::{
    estimate_smoothness, generate_localization_instance, parse_libsvm, partition_uniform, synthetic_logistic,
    LocalizationInstance, LocalizationObjective, LogisticNonconvex, ObjectiveOracle, QuadraticConsensus,
};
use crate::rng::{stream_rng, Stream};
use crate::topology::{
    build_erdos_renyi, build_geometric, build_ring, laplacian_weights, metropolis_weights, Graph, MixingMatrix,
};

/// Random pairs per agent for the smoothness estimate.
pub const SMOOTHNESS_SAMPLES: usize = 50;

/// Everything one trial needs, built from the trial seed.
pub struct TrialSetup {
    pub graph: Graph,
    pub mixing: MixingMatrix,
    pub problem: Box<dyn ObjectiveOracle>,
    pub localization: Option<LocalizationInstance>,
    pub x_start: Array2<f64>,
    /// Problem hint, or the sampled estimate when there is none.
    pub lipschitz: f64,
}

pub fn build_graph(spec: &TopologySpec, seed: u64) -> Result<(Graph, Option<Array2<f64>>), HarnessError> {
    let n = spec.n_agents;
    Ok(match spec.graph {
        GraphSpec::Ring => (Graph::ring(n)?, None),
        GraphSpec::Path => (Graph::path(n)?, None),
        GraphSpec::Star => (Graph::star(n)?, None),
        GraphSpec::Complete => (Graph::complete(n)?, None),
        GraphSpec::ErdosRenyi { p } => (build_erdos_renyi(n, p, seed)?, None),
        GraphSpec::Geometric { radius } => {
            let (g, pos) = build_geometric(n, radius, seed)?;
            (g, Some(pos))
        }
    })
}

pub fn build_mixing(spec: &WeightSpec, graph: &Graph) -> Result<MixingMatrix, HarnessError> {
    Ok(match *spec {
        WeightSpec::Laplacian { tau } => laplacian_weights(graph, tau)?,
        WeightSpec::Metropolis { eps } => metropolis_weights(graph, eps)?,
        WeightSpec::Ring { self_weight } => build_ring(graph.n_agents(), self_weight)?,
        WeightSpec::Averaging => MixingMatrix::averaging(graph.n_agents()),
    })
}

/// Network of a trial without building the problem.
pub fn build_topology(cfg: &ExperimentConfig, seed: u64) -> Result<(Graph, MixingMatrix), HarnessError> {
    let (graph, _) = build_graph(&cfg.topology, seed)?;
    let mixing = build_mixing(&cfg.topology.weights, &graph)?;
    Ok((graph, mixing))
}

pub fn build_trial(cfg: &ExperimentConfig, seed: u64) -> Result<TrialSetup, HarnessError> {
    let n = cfg.topology.n_agents;
    let (graph, problem, localization): (Graph, Box<dyn ObjectiveOracle>, _) = match &cfg.problem {
        ProblemSpec::Quadratic { dim, target_scale } => {
            let mut rng = stream_rng(seed, Stream::Noise);
            let targets = Array2::from_shape_fn((n, *dim), |_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                target_scale * z
            });
            (build_graph(&cfg.topology, seed)?.0, Box::new(QuadraticConsensus::new(targets)), None)
        }
        ProblemSpec::Logistic { alpha, data } => {
            let data = match data {
                DataSpec::Synthetic { samples, dim } => synthetic_logistic(*samples, *dim, seed),
                DataSpec::Libsvm { path, dim } => parse_libsvm(cfg.resolve(path), *dim)?,
            };
            let data = partition_uniform(&data, n, seed)?;
            (build_graph(&cfg.topology, seed)?.0, Box::new(LogisticNonconvex::new(data, *alpha)?), None)
        }
        ProblemSpec::Localization { n_targets, sigma2 } => {
            let GraphSpec::Geometric { radius } = cfg.topology.graph else {
                return Err(HarnessError::Config("localization requires a geometric topology".into()));
            };
            let (graph, inst) = generate_localization_instance(n, *n_targets, *sigma2, seed, radius)?;
            (graph, Box::new(LocalizationObjective::new(inst.clone())), Some(inst))
        }
    };
    let mixing = build_mixing(&cfg.topology.weights, &graph)?;
    let x_start = start_point(&cfg.start, n, problem.dim(), seed);
    let lipschitz = match problem.smoothness() {
        Some(l) => l,
        None => estimate_smoothness(problem.as_ref(), cfg.start.half_width(), SMOOTHNESS_SAMPLES, seed),
    };
    Ok(TrialSetup { graph, mixing, problem, localization, x_start, lipschitz })
}

pub fn start_point(spec: &StartSpec, n: usize, p: usize, seed: u64) -> Array2<f64> {
    match *spec {
        StartSpec::Zero => Array2::zeros((n, p)),
        StartSpec::Uniform { half_width, shared } => {
            let mut rng = stream_rng(seed, Stream::Initialization);
            let mut draw = || if half_width > 0.0 { rng.random_range(-half_width..=half_width) } else { 0.0 };
            if shared {
                let row: Vec<f64> = (0..p).map(|_| draw()).collect();
                Array2::from_shape_fn((n, p), |(_, j)| row[j])
            } else {
                Array2::from_shape_fn((n, p), |_| draw())
            }
        }
    }
}

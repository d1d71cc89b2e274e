//! Agent graphs and mixing matrices.
//!
//! A [`MixingMatrix`] is stored dense (networks here have at most a few hundred
//! agents) together with its eigendecomposition and its spectral gap
//! `ρ = ‖W − (1/N)eeᵀ‖₂`. Applying it to an `N×p` block goes through the
//! per-agent neighbor lists, which is exactly one synchronous communication
//! round.

use std::collections::{BTreeSet, VecDeque};

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::SymEigen;
use crate::rng::{stream_rng, Stream};

/// Maximum number of whole-graph resamples before the Erdős–Rényi generator
/// gives up.
pub const CONNECTIVITY_RETRIES: usize = 100;
/// Resample budget for geometric graphs. Sparse radii (50 agents at 0.3, 20 at
/// 0.45) are connected well under 1% of the time, so 100 draws is not enough.
pub const GEOMETRIC_RETRIES: usize = 20_000;
/// Default `ε` in the Gershgorin choice `τ = max|𝒩_i| + ε`.
pub const GERSHGORIN_EPS: f64 = 1.0;

pub const ROW_SUM_TOL: f64 = 1e-12;
pub const SYMMETRY_TOL: f64 = 1e-12;
pub const EIGEN_TOL: f64 = 1e-10;
/// `ρ` at or above `1 − DEGENERATE_GAP_TOL` is rejected.
pub const DEGENERATE_GAP_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("graph is not connected")]
    Disconnected,
    #[error("could not generate a connected graph after {attempts} attempts")]
    GenerationFailed { attempts: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate spectrum: rho = {rho} (disconnected or periodic structure)")]
    DegenerateSpectrum { rho: f64 },
}

pub type Result<T> = std::result::Result<T, TopologyError>;

/// Undirected simple graph over agents `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from an edge list. Edges are normalized to `(min, max)`
    /// and sorted; self-loops, duplicates and out-of-range endpoints are
    /// rejected. Connectivity is *not* required here, see [`Graph::is_connected`].
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(TopologyError::InvalidTopology("graph needs at least one agent".into()));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(TopologyError::InvalidTopology(format!("self-loop at agent {a}")));
            }
            if a >= n || b >= n {
                return Err(TopologyError::InvalidTopology(format!(
                    "edge ({a},{b}) out of range for {n} agents"
                )));
            }
            if !set.insert((a.min(b), a.max(b))) {
                return Err(TopologyError::InvalidTopology(format!("duplicate edge ({a},{b})")));
            }
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in &edges {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Self { n, edges, neighbors })
    }

    pub fn ring(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(TopologyError::InvalidTopology(format!("ring needs n >= 3, got {n}")));
        }
        Self::new(n, (0..n).map(|i| (i, (i + 1) % n)))
    }

    pub fn path(n: usize) -> Result<Self> {
        Self::new(n, (1..n).map(|i| (i - 1, i)))
    }

    /// Star with agent 0 at the center.
    pub fn star(n: usize) -> Result<Self> {
        Self::new(n, (1..n).map(|i| (0, i)))
    }

    pub fn complete(n: usize) -> Result<Self> {
        Self::new(n, (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))))
    }

    pub fn n_agents(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn max_degree(&self) -> usize {
        self.neighbors.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &u in &self.neighbors[v] {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    queue.push_back(u);
                }
            }
        }
        count == self.n
    }

    fn require_connected(&self) -> Result<()> {
        if self.is_connected() {
            Ok(())
        } else {
            Err(TopologyError::Disconnected)
        }
    }

    /// Unsigned-degree graph Laplacian `L = D − A` (the signed Laplacian `L⁻`).
    pub fn laplacian(&self) -> Array2<f64> {
        let mut l = Array2::zeros((self.n, self.n));
        for &(a, b) in &self.edges {
            l[[a, b]] = -1.0;
            l[[b, a]] = -1.0;
            l[[a, a]] += 1.0;
            l[[b, b]] += 1.0;
        }
        l
    }

    pub fn descriptor(&self) -> GraphDescriptor {
        GraphDescriptor { n_agents: self.n, edges: self.edges.clone() }
    }
}

/// JSON-friendly form of a [`Graph`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDescriptor {
    pub n_agents: usize,
    pub edges: Vec<(usize, usize)>,
}

impl TryFrom<GraphDescriptor> for Graph {
    type Error = TopologyError;

    fn try_from(d: GraphDescriptor) -> Result<Self> {
        Graph::new(d.n_agents, d.edges)
    }
}

/// Erdős–Rényi `G(n, p)`, resampled until connected.
///
/// Pairs `(i, j)` with `i < j` are visited in lexicographic order and each
/// consumes one uniform draw from the topology stream.
pub fn build_erdos_renyi(n: usize, p: f64, seed: u64) -> Result<Graph> {
    if n < 2 {
        return Err(TopologyError::InvalidTopology(format!("Erdős–Rényi needs n >= 2, got {n}")));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(TopologyError::InvalidParameter(format!("edge probability {p} not in (0,1]")));
    }
    let mut rng = stream_rng(seed, Stream::Topology);
    for _ in 0..CONNECTIVITY_RETRIES {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        let g = Graph::new(n, edges)?;
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(TopologyError::GenerationFailed { attempts: CONNECTIVITY_RETRIES })
}

/// Random geometric graph on `[−1, 1]²`: agents are joined when their
/// Euclidean distance is at most `radius`. Returns the graph and the `N×2`
/// agent positions.
pub fn build_geometric(n: usize, radius: f64, seed: u64) -> Result<(Graph, Array2<f64>)> {
    if n < 2 {
        return Err(TopologyError::InvalidTopology(format!("geometric graph needs n >= 2, got {n}")));
    }
    if !(radius > 0.0) {
        return Err(TopologyError::InvalidParameter(format!("radius {radius} must be positive")));
    }
    let mut rng = stream_rng(seed, Stream::Topology);
    for _ in 0..GEOMETRIC_RETRIES {
        let mut pos = Array2::zeros((n, 2));
        for i in 0..n {
            pos[[i, 0]] = rng.random_range(-1.0..1.0);
            pos[[i, 1]] = rng.random_range(-1.0..1.0);
        }
        let g = Graph::new(n, geometric_edges(pos.view(), radius))?;
        if g.is_connected() {
            return Ok((g, pos));
        }
    }
    Err(TopologyError::GenerationFailed { attempts: GEOMETRIC_RETRIES })
}

fn geometric_edges(pos: ArrayView2<f64>, radius: f64) -> Vec<(usize, usize)> {
    let n = pos.nrows();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = pos[[i, 0]] - pos[[j, 0]];
            let dy = pos[[i, 1]] - pos[[j, 1]];
            if (dx * dx + dy * dy).sqrt() <= radius {
                edges.push((i, j));
            }
        }
    }
    edges
}

/// Where a mixing matrix came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MixingSource {
    Laplacian { tau: f64 },
    Metropolis { eps: f64 },
    Ring { self_weight: f64 },
    Power { degree: usize, base: Box<MixingSource> },
    Averaging,
    Custom,
}

/// Symmetric mixing matrix with cached spectrum.
#[derive(Debug, Clone)]
pub struct MixingMatrix {
    weights: Array2<f64>,
    rho: f64,
    source: MixingSource,
    eigen: SymEigen,
    rows: Vec<Vec<(usize, f64)>>,
}

impl MixingMatrix {
    /// Wraps an arbitrary square matrix. Nothing is validated; use
    /// [`validate_mixing`] or [`spectral_gap`] for that.
    pub fn new(weights: Array2<f64>, source: MixingSource) -> Self {
        let n = weights.nrows();
        assert_eq!(n, weights.ncols(), "mixing matrix must be square");
        let eigen = SymEigen::new(weights.view());
        let centered = &weights - 1.0 / n as f64;
        let centered_eigen = SymEigen::new(centered.view());
        let rho = centered_eigen.max().abs().max(centered_eigen.min().abs());
        let rows = (0..n)
            .map(|i| (0..n).filter(|&j| weights[[i, j]] != 0.0).map(|j| (j, weights[[i, j]])).collect())
            .collect();
        Self { weights, rho, source, eigen, rows }
    }

    /// The exact averaging matrix `(1/N)eeᵀ` (`ρ = 0`).
    pub fn averaging(n: usize) -> Self {
        Self::new(Array2::from_elem((n, n), 1.0 / n as f64), MixingSource::Averaging)
    }

    pub fn n_agents(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> ArrayView2<'_, f64> {
        self.weights.view()
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn source(&self) -> &MixingSource {
        &self.source
    }

    /// Eigendecomposition of `W`, ascending.
    pub fn eigen(&self) -> &SymEigen {
        &self.eigen
    }

    /// Nonzero entries `(j, w_ij)` of row `i`, diagonal included.
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// Number of neighbor rounds one application of this matrix costs.
    pub fn rounds(&self) -> usize {
        match &self.source {
            MixingSource::Power { degree, .. } => *degree,
            _ => 1,
        }
    }

    /// `W·A` computed agent by agent from neighbor values.
    pub fn apply(&self, a: ArrayView2<f64>) -> Array2<f64> {
        assert_eq!(a.nrows(), self.n_agents());
        let mut out = Array2::zeros(a.raw_dim());
        for (i, row) in self.rows.iter().enumerate() {
            let mut target = out.row_mut(i);
            for &(j, w) in row {
                target.scaled_add(w, &a.row(j));
            }
        }
        out
    }

    pub fn descriptor(&self) -> MixingDescriptor {
        let n = self.n_agents();
        let mut weights = Vec::new();
        for i in 0..n {
            for &(j, w) in &self.rows[i] {
                weights.push((i, j, w));
            }
        }
        MixingDescriptor { n_agents: n, source: self.source.clone(), rho: self.rho, weights }
    }
}

/// JSON provenance record of a mixing matrix: nonzero weight triples plus `ρ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingDescriptor {
    pub n_agents: usize,
    pub source: MixingSource,
    pub rho: f64,
    pub weights: Vec<(usize, usize, f64)>,
}

impl From<MixingDescriptor> for MixingMatrix {
    fn from(d: MixingDescriptor) -> Self {
        let mut w = Array2::zeros((d.n_agents, d.n_agents));
        for (i, j, v) in d.weights {
            w[[i, j]] = v;
        }
        MixingMatrix::new(w, d.source)
    }
}

/// Circulant ring matrix: `self_weight` on the diagonal and
/// `(1 − self_weight)/2` to each of the two cycle neighbors.
pub fn build_ring(n: usize, self_weight: f64) -> Result<MixingMatrix> {
    if n < 3 {
        return Err(TopologyError::InvalidTopology(format!("ring needs n >= 3, got {n}")));
    }
    if !(self_weight > 0.0 && self_weight < 1.0) {
        return Err(TopologyError::InvalidParameter(format!("self weight {self_weight} not in (0,1)")));
    }
    let side = (1.0 - self_weight) / 2.0;
    let mut w = Array2::zeros((n, n));
    for i in 0..n {
        w[[i, i]] = self_weight;
        w[[i, (i + 1) % n]] += side;
        w[[i, (i + n - 1) % n]] += side;
    }
    Ok(MixingMatrix::new(w, MixingSource::Ring { self_weight }))
}

/// Gershgorin-safe `τ = max_i |𝒩_i| + eps`.
pub fn gershgorin_tau(g: &Graph, eps: f64) -> f64 {
    g.max_degree() as f64 + eps
}

/// Laplacian constant-edge-weight matrix `W = I − L/τ`.
///
/// `tau` defaults to [`gershgorin_tau`] with [`GERSHGORIN_EPS`]. A supplied
/// `tau` must exceed `λ₁(L)/2`; equality (within 1e−12) is rejected.
pub fn laplacian_weights(g: &Graph, tau: Option<f64>) -> Result<MixingMatrix> {
    g.require_connected()?;
    let lap = g.laplacian();
    let tau = match tau {
        None => gershgorin_tau(g, GERSHGORIN_EPS),
        Some(t) => {
            let lambda_max = SymEigen::new(lap.view()).max();
            if !(t > 0.5 * lambda_max + 1e-12) {
                return Err(TopologyError::InvalidParameter(format!(
                    "tau = {t} must exceed lambda_1(L)/2 = {}",
                    0.5 * lambda_max
                )));
            }
            t
        }
    };
    let n = g.n_agents();
    let w = Array2::from_shape_fn((n, n), |(i, j)| if i == j { 1.0 } else { 0.0 } - lap[[i, j]] / tau);
    Ok(MixingMatrix::new(w, MixingSource::Laplacian { tau }))
}

/// Metropolis constant-edge-weight matrix:
/// `w_ij = 1/(max{|𝒩_i|,|𝒩_j|} + eps)` on edges, diagonal completes each row to 1.
pub fn metropolis_weights(g: &Graph, eps: f64) -> Result<MixingMatrix> {
    g.require_connected()?;
    if !(eps > 0.0) {
        return Err(TopologyError::InvalidParameter(format!("eps = {eps} must be positive")));
    }
    let n = g.n_agents();
    let mut w = Array2::zeros((n, n));
    for &(a, b) in g.edges() {
        let v = 1.0 / (g.degree(a).max(g.degree(b)) as f64 + eps);
        w[[a, b]] = v;
        w[[b, a]] = v;
    }
    for i in 0..n {
        let off: f64 = g.neighbors(i).iter().map(|&j| w[[i, j]]).sum();
        w[[i, i]] = 1.0 - off;
    }
    Ok(MixingMatrix::new(w, MixingSource::Metropolis { eps }))
}

/// Spectral gap `ρ = max{|λ₂|, |λ_N|}`; errors when `ρ ≥ 1 − 1e−12`.
pub fn spectral_gap(w: &MixingMatrix) -> Result<f64> {
    if w.rho() >= 1.0 - DEGENERATE_GAP_TOL {
        Err(TopologyError::DegenerateSpectrum { rho: w.rho() })
    } else {
        Ok(w.rho())
    }
}

/// Dense `W^R`. One application of the result costs `R` communication rounds.
pub fn power_matrix(w: &MixingMatrix, degree: usize) -> Result<MixingMatrix> {
    if degree == 0 {
        return Err(TopologyError::InvalidParameter("matrix power must be >= 1".into()));
    }
    if degree == 1 {
        return Ok(w.clone());
    }
    let base = w.weights();
    let mut acc = base.to_owned();
    for _ in 1..degree {
        acc = acc.dot(&base);
    }
    let sym = (&acc + &acc.t()) * 0.5;
    Ok(MixingMatrix::new(sym, MixingSource::Power { degree, base: Box::new(w.source().clone()) }))
}

/// Measured compliance of a mixing matrix with the four structural
/// requirements: graph sparsity, symmetry, null space `span{e}`, spectrum in
/// `(−1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub decentralized: bool,
    pub symmetric: bool,
    pub null_space: bool,
    pub spectral: bool,
    pub max_row_sum_deviation: f64,
    pub symmetry_deviation: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub unit_eigenvalue_multiplicity: usize,
    /// Off-diagonal `(i, j)` whose zero/nonzero status disagrees with the graph.
    pub pattern_mismatches: Vec<(usize, usize)>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.decentralized && self.symmetric && self.null_space && self.spectral
    }
}

pub fn validate_mixing(w: &MixingMatrix, g: &Graph) -> ValidationReport {
    let n = w.n_agents();
    assert_eq!(n, g.n_agents(), "mixing matrix and graph disagree on agent count");
    let m = w.weights();

    let mut pattern_mismatches = Vec::new();
    let mut symmetry_deviation: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            symmetry_deviation = symmetry_deviation.max((m[[i, j]] - m[[j, i]]).abs());
            if i != j && (m[[i, j]] > 0.0) != g.has_edge(i, j) {
                pattern_mismatches.push((i, j));
            }
        }
    }
    let max_row_sum_deviation = m
        .rows()
        .into_iter()
        .map(|r| (r.sum() - 1.0).abs())
        .fold(0.0, f64::max);

    let values: &Array1<f64> = &w.eigen().values;
    let unit_eigenvalue_multiplicity = values.iter().filter(|&&v| (v - 1.0).abs() <= EIGEN_TOL).count();
    let min_eigenvalue = w.eigen().min();
    let max_eigenvalue = w.eigen().max();

    ValidationReport {
        decentralized: pattern_mismatches.is_empty(),
        symmetric: symmetry_deviation <= SYMMETRY_TOL,
        null_space: max_row_sum_deviation <= ROW_SUM_TOL && unit_eigenvalue_multiplicity == 1,
        spectral: min_eigenvalue > -1.0 + EIGEN_TOL && max_eigenvalue <= 1.0 + EIGEN_TOL,
        max_row_sum_deviation,
        symmetry_deviation,
        min_eigenvalue,
        max_eigenvalue,
        unit_eigenvalue_multiplicity,
        pattern_mismatches,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn ring_of_four_half_self_weight() {
        let w = build_ring(4, 0.5).unwrap();
        assert_eq!(w.weights().row(0).to_vec(), vec![0.5, 0.25, 0.0, 0.25]);
        // λ_k = ½ + ½cos(2πk/4) = {1, ½, 0, ½}
        assert_abs_diff_eq!(w.rho(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn ring_of_three_is_averaging() {
        let w = build_ring(3, 1.0 / 3.0).unwrap();
        for v in w.weights().iter() {
            assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(w.rho(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn ring_rejects_small_n_and_bad_weight() {
        assert!(matches!(build_ring(2, 0.5), Err(TopologyError::InvalidTopology(_))));
        assert!(matches!(build_ring(5, 1.0), Err(TopologyError::InvalidParameter(_))));
    }

    #[test]
    fn graph_rejects_loops_and_duplicates() {
        assert!(Graph::new(3, [(1, 1)]).is_err());
        assert!(Graph::new(3, [(0, 1), (1, 0)]).is_err());
        assert!(Graph::new(3, [(0, 3)]).is_err());
        assert!(!Graph::new(4, [(0, 1), (2, 3)]).unwrap().is_connected());
    }

    #[test]
    fn erdos_renyi_forced_single_edge() {
        for seed in 0..5 {
            let g = build_erdos_renyi(2, 1.0, seed).unwrap();
            assert_eq!(g.edges(), &[(0, 1)]);
        }
    }

    #[test]
    fn erdos_renyi_matches_replayed_stream() {
        let g = build_erdos_renyi(10, 0.5, 1).unwrap();
        // Independent replay of the same stream with a different traversal
        // bookkeeping: draw all pair coins up front, then filter.
        let mut rng = stream_rng(1, Stream::Topology);
        let expected = loop {
            let coins: Vec<f64> = (0..45).map(|_| rng.random::<f64>()).collect();
            let pairs: Vec<(usize, usize)> =
                (0..10).flat_map(|i| ((i + 1)..10).map(move |j| (i, j))).collect();
            let edges: Vec<_> = pairs.into_iter().zip(coins).filter(|(_, c)| *c < 0.5).map(|(e, _)| e).collect();
            let candidate = Graph::new(10, edges).unwrap();
            if candidate.is_connected() {
                break candidate;
            }
        };
        assert_eq!(g.edges().len(), expected.edges().len());
        assert_eq!(g, expected);
    }

    #[test]
    fn erdos_renyi_fifty_agents_has_about_fifteen_neighbors() {
        let g = build_erdos_renyi(50, 0.3, 7).unwrap();
        assert!(g.is_connected());
        let mean_degree = 2.0 * g.edges().len() as f64 / 50.0;
        assert!((10.0..20.0).contains(&mean_degree), "mean degree {mean_degree}");
    }

    #[test]
    fn erdos_renyi_reports_exhausted_retries() {
        // p tiny on 30 agents is essentially never connected.
        let err = build_erdos_renyi(30, 1e-6, 0).unwrap_err();
        assert_eq!(err, TopologyError::GenerationFailed { attempts: CONNECTIVITY_RETRIES });
    }

    #[test]
    fn geometric_large_radius_always_joins_two_agents() {
        for seed in 0..5 {
            let (g, pos) = build_geometric(2, 3.0, seed).unwrap();
            assert_eq!(g.edges(), &[(0, 1)]);
            assert!(pos.iter().all(|v| (-1.0..1.0).contains(v)));
        }
    }

    #[test]
    fn geometric_adjacency_matches_distance_oracle() {
        let (g, pos) = build_geometric(5, 0.8, 3).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                if i == j {
                    continue;
                }
                let d = ((pos[[i, 0]] - pos[[j, 0]]).powi(2) + (pos[[i, 1]] - pos[[j, 1]]).powi(2)).sqrt();
                assert_eq!(g.has_edge(i, j), d <= 0.8, "pair ({i},{j}) at distance {d}");
            }
        }
    }

    #[test]
    fn geometric_fifty_agents_at_radius_point_three_is_connected() {
        let (g, _) = build_geometric(50, 0.3, 11).unwrap();
        assert!(g.is_connected());
    }

    #[test]
    fn laplacian_on_path_of_three() {
        let g = Graph::path(3).unwrap();
        let w = laplacian_weights(&g, Some(2.5)).unwrap();
        let expected = array![[0.6, 0.4, 0.0], [0.4, 0.2, 0.4], [0.0, 0.4, 0.6]];
        for (a, b) in w.weights().iter().zip(expected.iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-15);
        }
    }

    #[test]
    fn laplacian_single_edge_is_averaging() {
        let g = Graph::path(2).unwrap();
        let w = laplacian_weights(&g, Some(2.0)).unwrap();
        for v in w.weights().iter() {
            assert_abs_diff_eq!(*v, 0.5, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(w.rho(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn laplacian_rejects_tau_at_half_lambda_max() {
        // Path of three: λ(L) = {0, 1, 3}; τ must exceed 1.5.
        let g = Graph::path(3).unwrap();
        let err = laplacian_weights(&g, Some(1.5)).unwrap_err();
        assert!(matches!(err, TopologyError::InvalidParameter(ref m) if m.contains("1.5")), "{err}");
        assert!(laplacian_weights(&g, Some(1.5 + 1e-6)).is_ok());
    }

    #[test]
    fn laplacian_default_on_erdos_renyi_is_valid() {
        let g = build_erdos_renyi(50, 0.3, 7).unwrap();
        let w = laplacian_weights(&g, None).unwrap();
        let report = validate_mixing(&w, &g);
        assert!(report.all_pass(), "{report:?}");
    }

    #[test]
    fn metropolis_single_edge_and_star() {
        let w = metropolis_weights(&Graph::path(2).unwrap(), 1.0).unwrap();
        for v in w.weights().iter() {
            assert_abs_diff_eq!(*v, 0.5, epsilon = 1e-15);
        }
        let w = metropolis_weights(&Graph::star(3).unwrap(), 1.0).unwrap();
        let m = w.weights();
        assert_abs_diff_eq!(m[[0, 1]], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m[[0, 2]], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m[[0, 0]], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m[[1, 1]], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m[[2, 2]], 2.0 / 3.0, epsilon = 1e-15);
        assert!(validate_mixing(&w, &Graph::star(3).unwrap()).all_pass());
    }

    #[test]
    fn weights_require_connected_graph() {
        let g = Graph::new(4, [(0, 1), (2, 3)]).unwrap();
        assert_eq!(laplacian_weights(&g, None).unwrap_err(), TopologyError::Disconnected);
        assert_eq!(metropolis_weights(&g, 1.0).unwrap_err(), TopologyError::Disconnected);
    }

    #[test]
    fn spectral_gap_of_averaging_and_squares() {
        assert_abs_diff_eq!(spectral_gap(&MixingMatrix::averaging(6)).unwrap(), 0.0, epsilon = 1e-12);
        let w = build_ring(7, 0.4).unwrap();
        let rho = spectral_gap(&w).unwrap();
        let w2 = power_matrix(&w, 2).unwrap();
        assert_abs_diff_eq!(spectral_gap(&w2).unwrap(), rho * rho, epsilon = 1e-12);
    }

    #[test]
    fn spectral_gap_rejects_identity() {
        let w = MixingMatrix::new(Array2::eye(4), MixingSource::Custom);
        assert!(matches!(spectral_gap(&w), Err(TopologyError::DegenerateSpectrum { .. })));
    }

    #[test]
    fn power_matrix_cases() {
        let w = build_ring(4, 0.5).unwrap();
        let same = power_matrix(&w, 1).unwrap();
        assert_eq!(same.weights(), w.weights());
        let cube = power_matrix(&w, 3).unwrap();
        assert_abs_diff_eq!(cube.rho(), 0.125, epsilon = 1e-12);
        assert_eq!(cube.rounds(), 3);

        let g = build_erdos_renyi(9, 0.4, 2).unwrap();
        let w = metropolis_weights(&g, 0.5).unwrap();
        let sq = power_matrix(&w, 2).unwrap();
        let m = w.weights();
        for i in 0..9 {
            for j in 0..9 {
                let naive: f64 = (0..9).map(|k| m[[i, k]] * m[[k, j]]).sum();
                assert_abs_diff_eq!(sq.weights()[[i, j]], naive, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn validation_flags_identity_and_asymmetry() {
        let g = Graph::ring(5).unwrap();
        let eye = MixingMatrix::new(Array2::eye(5), MixingSource::Custom);
        let r = validate_mixing(&eye, &g);
        assert!(!r.null_space);
        assert_eq!(r.unit_eigenvalue_multiplicity, 5);

        let mut m = build_ring(5, 0.5).unwrap().weights().to_owned();
        m[[0, 1]] += 1e-3;
        let r = validate_mixing(&MixingMatrix::new(m, MixingSource::Custom), &g);
        assert!(!r.symmetric);
        assert_abs_diff_eq!(r.symmetry_deviation, 1e-3, epsilon = 1e-12);
    }

    #[test]
    fn validation_flags_pattern_mismatch() {
        let g = Graph::path(4).unwrap();
        let w = MixingMatrix::averaging(4);
        let r = validate_mixing(&w, &g);
        assert!(!r.decentralized);
        assert!(r.pattern_mismatches.contains(&(0, 2)));
    }

    #[test]
    fn apply_matches_dense_product() {
        let g = build_erdos_renyi(8, 0.5, 4).unwrap();
        let w = laplacian_weights(&g, None).unwrap();
        let a = Array2::from_shape_fn((8, 3), |(i, j)| (i as f64 * 0.7 - j as f64).sin());
        let dense = w.weights().dot(&a);
        for (x, y) in w.apply(a.view()).iter().zip(dense.iter()) {
            assert_abs_diff_eq!(*x, *y, epsilon = 1e-14);
        }
    }

    #[test]
    fn descriptor_roundtrip() {
        let g = build_erdos_renyi(6, 0.5, 5).unwrap();
        let w = metropolis_weights(&g, 1.0).unwrap();
        let json = serde_json::to_string(&w.descriptor()).unwrap();
        let back: MixingMatrix = serde_json::from_str::<MixingDescriptor>(&json).unwrap().into();
        assert_eq!(back.weights(), w.weights());
        let gj = serde_json::to_string(&g.descriptor()).unwrap();
        let g2 = Graph::try_from(serde_json::from_str::<GraphDescriptor>(&gj).unwrap()).unwrap();
        assert_eq!(g, g2);
    }
}

//! Reference graphs: clipping a diffusion kernel into an edge set, estimating
//! homophily from partial labels, and checking when rewiring against a
//! reference graph is expected to help.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Edge, EdgeSet, LabelCounts, Label, LabeledGraph, Split};
use crate::kernel::{self, DenseKernel, KernelConfig, Metric};
use crate::rational::{to_f64, Rational};
use crate::seed::rng_from_seed;

/// Row-mean comparisons tolerate this much relative round-off, so a row that
/// is mathematically constant keeps every entry.
pub const CLIP_RELATIVE_SLACK: f64 = 1e-12;

/// Ratio `|E_r| / |E|` from which `H(G_r)` is reported as a usable stand-in
/// for `H(G_r \ G)`.
pub const SURROGATE_RATIO: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceSource {
    Pdp,
    DOnly,
    Synthetic,
}

/// Which kernel the reference graph is clipped from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelChoice {
    /// `Γ = P·D·P` (features and training labels).
    #[default]
    Pdp,
    /// `Γ = D` (features only).
    DOnly,
}

/// How a row-wise clipped (hence asymmetric) matrix becomes undirected edges.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symmetrization {
    /// Keep `(i, j)` if either row admits it.
    #[default]
    Or,
    /// Keep `(i, j)` only if both rows admit it.
    And,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceGraph {
    pub edges: EdgeSet,
    pub source: ReferenceSource,
    pub estimated_homophily: Option<Rational>,
}

impl ReferenceGraph {
    pub fn new(edges: EdgeSet, source: ReferenceSource) -> Self {
        ReferenceGraph {
            edges,
            source,
            estimated_homophily: None,
        }
    }

    pub fn node_count(&self) -> usize {
        self.edges.node_count()
    }
}

/// Binary kernel `Γ̂(i, j) = [Γ(i, j) ≥ μᵢ]` with `μᵢ` the mean of row `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClippedKernel {
    pub values: Array2<bool>,
    pub row_means: Vec<f64>,
}

/// Clips each row of `gamma` at its mean (the diagonal takes part in the mean).
pub fn clip_kernel(gamma: &DenseKernel) -> ClippedKernel {
    clip_matrix(gamma.values().view())
}

fn clip_matrix(gamma: ArrayView2<f64>) -> ClippedKernel {
    let (rows, cols) = gamma.dim();
    let mut values = Array2::from_elem((rows, cols), false);
    let mut row_means = Vec::with_capacity(rows);
    for (i, row) in gamma.outer_iter().enumerate() {
        let mean = row.sum() / cols as f64;
        let threshold = mean - CLIP_RELATIVE_SLACK * mean.abs();
        for (j, v) in row.iter().enumerate() {
            values[[i, j]] = *v >= threshold;
        }
        row_means.push(mean);
    }
    ClippedKernel { values, row_means }
}

/// Undirected, loop-free edge set of a clipped kernel.
pub fn edges_from_clipped(
    clipped: &ClippedKernel,
    rule: Symmetrization,
    source: ReferenceSource,
) -> ReferenceGraph {
    let c = &clipped.values;
    let n = c.nrows();
    let mut edges = EdgeSet::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let keep = match rule {
                Symmetrization::Or => c[[i, j]] || c[[j, i]],
                Symmetrization::And => c[[i, j]] && c[[j, i]],
            };
            if keep {
                edges.insert(Edge::new(i, j).expect("i < j")).expect("in range");
            }
        }
    }
    ReferenceGraph::new(edges, source)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceConfig {
    pub kernel: KernelChoice,
    pub epsilon: f64,
    pub metric: Metric,
    pub symmetrization: Symmetrization,
}

impl ReferenceConfig {
    pub fn new(kernel: KernelChoice, epsilon: f64) -> Self {
        ReferenceConfig {
            kernel,
            epsilon,
            metric: Metric::Euclidean,
            symmetrization: Symmetrization::Or,
        }
    }
}

/// Result of building one reference graph: the kernel it was clipped from and
/// the resulting edges.
#[derive(Clone, Debug)]
pub struct ReferenceBuild {
    pub gamma: DenseKernel,
    pub reference: ReferenceGraph,
}

/// Builds `Γ` (either `P·D·P` or `D`) from features and training labels and
/// clips it into a reference graph. `train_labels[i]` must be `None` for every
/// node whose label may not be used.
pub fn build_reference(
    features: ArrayView2<f64>,
    train_labels: &[Option<Label>],
    cfg: &ReferenceConfig,
) -> Result<ReferenceBuild> {
    if features.nrows() != train_labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} feature rows, {} labels",
            features.nrows(),
            train_labels.len()
        )));
    }
    let kcfg = KernelConfig::new(cfg.epsilon, cfg.metric)?;
    let d = kernel::normalize(&kernel::gaussian_affinity(features, &kcfg)?)?;
    let (gamma, source) = match cfg.kernel {
        KernelChoice::DOnly => (d, ReferenceSource::DOnly),
        KernelChoice::Pdp => {
            let p = kernel::normalize(&kernel::label_affinity(train_labels))?;
            (kernel::pdp_product(&p, &d)?, ReferenceSource::Pdp)
        }
    };
    let reference = edges_from_clipped(&clip_kernel(&gamma), cfg.symmetrization, source);
    Ok(ReferenceBuild { gamma, reference })
}

/// Builds an independent reference graph inside each cluster and returns
/// their union over the full node set. Cross-cluster pairs are never
/// reference edges.
pub fn build_reference_over_clusters(
    g: &LabeledGraph,
    clusters: &[Vec<usize>],
    cfg: &ReferenceConfig,
) -> Result<ReferenceGraph> {
    let features = g
        .features()
        .ok_or_else(|| Error::MissingLabels("node features (required for the kernel)".into()))?;
    let train = g.train_labels();
    let parts: Vec<Result<Vec<Edge>>> = clusters
        .par_iter()
        .map(|nodes| {
            let x = features.select(ndarray::Axis(0), nodes);
            let labels: Vec<_> = nodes.iter().map(|&v| train[v]).collect();
            let build = build_reference(x.view(), &labels, cfg)?;
            Ok(build
                .reference
                .edges
                .iter()
                .map(|e| Edge::new(nodes[e.u()], nodes[e.v()]).expect("distinct nodes"))
                .collect())
        })
        .collect();
    let mut edges = EdgeSet::new(g.node_count());
    for part in parts {
        for e in part? {
            edges.insert(e)?;
        }
    }
    let source = match cfg.kernel {
        KernelChoice::Pdp => ReferenceSource::Pdp,
        KernelChoice::DOnly => ReferenceSource::DOnly,
    };
    Ok(ReferenceGraph::new(edges, source))
}

/// Induced sample of a graph and its reference graph on validation nodes plus
/// a ratio-matched subsample of training nodes.
#[derive(Clone, Debug)]
pub struct SampledPair {
    /// Global ids of the sampled nodes, ascending.
    pub nodes: Vec<usize>,
    pub sampled_original: LabeledGraph,
    pub sampled_reference: ReferenceGraph,
    /// Validation nodes per sampled training node.
    pub sample_ratio: f64,
}

impl SampledPair {
    pub fn original_homophily(&self) -> Option<Rational> {
        LabelCounts::of(self.sampled_original.edges(), self.sampled_original.labels()).homophily()
    }

    pub fn reference_homophily(&self) -> Option<Rational> {
        LabelCounts::of(&self.sampled_reference.edges, self.sampled_original.labels()).homophily()
    }
}

/// Draws the sampled node set: every validation node, plus training nodes
/// drawn uniformly so that `val : sampled train` equals
/// `(val + test) : train` in the full graph. When the graph has no
/// validation or test nodes at all, every training node is taken.
pub fn sample_pair(g: &LabeledGraph, reference: &ReferenceGraph, seed: u64) -> Result<SampledPair> {
    if reference.node_count() != g.node_count() {
        return Err(Error::UniverseMismatch {
            left: g.node_count(),
            right: reference.node_count(),
        });
    }
    let train = g.nodes_in(Split::Train);
    let val = g.nodes_in(Split::Val);
    let unlabeled = val.len() + g.nodes_in(Split::Test).len();
    if train.is_empty() {
        return Err(Error::InsufficientSplit("train"));
    }
    let take = if unlabeled == 0 {
        train.len()
    } else {
        if val.is_empty() {
            return Err(Error::InsufficientSplit("val"));
        }
        if let Some(node) = val.iter().find(|&&v| g.labels()[v].is_none()) {
            return Err(Error::MissingLabels(format!("validation node {node}")));
        }
        let exact = val.len() as f64 * train.len() as f64 / unlabeled as f64;
        (exact.round() as usize).clamp(1, train.len())
    };
    let mut picked = train.clone();
    partial_shuffle(&mut picked, take, seed);
    picked.truncate(take);

    let mut nodes: Vec<usize> = picked.into_iter().chain(val.iter().copied()).collect();
    nodes.sort_unstable();
    let sampled_original = g.induced(&nodes);
    let sampled_reference = ReferenceGraph::new(reference.edges.induced(&nodes), reference.source);
    Ok(SampledPair {
        nodes,
        sampled_original,
        sampled_reference,
        sample_ratio: val.len() as f64 / take as f64,
    })
}

/// Moves a uniform random `k`-subset of `items` to the front (partial
/// Fisher–Yates driven by `seed`).
pub(crate) fn partial_shuffle<T>(items: &mut [T], k: usize, seed: u64) {
    use rand::Rng;
    let mut rng = rng_from_seed(seed);
    let len = items.len();
    for i in 0..k.min(len) {
        let j = rng.random_range(i..len);
        items.swap(i, j);
    }
}

/// `(H(Gˢ), H(G_rˢ))` from the sampled node set.
pub fn sampled_homophily_estimate(
    g: &LabeledGraph,
    reference: &ReferenceGraph,
    seed: u64,
) -> Result<(Rational, Rational)> {
    let pair = sample_pair(g, reference, seed)?;
    let original = pair.original_homophily().ok_or(Error::NoLabeledEdges)?;
    let reference = pair.reference_homophily().ok_or(Error::NoLabeledEdges)?;
    Ok((original, reference))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Fails,
    Undecidable,
}

/// Outcome of an addition or deletion condition check.
///
/// For addition the pool is `E_r \ E` and `margin = H(pool) − H(G)`; for
/// deletion the pool is `E ∩ E_rᶜ` and `margin = H(G) − H(pool)`. Either way
/// the condition holds exactly when `margin > 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionCheck {
    pub verdict: Verdict,
    pub graph_homophily: Option<Rational>,
    pub pool_homophily: Option<Rational>,
    pub margin: Option<Rational>,
    pub pool_size: usize,
    /// `H(G_r)`, the surrogate for `H(G_r \ G)` when `E_r` dwarfs `E`.
    pub reference_homophily: Option<Rational>,
    /// `|E_r| / |E|` (addition only).
    pub reference_to_graph_ratio: Option<f64>,
    /// `reference_to_graph_ratio ≥ SURROGATE_RATIO`.
    pub surrogate_applicable: bool,
}

fn decide(margin: Option<Rational>) -> Verdict {
    match margin {
        None => Verdict::Undecidable,
        Some(m) if m > Rational::from_integer(0) => Verdict::Holds,
        Some(_) => Verdict::Fails,
    }
}

/// Is `H(G_r \ G) > H(G)`? Uses the graph's known labels.
pub fn check_addition_condition(g: &LabeledGraph, reference: &ReferenceGraph) -> Result<ConditionCheck> {
    let pool = reference.edges.residual(g.edges())?;
    let labels = g.labels();
    let graph_h = LabelCounts::of(g.edges(), labels).homophily();
    let pool_h = LabelCounts::of(&pool, labels).homophily();
    let ref_h = LabelCounts::of(&reference.edges, labels).homophily();
    let margin = match (pool_h, graph_h) {
        (Some(p), Some(h)) => Some(p - h),
        _ => None,
    };
    let ratio = (!g.edges().is_empty())
        .then(|| reference.edges.len() as f64 / g.edges().len() as f64);
    Ok(ConditionCheck {
        verdict: decide(margin),
        graph_homophily: graph_h,
        pool_homophily: pool_h,
        margin,
        pool_size: pool.len(),
        reference_homophily: ref_h,
        reference_to_graph_ratio: ratio,
        surrogate_applicable: ratio.is_some_and(|r| r >= SURROGATE_RATIO),
    })
}

/// Is `H(G ∩ G_rᶜ) < H(G)`? Uses the graph's known labels.
pub fn check_deletion_condition(g: &LabeledGraph, reference: &ReferenceGraph) -> Result<ConditionCheck> {
    let pool = g.edges().residual(&reference.edges)?;
    let labels = g.labels();
    let graph_h = LabelCounts::of(g.edges(), labels).homophily();
    let pool_h = LabelCounts::of(&pool, labels).homophily();
    let ref_h = LabelCounts::of(&reference.edges, labels).homophily();
    let margin = match (pool_h, graph_h) {
        (Some(p), Some(h)) => Some(h - p),
        _ => None,
    };
    Ok(ConditionCheck {
        verdict: decide(margin),
        graph_homophily: graph_h,
        pool_homophily: pool_h,
        margin,
        pool_size: pool.len(),
        reference_homophily: ref_h,
        reference_to_graph_ratio: None,
        surrogate_applicable: false,
    })
}

/// Where the labels for a condition check come from. Never inferred.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum EvaluationMode {
    /// Every known label of the graph is trusted (synthetic data).
    Exact,
    /// Train and validation labels on a sampled subgraph.
    Sampled { seed: u64 },
}

#[derive(Clone, Debug)]
pub struct ConditionReport {
    pub mode: EvaluationMode,
    pub graph_homophily: Option<Rational>,
    pub reference_homophily: Option<Rational>,
    pub addition: ConditionCheck,
    pub deletion: ConditionCheck,
}

pub fn evaluate_conditions(
    g: &LabeledGraph,
    reference: &ReferenceGraph,
    mode: EvaluationMode,
) -> Result<ConditionReport> {
    let (graph, refg) = match mode {
        EvaluationMode::Exact => (g.clone(), reference.clone()),
        EvaluationMode::Sampled { seed } => {
            let pair = sample_pair(g, reference, seed)?;
            (pair.sampled_original, pair.sampled_reference)
        }
    };
    let addition = check_addition_condition(&graph, &refg)?;
    let deletion = check_deletion_condition(&graph, &refg)?;
    Ok(ConditionReport {
        mode,
        graph_homophily: addition.graph_homophily,
        reference_homophily: addition.reference_homophily,
        addition,
        deletion,
    })
}

/// The scale grid searched when no epsilon is given.
pub const DEFAULT_EPSILON_GRID: [f64; 10] = [1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e0, 1e1, 1e2];

#[derive(Clone, Debug)]
pub struct EpsilonSelection {
    pub epsilon: f64,
    pub score: Rational,
    /// Score per grid point, `None` where undecidable.
    pub scores: Vec<(f64, Option<Rational>)>,
}

/// Picks the grid scale whose reference graph scores best on the sampled
/// subgraph. The score is the homophily of sampled reference edges with at
/// least one validation endpoint: those are the edges whose correctness the
/// training labels cannot vouch for. Ties go to the larger epsilon.
pub fn select_epsilon(
    g: &LabeledGraph,
    clusters: &[Vec<usize>],
    grid: &[f64],
    cfg: &ReferenceConfig,
    seed: u64,
) -> Result<EpsilonSelection> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mut scores = Vec::with_capacity(grid.len());
    for &epsilon in grid {
        let cfg = ReferenceConfig { epsilon, ..*cfg };
        let reference = build_reference_over_clusters(g, clusters, &cfg)?;
        let pair = sample_pair(g, &reference, seed)?;
        let local_splits = pair.sampled_original.splits();
        let val_edges = pair
            .sampled_reference
            .edges
            .iter()
            .filter(|e| local_splits[e.u()] == Split::Val || local_splits[e.v()] == Split::Val);
        let score = LabelCounts::of(val_edges, pair.sampled_original.labels()).homophily();
        scores.push((epsilon, score));
    }
    let mut best: Option<(f64, Rational)> = None;
    for &(epsilon, score) in &scores {
        let Some(score) = score else { continue };
        best = match best {
            Some((e, s)) if s > score || (s == score && e >= epsilon) => Some((e, s)),
            _ => Some((epsilon, score)),
        };
    }
    let (epsilon, score) = best.ok_or(Error::AllUndecidable)?;
    log::info!("selected epsilon {epsilon:e} (score {:.4})", to_f64(&score));
    Ok(EpsilonSelection {
        epsilon,
        score,
        scores,
    })
}

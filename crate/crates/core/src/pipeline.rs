//! Cluster, build a reference graph per cluster, rewire each cluster, and
//! reassemble the full graph with the original inter-cluster edges.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Edge, EdgeSet, HomophilyReport, Label, LabelCounts, LabeledGraph};
use crate::partition::{self, Partition};
use crate::rational::Rational;
use crate::reference::{
    build_reference, evaluate_conditions, select_epsilon, ConditionReport, EpsilonSelection, EvaluationMode,
    KernelChoice, ReferenceConfig, ReferenceGraph, ReferenceSource,
};
use crate::rewire::{build_plan, execute, Direction, EdgeBudget, RewiredGraph};
use crate::seed::cluster_seed;

/// A single scale or a grid to search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsilonSpec {
    Value(f64),
    Grid(Vec<f64>),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterSize {
    /// See [`partition::auto_cluster_size`].
    #[default]
    Auto,
    #[serde(untagged)]
    Fixed(usize),
}

impl ClusterSize {
    pub fn resolve(&self, n: usize) -> usize {
        match *self {
            ClusterSize::Auto => partition::auto_cluster_size(n),
            ClusterSize::Fixed(c) => c,
        }
    }
}

/// Which labels diagnostics may read.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evaluation {
    /// All known labels (synthetic data).
    Exact,
    /// Train and validation labels, conditions checked on a sampled subgraph.
    #[default]
    Sampled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    pub reference: ReferenceConfig,
    pub epsilon: EpsilonSpec,
    pub direction: Direction,
    pub budget: EdgeBudget,
    pub cluster_size: ClusterSize,
    pub evaluation: Evaluation,
    pub seed: u64,
}

impl RefineConfig {
    pub fn new(epsilon: f64, direction: Direction, budget: EdgeBudget, seed: u64) -> Self {
        RefineConfig {
            reference: ReferenceConfig::new(KernelChoice::Pdp, epsilon),
            epsilon: EpsilonSpec::Value(epsilon),
            direction,
            budget,
            cluster_size: ClusterSize::Auto,
            evaluation: Evaluation::Sampled,
            seed,
        }
    }

    pub fn evaluation_mode(&self) -> EvaluationMode {
        match self.evaluation {
            Evaluation::Exact => EvaluationMode::Exact,
            Evaluation::Sampled => EvaluationMode::Sampled { seed: self.seed },
        }
    }
}

/// Outcome for one cluster. `reference` and `rewired` live on the cluster's
/// own node ids `0..nodes.len()`; `applied` is in global ids.
#[derive(Clone, Debug)]
pub struct ClusterResult {
    pub cluster_id: usize,
    pub nodes: Vec<usize>,
    pub seed: u64,
    pub reference: ReferenceGraph,
    /// `None` when the cluster was passed through unchanged.
    pub rewired: Option<RewiredGraph>,
    pub pass_through: Option<String>,
    pub applied: EdgeSet,
    pub input_edges: usize,
    pub output_edges: usize,
    pub input_homophily: Option<Rational>,
    /// Homophily of the cluster after rewiring, in the report's labels.
    pub report: Option<HomophilyReport>,
    pub expected_homophily: Option<Rational>,
}

impl ClusterResult {
    pub fn realized_homophily(&self) -> Option<Rational> {
        self.report.as_ref().map(|r| r.homophily)
    }
}

#[derive(Clone, Debug)]
pub struct RefineOutput {
    /// The rewired graph over every node, with the input's labels and features.
    pub graph: LabeledGraph,
    pub partition: Partition,
    pub cluster_size: usize,
    pub epsilon: f64,
    pub epsilon_selection: Option<EpsilonSelection>,
    pub clusters: Vec<ClusterResult>,
    /// Union of the per-cluster reference graphs, in global ids.
    pub reference: ReferenceGraph,
    /// Union of the applied edge sets, in global ids.
    pub applied: EdgeSet,
    pub conditions: ConditionReport,
    pub input_homophily: Option<Rational>,
    pub output_homophily: Option<Rational>,
}

impl RefineOutput {
    pub fn degraded(&self) -> bool {
        self.clusters.iter().any(|c| c.pass_through.is_some())
    }
}

fn report_labels(g: &LabeledGraph, evaluation: Evaluation) -> Vec<Option<Label>> {
    match evaluation {
        Evaluation::Exact => g.labels().to_vec(),
        Evaluation::Sampled => g.evaluation_labels(),
    }
}

fn check_inputs(g: &LabeledGraph, cfg: &RefineConfig) -> Result<()> {
    cfg.budget.validate()?;
    if g.features().is_none() {
        return Err(Error::MissingLabels("node features (required for the kernel)".into()));
    }
    if cfg.reference.kernel == KernelChoice::Pdp && g.train_labels().iter().all(Option::is_none) {
        return Err(Error::MissingLabels("training labels (required for the label kernel)".into()));
    }
    Ok(())
}

/// Runs the clustered pipeline.
pub fn run_refine(g: &LabeledGraph, cfg: &RefineConfig) -> Result<RefineOutput> {
    check_inputs(g, cfg)?;
    let n = g.node_count();
    let c = cfg.cluster_size.resolve(n);
    let part = if c >= n {
        Partition::single(g.edges())
    } else {
        partition::partition(g.edges(), c, cfg.seed)?
    };
    run_on_partition(g, cfg, part, c)
}

/// Runs the pipeline on a precomputed partition.
pub fn run_on_partition(g: &LabeledGraph, cfg: &RefineConfig, part: Partition, c: usize) -> Result<RefineOutput> {
    check_inputs(g, cfg)?;
    let (epsilon, selection) = match &cfg.epsilon {
        EpsilonSpec::Value(e) => (*e, None),
        EpsilonSpec::Grid(grid) => {
            let s = select_epsilon(g, part.clusters(), grid, &cfg.reference, cfg.seed)?;
            log::info!("selected epsilon {:e}", s.epsilon);
            (s.epsilon, Some(s))
        }
    };
    let ref_cfg = ReferenceConfig { epsilon, ..cfg.reference };
    let labeled = g.with_labels(report_labels(g, cfg.evaluation))?;

    let clusters: Vec<ClusterResult> = part
        .clusters()
        .par_iter()
        .enumerate()
        .map(|(id, nodes)| run_cluster(&labeled, g, nodes, id, &ref_cfg, cfg))
        .collect::<Result<_>>()?;

    let mut edges = part.inter_cluster_edges().clone();
    let mut reference_edges = EdgeSet::new(g.node_count());
    let mut applied = EdgeSet::new(g.node_count());
    for cluster in &clusters {
        let local = match &cluster.rewired {
            Some(r) => r.graph.edges(),
            None => &g.edges().induced(&cluster.nodes),
        };
        for e in local {
            edges.insert(global(&cluster.nodes, e))?;
        }
        for e in &cluster.reference.edges {
            reference_edges.insert(global(&cluster.nodes, e))?;
        }
        for e in &cluster.applied {
            applied.insert(*e)?;
        }
    }
    let source = match ref_cfg.kernel {
        KernelChoice::Pdp => ReferenceSource::Pdp,
        KernelChoice::DOnly => ReferenceSource::DOnly,
    };
    let reference = ReferenceGraph::new(reference_edges, source);
    let conditions = evaluate_conditions(&labeled, &reference, cfg.evaluation_mode())?;
    let graph = g.with_edges(edges)?;
    let labels = labeled.labels();
    Ok(RefineOutput {
        input_homophily: LabelCounts::of(g.edges(), labels).homophily(),
        output_homophily: LabelCounts::of(graph.edges(), labels).homophily(),
        graph,
        partition: part,
        cluster_size: c,
        epsilon,
        epsilon_selection: selection,
        clusters,
        reference,
        applied,
        conditions,
    })
}

fn global(nodes: &[usize], e: &Edge) -> Edge {
    Edge::new(nodes[e.u()], nodes[e.v()]).expect("distinct cluster nodes")
}

fn run_cluster(
    labeled: &LabeledGraph,
    g: &LabeledGraph,
    nodes: &[usize],
    id: usize,
    ref_cfg: &ReferenceConfig,
    cfg: &RefineConfig,
) -> Result<ClusterResult> {
    let local = labeled.induced(nodes);
    let features = g
        .features()
        .expect("checked")
        .select(ndarray::Axis(0), nodes);
    let train = g.train_labels();
    let train: Vec<_> = nodes.iter().map(|&v| train[v]).collect();
    let reference = build_reference(features.view(), &train, ref_cfg)?.reference;
    let seed = cluster_seed(cfg.seed, id);
    let input_edges = local.edges().len();
    let input_homophily = LabelCounts::of(local.edges(), local.labels()).homophily();
    let mut result = ClusterResult {
        cluster_id: id,
        nodes: nodes.to_vec(),
        seed,
        reference,
        rewired: None,
        pass_through: None,
        applied: EdgeSet::new(g.node_count()),
        input_edges,
        output_edges: input_edges,
        input_homophily,
        report: local.homophily().ok(),
        expected_homophily: None,
    };
    match build_plan(&local, &result.reference, cfg.direction, cfg.budget, seed) {
        Ok(plan) => {
            let rewired = execute(&plan, &local)?;
            for e in &rewired.applied {
                result.applied.insert(global(nodes, e))?;
            }
            result.output_edges = rewired.graph.edges().len();
            result.report = rewired.graph.homophily().ok();
            result.expected_homophily = plan.predicted_expectation;
            result.rewired = Some(rewired);
        }
        Err(Error::EmptyPool) => {
            log::warn!("cluster {id}: empty candidate pool, edges passed through");
            result.pass_through = Some(format!("empty {} pool", cfg.direction.as_str()));
        }
        Err(e) => return Err(e),
    }
    Ok(result)
}

/// Output of [`run_direct`].
#[derive(Clone, Debug)]
pub struct DirectOutput {
    pub reference: ReferenceGraph,
    pub rewired: RewiredGraph,
}

/// The pipeline without clustering: one reference graph over the whole node
/// set, rewired with the seed cluster 0 would get.
pub fn run_direct(g: &LabeledGraph, cfg: &RefineConfig) -> Result<DirectOutput> {
    check_inputs(g, cfg)?;
    let epsilon = match &cfg.epsilon {
        EpsilonSpec::Value(e) => *e,
        EpsilonSpec::Grid(grid) => {
            let all: Vec<usize> = (0..g.node_count()).collect();
            select_epsilon(g, &[all], grid, &cfg.reference, cfg.seed)?.epsilon
        }
    };
    let ref_cfg = ReferenceConfig { epsilon, ..cfg.reference };
    let features = g.features().expect("checked");
    let reference = build_reference(features.view(), &g.train_labels(), &ref_cfg)?.reference;
    let labeled = g.with_labels(report_labels(g, cfg.evaluation))?;
    let plan = build_plan(&labeled, &reference, cfg.direction, cfg.budget, cluster_seed(cfg.seed, 0))?;
    let rewired = execute(&plan, &labeled)?;
    let rewired = RewiredGraph {
        graph: g.with_edges(rewired.graph.edges().clone())?,
        ..rewired
    };
    Ok(DirectOutput { reference, rewired })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Split;
    use ndarray::Array2;

    /// Two 3-node groups with well separated features; the graph links
    /// across groups only.
    fn toy() -> LabeledGraph {
        let edges = EdgeSet::from_pairs(6, [(0, 3), (1, 4), (2, 5), (0, 1)]).unwrap();
        let labels = vec![Some(0), Some(0), Some(0), Some(1), Some(1), Some(1)];
        let x = Array2::from_shape_vec(
            (6, 2),
            vec![0.0, 0.0, 0.1, 0.0, 0.0, 0.1, 5.0, 5.0, 5.1, 5.0, 5.0, 5.1],
        )
        .unwrap();
        LabeledGraph::new(edges, labels, Some(x), vec![Split::Train; 6]).unwrap()
    }

    fn exact(direction: Direction, budget: EdgeBudget) -> RefineConfig {
        RefineConfig {
            evaluation: Evaluation::Exact,
            ..RefineConfig::new(1.0, direction, budget, 5)
        }
    }

    #[test]
    fn single_cluster_matches_direct() {
        let g = toy();
        for direction in [Direction::Add, Direction::Delete] {
            let cfg = exact(direction, EdgeBudget::Fraction(0.5));
            let full = run_refine(&g, &cfg).unwrap();
            let direct = run_direct(&g, &cfg).unwrap();
            assert_eq!(full.partition.cluster_count(), 1);
            assert_eq!(full.graph, direct.rewired.graph);
            assert_eq!(full.reference.edges, direct.reference.edges);
        }
    }

    #[test]
    fn addition_raises_homophily_on_toy() {
        let g = toy();
        let out = run_refine(&g, &exact(Direction::Add, EdgeBudget::Fraction(1.0))).unwrap();
        assert!(out.output_homophily.unwrap() > out.input_homophily.unwrap());
        assert_eq!(out.applied.len(), out.graph.edges().len() - g.edges().len());
    }

    #[test]
    fn deletion_drops_cross_edges() {
        let g = toy();
        let out = run_refine(&g, &exact(Direction::Delete, EdgeBudget::Fraction(1.0))).unwrap();
        assert_eq!(out.graph.edges().to_vec(), vec![Edge::new(0, 1).unwrap()]);
    }

    #[test]
    fn empty_pool_passes_through() {
        let g = toy();
        // Add every within-group edge so the addition pool is empty.
        let mut e = g.edges().clone();
        for (a, b) in [(0, 2), (1, 2), (3, 4), (3, 5), (4, 5)] {
            e.insert_pair(a, b).unwrap();
        }
        let g = g.with_edges(e).unwrap();
        let out = run_refine(&g, &exact(Direction::Add, EdgeBudget::Count(1))).unwrap();
        assert!(out.degraded());
        assert_eq!(out.graph.edges(), g.edges());
        assert!(out.clusters[0].pass_through.is_some());
    }

    #[test]
    fn missing_features_rejected() {
        let g = LabeledGraph::fully_labeled(EdgeSet::from_pairs(2, [(0, 1)]).unwrap(), vec![0, 1]).unwrap();
        let err = run_refine(&g, &exact(Direction::Add, EdgeBudget::Count(1))).unwrap_err();
        assert!(matches!(err, Error::MissingLabels(_)));
    }

    #[test]
    fn cluster_size_serde() {
        assert_eq!(serde_json::to_string(&ClusterSize::Auto).unwrap(), "\"auto\"");
        assert_eq!(serde_json::to_string(&ClusterSize::Fixed(100)).unwrap(), "100");
        let back: ClusterSize = serde_json::from_str("250").unwrap();
        assert_eq!(back, ClusterSize::Fixed(250));
        let grid: EpsilonSpec = serde_json::from_str("[0.1, 1.0]").unwrap();
        assert_eq!(grid, EpsilonSpec::Grid(vec![0.1, 1.0]));
    }
}

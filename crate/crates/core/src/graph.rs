//! Labeled undirected graphs, edge-set algebra and the metrics built on them.
//!
//! Edges are unordered pairs stored as `(u, v)` with `u < v`. An [`EdgeSet`]
//! always knows the size of its node universe so that complements and
//! cross-set operations can be checked.

use std::collections::BTreeSet;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{ratio, to_f64, Rational};

/// Categorical class label.
pub type Label = u32;

/// An unordered node pair with `u < v`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    u: usize,
    v: usize,
}

impl Edge {
    /// Normalizes the endpoint order. Returns `None` for a self-loop.
    pub fn new(a: usize, b: usize) -> Option<Edge> {
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Some(Edge { u: a, v: b }),
            std::cmp::Ordering::Greater => Some(Edge { u: b, v: a }),
            std::cmp::Ordering::Equal => None,
        }
    }

    pub fn u(&self) -> usize {
        self.u
    }

    pub fn v(&self) -> usize {
        self.v
    }

    pub fn endpoints(&self) -> (usize, usize) {
        (self.u, self.v)
    }
}

/// A set of undirected edges over the node universe `0..n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeSet {
    n: usize,
    edges: BTreeSet<Edge>,
}

impl EdgeSet {
    pub fn new(n: usize) -> Self {
        EdgeSet {
            n,
            edges: BTreeSet::new(),
        }
    }

    /// Builds a set from node pairs, rejecting self-loops and out-of-range
    /// endpoints. Duplicates (in either orientation) collapse.
    pub fn from_pairs<I>(n: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut set = EdgeSet::new(n);
        for (a, b) in pairs {
            set.insert_pair(a, b)?;
        }
        Ok(set)
    }

    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = Edge>,
    {
        let mut set = EdgeSet::new(n);
        for e in edges {
            set.insert(e)?;
        }
        Ok(set)
    }

    /// Inserts `(a, b)`; returns whether it was new.
    pub fn insert_pair(&mut self, a: usize, b: usize) -> Result<bool> {
        let edge = Edge::new(a, b).ok_or(Error::InvalidEdge { u: a, v: b, n: self.n })?;
        self.insert(edge)
    }

    pub fn insert(&mut self, edge: Edge) -> Result<bool> {
        if edge.v >= self.n {
            return Err(Error::InvalidEdge {
                u: edge.u,
                v: edge.v,
                n: self.n,
            });
        }
        Ok(self.edges.insert(edge))
    }

    pub fn remove(&mut self, edge: &Edge) -> bool {
        self.edges.remove(edge)
    }

    pub fn contains(&self, edge: &Edge) -> bool {
        self.edges.contains(edge)
    }

    pub fn contains_pair(&self, a: usize, b: usize) -> bool {
        Edge::new(a, b).is_some_and(|e| self.edges.contains(&e))
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Edges in ascending `(u, v)` order.
    pub fn iter(&self) -> impl Iterator<Item = &Edge> + '_ {
        self.edges.iter()
    }

    pub fn to_vec(&self) -> Vec<Edge> {
        self.edges.iter().copied().collect()
    }

    fn check_universe(&self, other: &EdgeSet) -> Result<()> {
        if self.n != other.n {
            return Err(Error::UniverseMismatch {
                left: self.n,
                right: other.n,
            });
        }
        Ok(())
    }

    pub fn union(&self, other: &EdgeSet) -> Result<EdgeSet> {
        self.check_universe(other)?;
        Ok(EdgeSet {
            n: self.n,
            edges: self.edges.union(&other.edges).copied().collect(),
        })
    }

    pub fn intersection(&self, other: &EdgeSet) -> Result<EdgeSet> {
        self.check_universe(other)?;
        Ok(EdgeSet {
            n: self.n,
            edges: self.edges.intersection(&other.edges).copied().collect(),
        })
    }

    /// `self \ other`: edges of `self` that are not in `other`.
    pub fn residual(&self, other: &EdgeSet) -> Result<EdgeSet> {
        self.check_universe(other)?;
        Ok(EdgeSet {
            n: self.n,
            edges: self.edges.difference(&other.edges).copied().collect(),
        })
    }

    /// All non-loop pairs not in `self`. Quadratic in `n`.
    pub fn complement(&self) -> EdgeSet {
        let mut edges = BTreeSet::new();
        for u in 0..self.n {
            for v in (u + 1)..self.n {
                let e = Edge { u, v };
                if !self.edges.contains(&e) {
                    edges.insert(e);
                }
            }
        }
        EdgeSet { n: self.n, edges }
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for e in &self.edges {
            deg[e.u] += 1;
            deg[e.v] += 1;
        }
        deg
    }

    /// Sorted adjacency lists.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for e in &self.edges {
            adj[e.u].push(e.v);
            adj[e.v].push(e.u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// The subgraph induced by `nodes`, re-indexed so that `nodes[i]` becomes
    /// node `i`.
    pub fn induced(&self, nodes: &[usize]) -> EdgeSet {
        let mut local = vec![usize::MAX; self.n];
        for (i, &v) in nodes.iter().enumerate() {
            local[v] = i;
        }
        let edges = self
            .edges
            .iter()
            .filter_map(|e| {
                let (a, b) = (local[e.u], local[e.v]);
                if a == usize::MAX || b == usize::MAX {
                    None
                } else {
                    Edge::new(a, b)
                }
            })
            .collect();
        EdgeSet {
            n: nodes.len(),
            edges,
        }
    }
}

impl<'a> IntoIterator for &'a EdgeSet {
    type Item = &'a Edge;
    type IntoIter = std::collections::btree_set::Iter<'a, Edge>;

    fn into_iter(self) -> Self::IntoIter {
        self.edges.iter()
    }
}

/// Role of a node in the train/validation/test protocol.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    #[default]
    None,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::None => "none",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "valid" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            "none" => Ok(Split::None),
            other => Err(format!("unknown split tag {other:?}")),
        }
    }
}

/// An undirected graph with (possibly partial) labels, optional node
/// features and a split tag per node.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledGraph {
    edges: EdgeSet,
    labels: Vec<Option<Label>>,
    features: Option<Array2<f64>>,
    splits: Vec<Split>,
}

impl LabeledGraph {
    pub fn new(
        edges: EdgeSet,
        labels: Vec<Option<Label>>,
        features: Option<Array2<f64>>,
        splits: Vec<Split>,
    ) -> Result<Self> {
        let n = edges.node_count();
        if n == 0 {
            return Err(Error::InvalidParameter("a graph needs at least one node".into()));
        }
        if labels.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {n} nodes",
                labels.len()
            )));
        }
        if splits.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} split tags for {n} nodes",
                splits.len()
            )));
        }
        if let Some(x) = &features {
            if x.nrows() != n {
                return Err(Error::ShapeMismatch(format!(
                    "{} feature rows for {n} nodes",
                    x.nrows()
                )));
            }
            check_finite(x.view())?;
        }
        if let Some(node) = (0..n).find(|&i| splits[i] == Split::Train && labels[i].is_none()) {
            return Err(Error::UnlabeledTrainNode(node));
        }
        Ok(LabeledGraph {
            edges,
            labels,
            features,
            splits,
        })
    }

    /// A graph whose every node is labeled and tagged `train`, without features.
    pub fn fully_labeled(edges: EdgeSet, labels: Vec<Label>) -> Result<Self> {
        let n = edges.node_count();
        let labels = labels.into_iter().map(Some).collect();
        LabeledGraph::new(edges, labels, None, vec![Split::Train; n])
    }

    pub fn node_count(&self) -> usize {
        self.edges.node_count()
    }

    pub fn edges(&self) -> &EdgeSet {
        &self.edges
    }

    pub fn labels(&self) -> &[Option<Label>] {
        &self.labels
    }

    pub fn features(&self) -> Option<&Array2<f64>> {
        self.features.as_ref()
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    /// Same nodes, labels and features with a different edge set.
    pub fn with_edges(&self, edges: EdgeSet) -> Result<LabeledGraph> {
        if edges.node_count() != self.node_count() {
            return Err(Error::UniverseMismatch {
                left: self.node_count(),
                right: edges.node_count(),
            });
        }
        Ok(LabeledGraph {
            edges,
            labels: self.labels.clone(),
            features: self.features.clone(),
            splits: self.splits.clone(),
        })
    }

    /// Same structure with a different label vector.
    pub fn with_labels(&self, labels: Vec<Option<Label>>) -> Result<LabeledGraph> {
        LabeledGraph::new(self.edges.clone(), labels, self.features.clone(), self.splits.clone())
    }

    /// Labels of train nodes only; everything else is unknown.
    pub fn train_labels(&self) -> Vec<Option<Label>> {
        self.labels
            .iter()
            .zip(&self.splits)
            .map(|(l, s)| if *s == Split::Train { *l } else { None })
            .collect()
    }

    /// Labels usable for diagnostics: every known label except on test nodes.
    pub fn evaluation_labels(&self) -> Vec<Option<Label>> {
        self.labels
            .iter()
            .zip(&self.splits)
            .map(|(l, s)| if *s == Split::Test { None } else { *l })
            .collect()
    }

    pub fn nodes_in(&self, split: Split) -> Vec<usize> {
        (0..self.node_count())
            .filter(|&i| self.splits[i] == split)
            .collect()
    }

    /// Induced subgraph on `nodes` (re-indexed in the given order).
    pub fn induced(&self, nodes: &[usize]) -> LabeledGraph {
        let edges = self.edges.induced(nodes);
        let labels = nodes.iter().map(|&v| self.labels[v]).collect();
        let splits = nodes.iter().map(|&v| self.splits[v]).collect();
        let features = self.features.as_ref().map(|x| x.select(ndarray::Axis(0), nodes));
        LabeledGraph {
            edges,
            labels,
            features,
            splits,
        }
    }

    pub fn homophily(&self) -> Result<HomophilyReport> {
        edge_homophily(&self.edges, &self.labels)
    }

    pub fn dirichlet_energy(&self, z: ArrayView2<f64>) -> Result<f64> {
        dirichlet_energy(&self.edges, z)
    }
}

pub(crate) fn check_finite(x: ArrayView2<f64>) -> Result<()> {
    for ((row, col), v) in x.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFiniteFeatures { row, col });
        }
    }
    Ok(())
}

/// Same-label / different-label / undecidable counts over an edge set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LabelCounts {
    pub same: u64,
    pub different: u64,
    pub unknown: u64,
}

impl LabelCounts {
    pub fn of<'a, I>(edges: I, labels: &[Option<Label>]) -> LabelCounts
    where
        I: IntoIterator<Item = &'a Edge>,
    {
        let mut counts = LabelCounts::default();
        for e in edges {
            match (labels[e.u], labels[e.v]) {
                (Some(a), Some(b)) if a == b => counts.same += 1,
                (Some(_), Some(_)) => counts.different += 1,
                _ => counts.unknown += 1,
            }
        }
        counts
    }

    pub fn decidable(&self) -> u64 {
        self.same + self.different
    }

    pub fn total(&self) -> u64 {
        self.same + self.different + self.unknown
    }

    /// `same / (same + different)`, if any edge is decidable.
    pub fn homophily(&self) -> Option<Rational> {
        (self.decidable() > 0).then(|| ratio(self.same, self.decidable()))
    }
}

/// Edge homophily of an edge set under a label map.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HomophilyReport {
    pub edge_count: u64,
    pub same_label_edges: u64,
    pub unknown_label_edges: u64,
    #[serde(serialize_with = "serialize_rational")]
    pub homophily: Rational,
}

fn serialize_rational<S: serde::Serializer>(
    r: &Rational,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    crate::rational::RationalValue(*r).serialize(s)
}

impl HomophilyReport {
    pub fn as_f64(&self) -> f64 {
        to_f64(&self.homophily)
    }
}

/// Fraction of fully labeled edges whose endpoints share a label. Edges with
/// an unknown endpoint are left out of both numerator and denominator.
pub fn edge_homophily(edges: &EdgeSet, labels: &[Option<Label>]) -> Result<HomophilyReport> {
    if labels.len() != edges.node_count() {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for {} nodes",
            labels.len(),
            edges.node_count()
        )));
    }
    if edges.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let counts = LabelCounts::of(edges, labels);
    let homophily = counts.homophily().ok_or(Error::NoLabeledEdges)?;
    Ok(HomophilyReport {
        edge_count: counts.total(),
        same_label_edges: counts.same,
        unknown_label_edges: counts.unknown,
        homophily,
    })
}

/// `tr(Zᵀ L Z)` for the unweighted Laplacian, summed edge by edge:
/// each undirected edge contributes `‖z_u − z_v‖²` once.
pub fn dirichlet_energy(edges: &EdgeSet, z: ArrayView2<f64>) -> Result<f64> {
    if z.nrows() != edges.node_count() {
        return Err(Error::ShapeMismatch(format!(
            "embedding has {} rows for {} nodes",
            z.nrows(),
            edges.node_count()
        )));
    }
    check_finite(z)?;
    let energy = edges
        .iter()
        .map(|e| {
            let (a, b) = (z.row(e.u), z.row(e.v));
            a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
        })
        .sum();
    Ok(energy)
}

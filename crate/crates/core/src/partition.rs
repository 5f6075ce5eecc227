//! Balanced graph partitioning.
//!
//! [`MultilevelPartitioner`] follows the usual multilevel scheme:
//!
//! 1. coarsen by heavy-edge matching, capping merged vertex weights so the
//!    coarsest graph can still be split evenly;
//! 2. grow `N` regions on the coarsest graph by seeded breadth-first search;
//! 3. project back level by level, refining the boundary at each level with
//!    single-vertex gain moves and Kernighan–Lin pair swaps;
//! 4. repair balance on the finest graph and hand isolated nodes to the
//!    smallest clusters.
//!
//! Sizes end up in `[min, max]` around `n / N` (see [`BalanceBounds`]).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Edge, EdgeSet};
use crate::seed::rng_from_seed;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

/// Nodes below which no clustering happens under the automatic policy.
pub const AUTO_NO_CLUSTERING_BELOW: usize = 1000;
/// Largest node count that still uses the medium cluster size.
pub const AUTO_MEDIUM_UP_TO: usize = 25_000;

/// Automatic cluster size: whole graph under 1000 nodes, 500 up to 25 000
/// nodes, 100 beyond.
pub fn auto_cluster_size(n: usize) -> usize {
    if n < AUTO_NO_CLUSTERING_BELOW {
        n.max(2)
    } else if n <= AUTO_MEDIUM_UP_TO {
        500
    } else {
        100
    }
}

/// Number of clusters for target size `c`.
pub fn cluster_count(n: usize, c: usize) -> usize {
    n.div_ceil(c).max(1)
}

/// A set partition of the nodes plus the edges it cuts.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    assignment: Vec<usize>,
    clusters: Vec<Vec<usize>>,
    inter_cluster_edges: EdgeSet,
}

impl Partition {
    /// Builds a partition from a node → cluster map. Cluster ids must be
    /// `0..N` with no empty cluster.
    pub fn from_assignment(edges: &EdgeSet, assignment: Vec<usize>) -> Result<Partition> {
        let n = edges.node_count();
        if assignment.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} assignments for {n} nodes",
                assignment.len()
            )));
        }
        let parts = assignment.iter().max().map_or(0, |m| m + 1);
        let mut clusters = vec![Vec::new(); parts];
        for (v, &p) in assignment.iter().enumerate() {
            clusters[p].push(v);
        }
        if let Some(empty) = clusters.iter().position(Vec::is_empty) {
            return Err(Error::InvalidParameter(format!("cluster {empty} is empty")));
        }
        let inter = EdgeSet::from_edges(
            n,
            edges
                .iter()
                .filter(|e| assignment[e.u()] != assignment[e.v()])
                .copied(),
        )?;
        Ok(Partition {
            assignment,
            clusters,
            inter_cluster_edges: inter,
        })
    }

    pub fn single(edges: &EdgeSet) -> Partition {
        Partition::from_assignment(edges, vec![0; edges.node_count()]).expect("one nonempty cluster")
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Node lists, each ascending.
    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    pub fn inter_cluster_edges(&self) -> &EdgeSet {
        &self.inter_cluster_edges
    }

    pub fn cut_size(&self) -> usize {
        self.inter_cluster_edges.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(Vec::len).collect()
    }
}

/// Anything that can split a graph into clusters of roughly `cluster_size`.
pub trait Partitioner: Sync {
    fn partition(&self, edges: &EdgeSet, cluster_size: usize, seed: u64) -> Result<Partition>;
}

/// Allowed cluster sizes for `n` nodes in `parts` clusters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BalanceBounds {
    pub min: u64,
    pub max: u64,
}

impl BalanceBounds {
    pub fn new(n: usize, parts: usize, imbalance: f64) -> BalanceBounds {
        let avg = n as f64 / parts as f64;
        let max = ((avg * imbalance).floor() as u64).max(avg.ceil() as u64);
        let min = ((avg / imbalance).ceil() as u64).min(avg.floor() as u64).max(1);
        BalanceBounds { min, max }
    }
}

#[derive(Clone, Debug)]
pub struct MultilevelPartitioner {
    /// Allowed ratio of the largest cluster to the average.
    pub imbalance: f64,
    /// Refinement passes per level.
    pub passes: usize,
}

impl Default for MultilevelPartitioner {
    fn default() -> Self {
        MultilevelPartitioner {
            imbalance: 1.1,
            passes: 8,
        }
    }
}

impl Partitioner for MultilevelPartitioner {
    fn partition(&self, edges: &EdgeSet, cluster_size: usize, seed: u64) -> Result<Partition> {
        if cluster_size < 2 {
            return Err(Error::InvalidParameter(format!(
                "cluster size must be at least 2, got {cluster_size}"
            )));
        }
        let n = edges.node_count();
        let parts = cluster_count(n, cluster_size);
        if parts == 1 {
            return Ok(Partition::single(edges));
        }
        let bounds = BalanceBounds::new(n, parts, self.imbalance);
        let mut rng = rng_from_seed(seed);
        let assignment = multilevel(edges, parts, bounds, self.passes, &mut rng);
        Partition::from_assignment(edges, assignment)
    }
}

/// Partitions with the default [`MultilevelPartitioner`].
pub fn partition(edges: &EdgeSet, cluster_size: usize, seed: u64) -> Result<Partition> {
    MultilevelPartitioner::default().partition(edges, cluster_size, seed)
}

/// Vertex- and edge-weighted graph used across coarsening levels.
struct WeightedGraph {
    adj: Vec<Vec<(usize, u64)>>,
    vwgt: Vec<u64>,
}

impl WeightedGraph {
    fn from_edges(edges: &EdgeSet) -> WeightedGraph {
        let adj = edges
            .adjacency()
            .into_iter()
            .map(|list| list.into_iter().map(|v| (v, 1)).collect())
            .collect();
        WeightedGraph {
            adj,
            vwgt: vec![1; edges.node_count()],
        }
    }

    fn len(&self) -> usize {
        self.vwgt.len()
    }

    /// Heavy-edge matching. Returns the coarse graph and the fine → coarse map.
    fn coarsen(&self, cap: u64, rng: &mut ChaCha8Rng) -> (WeightedGraph, Vec<usize>) {
        let n = self.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut mate = vec![usize::MAX; n];
        for &u in &order {
            if mate[u] != usize::MAX {
                continue;
            }
            let mut best: Option<(u64, usize)> = None;
            for &(v, w) in &self.adj[u] {
                if mate[v] != usize::MAX || self.vwgt[u] + self.vwgt[v] > cap {
                    continue;
                }
                if best.is_none_or(|(bw, bv)| w > bw || (w == bw && self.vwgt[v] < self.vwgt[bv])) {
                    best = Some((w, v));
                }
            }
            match best {
                Some((_, v)) => {
                    mate[u] = v;
                    mate[v] = u;
                }
                None => mate[u] = u,
            }
        }
        let mut map = vec![usize::MAX; n];
        let mut members: Vec<Vec<usize>> = Vec::new();
        for u in 0..n {
            if map[u] != usize::MAX {
                continue;
            }
            let id = members.len();
            map[u] = id;
            let mut group = vec![u];
            if mate[u] != u {
                map[mate[u]] = id;
                group.push(mate[u]);
            }
            members.push(group);
        }
        let nc = members.len();
        let mut acc = vec![0u64; nc];
        let mut touched = Vec::new();
        let mut adj = Vec::with_capacity(nc);
        let mut vwgt = Vec::with_capacity(nc);
        for (cv, group) in members.iter().enumerate() {
            vwgt.push(group.iter().map(|&u| self.vwgt[u]).sum());
            for &u in group {
                for &(v, w) in &self.adj[u] {
                    let cu = map[v];
                    if cu == cv {
                        continue;
                    }
                    if acc[cu] == 0 {
                        touched.push(cu);
                    }
                    acc[cu] += w;
                }
            }
            touched.sort_unstable();
            let list: Vec<(usize, u64)> = touched.iter().map(|&c| (c, acc[c])).collect();
            for &c in &touched {
                acc[c] = 0;
            }
            touched.clear();
            adj.push(list);
        }
        (WeightedGraph { adj, vwgt }, map)
    }
}

fn multilevel(
    edges: &EdgeSet,
    parts: usize,
    bounds: BalanceBounds,
    passes: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let n = edges.node_count();
    let cap = (n as u64 / parts as u64 / 4).max(1);
    let mut levels = vec![WeightedGraph::from_edges(edges)];
    let mut maps: Vec<Vec<usize>> = Vec::new();
    loop {
        let current = levels.last().expect("at least the finest level");
        if current.len() <= 8 * parts {
            break;
        }
        let (coarse, map) = current.coarsen(cap, rng);
        if coarse.len() * 10 > current.len() * 9 {
            break;
        }
        levels.push(coarse);
        maps.push(map);
    }

    let coarsest = levels.last().expect("nonempty");
    let mut part = grow_regions(coarsest, parts, n as u64, bounds, rng);
    let mut state = Refiner::new(coarsest, part, parts, bounds);
    state.refine(coarsest, passes, rng);
    part = state.part;

    for level in (0..maps.len()).rev() {
        let fine = &levels[level];
        let projected: Vec<usize> = maps[level].iter().map(|&c| part[c]).collect();
        let mut state = Refiner::new(fine, projected, parts, bounds);
        if level == 0 {
            state.enforce_balance(fine);
        }
        state.refine(fine, passes, rng);
        part = state.part;
    }
    if maps.is_empty() {
        let fine = &levels[0];
        let mut state = Refiner::new(fine, part, parts, bounds);
        state.enforce_balance(fine);
        state.refine(fine, passes, rng);
        part = state.part;
    }

    let fine = &levels[0];
    let mut state = Refiner::new(fine, part, parts, bounds);
    state.place_isolated(fine);
    state.enforce_balance(fine);
    state.part
}

/// Breadth-first region growing; the last region takes what is left.
fn grow_regions(
    g: &WeightedGraph,
    parts: usize,
    total: u64,
    bounds: BalanceBounds,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let n = g.len();
    let mut part = vec![usize::MAX; n];
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut cursor = 0;
    let mut remaining = total;
    for p in 0..parts - 1 {
        let target = remaining / (parts - p) as u64;
        let mut weight = 0u64;
        let mut queue = std::collections::VecDeque::new();
        let mut rejected = vec![];
        while weight < target {
            let next = match queue.pop_front() {
                Some(v) => Some(v),
                None => {
                    while cursor < n && part[order[cursor]] != usize::MAX {
                        cursor += 1;
                    }
                    // Skip vertices rejected for this region when jumping.
                    let mut probe = cursor;
                    while probe < n && (part[order[probe]] != usize::MAX || rejected.contains(&order[probe])) {
                        probe += 1;
                    }
                    (probe < n).then(|| order[probe])
                }
            };
            let Some(v) = next else { break };
            if part[v] != usize::MAX {
                continue;
            }
            if weight > 0 && weight + g.vwgt[v] > bounds.max {
                rejected.push(v);
                if rejected.len() > 64 {
                    break;
                }
                continue;
            }
            part[v] = p;
            weight += g.vwgt[v];
            for &(u, _) in &g.adj[v] {
                if part[u] == usize::MAX {
                    queue.push_back(u);
                }
            }
        }
        remaining -= weight;
    }
    for p in part.iter_mut() {
        if *p == usize::MAX {
            *p = parts - 1;
        }
    }
    part
}

struct Refiner {
    part: Vec<usize>,
    sizes: Vec<u64>,
    bounds: BalanceBounds,
    scratch: Vec<u64>,
    touched: Vec<usize>,
}

impl Refiner {
    fn new(g: &WeightedGraph, part: Vec<usize>, parts: usize, bounds: BalanceBounds) -> Refiner {
        let mut sizes = vec![0; parts];
        for (v, &p) in part.iter().enumerate() {
            sizes[p] += g.vwgt[v];
        }
        Refiner {
            part,
            sizes,
            bounds,
            scratch: vec![0; parts],
            touched: Vec::new(),
        }
    }

    /// Connection weight of `v` to each neighboring part, ascending by part.
    fn connections(&mut self, g: &WeightedGraph, v: usize) -> Vec<(usize, u64)> {
        for &(u, w) in &g.adj[v] {
            let p = self.part[u];
            if self.scratch[p] == 0 {
                self.touched.push(p);
            }
            self.scratch[p] += w;
        }
        self.touched.sort_unstable();
        let out = self.touched.iter().map(|&p| (p, self.scratch[p])).collect();
        for &p in &self.touched {
            self.scratch[p] = 0;
        }
        self.touched.clear();
        out
    }

    fn move_vertex(&mut self, g: &WeightedGraph, v: usize, to: usize) {
        let from = self.part[v];
        self.sizes[from] -= g.vwgt[v];
        self.sizes[to] += g.vwgt[v];
        self.part[v] = to;
    }

    fn can_move(&self, g: &WeightedGraph, from: usize, to: usize, v: usize) -> bool {
        let w = g.vwgt[v];
        self.sizes[from] >= self.bounds.min + w && self.sizes[to] + w <= self.bounds.max
    }

    /// Best single move for `v`: (gain, target part).
    fn best_move(&mut self, g: &WeightedGraph, v: usize) -> Option<(i64, usize)> {
        let from = self.part[v];
        let conn = self.connections(g, v);
        let internal = conn.iter().find(|(p, _)| *p == from).map_or(0, |c| c.1) as i64;
        let mut best: Option<(i64, usize)> = None;
        for &(p, w) in &conn {
            if p == from || !self.can_move(g, from, p, v) {
                continue;
            }
            let gain = w as i64 - internal;
            let better = match best {
                None => true,
                Some((bg, bp)) => gain > bg || (gain == bg && self.sizes[p] < self.sizes[bp]),
            };
            if better {
                best = Some((gain, p));
            }
        }
        best
    }

    fn refine(&mut self, g: &WeightedGraph, passes: usize, rng: &mut ChaCha8Rng) {
        let mut order: Vec<usize> = (0..g.len()).collect();
        for _ in 0..passes {
            order.shuffle(rng);
            let mut moved = 0usize;
            for &v in &order {
                let from = self.part[v];
                if g.adj[v].iter().all(|&(u, _)| self.part[u] == from) {
                    continue;
                }
                if let Some((gain, to)) = self.best_move(g, v) {
                    let balances = self.sizes[from] > self.sizes[to] + g.vwgt[v];
                    if gain > 0 || (gain == 0 && balances) {
                        self.move_vertex(g, v, to);
                        moved += 1;
                    }
                }
            }
            moved += self.swap_pass(g, &order);
            if moved == 0 {
                break;
            }
        }
    }

    /// Kernighan–Lin swaps across cut edges: exchange `u ∈ a` and `v ∈ b`
    /// when `gain(u→b) + gain(v→a) − 2·w(u, v) > 0`.
    fn swap_pass(&mut self, g: &WeightedGraph, order: &[usize]) -> usize {
        // A profitable swap needs a positive gain on at least one side, so
        // only vertices with a positive move gain are examined.
        const CANDIDATES: usize = 16;
        let get = |c: &[(usize, u64)], p: usize| c.iter().find(|x| x.0 == p).map_or(0, |x| x.1) as i64;
        let mut swaps = 0;
        for &u in order {
            let a = self.part[u];
            let cu = self.connections(g, u);
            let internal = get(&cu, a);
            if !cu.iter().any(|&(p, w)| p != a && w as i64 > internal) {
                continue;
            }
            let mut examined = 0;
            for &(v, w_uv) in &g.adj[u] {
                let b = self.part[v];
                let gain_u = get(&cu, b) - internal;
                if a == b || gain_u <= 0 {
                    continue;
                }
                if examined == CANDIDATES {
                    break;
                }
                examined += 1;
                let (wu, wv) = (g.vwgt[u], g.vwgt[v]);
                let fits = self.sizes[a] + wv >= self.bounds.min + wu
                    && self.sizes[a] + wv <= self.bounds.max + wu
                    && self.sizes[b] + wu >= self.bounds.min + wv
                    && self.sizes[b] + wu <= self.bounds.max + wv;
                if !fits {
                    continue;
                }
                let cv = self.connections(g, v);
                let gain_v = get(&cv, a) - get(&cv, b);
                if gain_u + gain_v - 2 * w_uv as i64 > 0 {
                    self.move_vertex(g, u, b);
                    self.move_vertex(g, v, a);
                    swaps += 1;
                    break;
                }
            }
        }
        swaps
    }

    /// Moves vertices until every part lies within bounds. Exact on the
    /// finest level, where all vertex weights are 1.
    fn enforce_balance(&mut self, g: &WeightedGraph) {
        let parts = self.sizes.len();
        for _ in 0..64 {
            let over: Vec<usize> = (0..parts).filter(|&p| self.sizes[p] > self.bounds.max).collect();
            let under: Vec<usize> = (0..parts).filter(|&p| self.sizes[p] < self.bounds.min).collect();
            if over.is_empty() && under.is_empty() {
                return;
            }
            let mut members = vec![Vec::new(); parts];
            for (v, &p) in self.part.iter().enumerate() {
                members[p].push(v);
            }
            let mut moved = 0;
            for p in over {
                moved += self.drain(g, &members[p], p);
            }
            for p in under {
                moved += self.fill(g, &members, p);
            }
            if moved == 0 {
                return;
            }
        }
    }

    fn smallest_part(&self) -> usize {
        (0..self.sizes.len())
            .min_by_key(|&p| (self.sizes[p], p))
            .expect("parts > 0")
    }

    fn largest_part(&self) -> usize {
        (0..self.sizes.len())
            .max_by_key(|&p| (self.sizes[p], std::cmp::Reverse(p)))
            .expect("parts > 0")
    }

    /// Moves vertices out of the overfull part `from`, best gain first.
    fn drain(&mut self, g: &WeightedGraph, nodes: &[usize], from: usize) -> usize {
        let mut ranked: Vec<(i64, usize)> = nodes
            .iter()
            .map(|&v| {
                let conn = self.connections(g, v);
                let internal = conn.iter().find(|(p, _)| *p == from).map_or(0, |c| c.1) as i64;
                let external = conn.iter().filter(|(p, _)| *p != from).map(|c| c.1).max().unwrap_or(0) as i64;
                (external - internal, v)
            })
            .collect();
        ranked.sort_unstable_by_key(|&(gain, v)| (std::cmp::Reverse(gain), v));
        let mut moved = 0;
        for (_, v) in ranked {
            if self.sizes[from] <= self.bounds.max {
                break;
            }
            let w = g.vwgt[v];
            let conn = self.connections(g, v);
            let target = conn
                .iter()
                .filter(|(p, _)| *p != from && self.sizes[*p] + w <= self.bounds.max)
                .max_by_key(|&&(p, cw)| (cw, std::cmp::Reverse(self.sizes[p]), std::cmp::Reverse(p)))
                .map(|c| c.0)
                .unwrap_or_else(|| self.smallest_part());
            if target != from && self.sizes[target] + w < self.sizes[from] {
                self.move_vertex(g, v, target);
                moved += 1;
            }
        }
        moved
    }

    /// Pulls vertices into the underfull part `to`, preferring neighbors.
    fn fill(&mut self, g: &WeightedGraph, members: &[Vec<usize>], to: usize) -> usize {
        let mut moved = 0;
        let mut frontier: Vec<usize> = members[to]
            .iter()
            .flat_map(|&v| g.adj[v].iter().map(|e| e.0))
            .filter(|&u| self.part[u] != to)
            .collect();
        frontier.sort_unstable();
        frontier.dedup();
        for u in frontier {
            if self.sizes[to] >= self.bounds.min {
                return moved;
            }
            let from = self.part[u];
            if from != to && self.sizes[from] >= self.bounds.min + g.vwgt[u] && self.sizes[to] + g.vwgt[u] <= self.bounds.max {
                self.move_vertex(g, u, to);
                moved += 1;
            }
        }
        while self.sizes[to] < self.bounds.min {
            let from = self.largest_part();
            if from == to || self.sizes[from] <= self.bounds.min {
                break;
            }
            let Some(&v) = members[from].iter().rev().find(|&&v| self.part[v] == from) else {
                break;
            };
            if self.sizes[to] + g.vwgt[v] > self.sizes[from] {
                break;
            }
            self.move_vertex(g, v, to);
            moved += 1;
        }
        moved
    }

    /// Reassigns every isolated vertex to the currently smallest part.
    fn place_isolated(&mut self, g: &WeightedGraph) {
        use std::cmp::Reverse;
        use std::collections::BinaryHeap;
        let isolated: Vec<usize> = (0..g.len()).filter(|&v| g.adj[v].is_empty()).collect();
        for &v in &isolated {
            self.sizes[self.part[v]] -= g.vwgt[v];
        }
        let mut heap: BinaryHeap<Reverse<(u64, usize)>> =
            self.sizes.iter().enumerate().map(|(p, &s)| Reverse((s, p))).collect();
        for v in isolated {
            let Reverse((size, p)) = heap.pop().expect("parts > 0");
            self.part[v] = p;
            self.sizes[p] = size + g.vwgt[v];
            heap.push(Reverse((self.sizes[p], p)));
        }
    }
}

/// Edges whose endpoints lie in different clusters of `assignment`.
pub fn cut_edges(edges: &EdgeSet, assignment: &[usize]) -> Vec<Edge> {
    edges
        .iter()
        .filter(|e| assignment[e.u()] != assignment[e.v()])
        .copied()
        .collect()
}

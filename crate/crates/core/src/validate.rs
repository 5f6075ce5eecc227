//! Exhaustive and randomized checks of the rewiring expectations and the
//! energy bound on small graphs.
//!
//! The expectation oracle never touches the rewiring code: graphs on at most
//! eight nodes are stored as bitmasks over the 28 possible pairs, and the
//! average homophily is summed over every `k`-subset of the candidate pool.

use std::cmp::Ordering;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Edge, EdgeSet, Label, LabelCounts, LabeledGraph};
use crate::rational::Rational;
use crate::reference::{ReferenceGraph, ReferenceSource};
use crate::rewire::{self, Direction, EdgeBudget, Trend};
use crate::seed::{rng_from_seed, trial_seed};
use crate::synth::{self, mean_std, BoundCheck, SeparabilityCheck};

/// Largest node count the bitmask oracle supports.
pub const ORACLE_MAX_NODES: usize = 8;

#[derive(Clone, Debug)]
pub struct OracleCase {
    pub graph: EdgeSet,
    pub reference: EdgeSet,
    pub labels: Vec<Label>,
}

impl OracleCase {
    pub fn labeled_graph(&self) -> LabeledGraph {
        LabeledGraph::fully_labeled(self.graph.clone(), self.labels.clone()).expect("consistent case")
    }

    pub fn reference_graph(&self) -> ReferenceGraph {
        ReferenceGraph::new(self.reference.clone(), ReferenceSource::Synthetic)
    }
}

/// Random labeled graphs with a nonempty edge set and both candidate pools
/// capped at `max_pool` edges.
pub fn random_cases(count: usize, n_max: usize, max_pool: usize, seed: u64) -> Result<Vec<OracleCase>> {
    if !(2..=ORACLE_MAX_NODES).contains(&n_max) {
        return Err(Error::InvalidParameter(format!(
            "n_max must lie in 2..={ORACLE_MAX_NODES}, got {n_max}"
        )));
    }
    let mut cases = Vec::with_capacity(count);
    let mut attempt = 0;
    while cases.len() < count {
        let mut rng = rng_from_seed(trial_seed(seed, 0, attempt));
        attempt += 1;
        let n = rng.random_range(2..=n_max);
        let classes = rng.random_range(1..=3u32);
        let labels: Vec<Label> = (0..n).map(|_| rng.random_range(0..classes)).collect();
        let (pg, pr) = (rng.random_range(0.15..0.7), rng.random_range(0.15..0.7));
        let mut graph = EdgeSet::new(n);
        let mut reference = EdgeSet::new(n);
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random::<f64>() < pg {
                    graph.insert_pair(i, j)?;
                }
                if rng.random::<f64>() < pr {
                    reference.insert_pair(i, j)?;
                }
            }
        }
        if graph.is_empty() {
            continue;
        }
        loop {
            let add = reference.residual(&graph)?.to_vec();
            if add.len() <= max_pool {
                break;
            }
            reference.remove(&add[rng.random_range(0..add.len())]);
        }
        loop {
            let del = graph.residual(&reference)?.to_vec();
            if del.len() <= max_pool {
                break;
            }
            reference.insert(del[rng.random_range(0..del.len())])?;
        }
        cases.push(OracleCase {
            graph,
            reference,
            labels,
        });
    }
    Ok(cases)
}

struct Masks {
    pair_bit: Vec<Vec<u32>>,
    same: u32,
}

impl Masks {
    fn new(labels: &[Label]) -> Masks {
        let n = labels.len();
        let mut pair_bit = vec![vec![0u32; n]; n];
        let mut same = 0;
        let mut bit = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                pair_bit[i][j] = 1 << bit;
                if labels[i] == labels[j] {
                    same |= 1 << bit;
                }
                bit += 1;
            }
        }
        Masks { pair_bit, same }
    }

    fn of(&self, edges: &EdgeSet) -> u32 {
        edges.iter().fold(0, |m, e| m | self.pair_bit[e.u()][e.v()])
    }

    fn homophily(&self, mask: u32) -> Option<Rational> {
        let total = mask.count_ones();
        (total > 0).then(|| Rational::new((mask & self.same).count_ones() as i128, total as i128))
    }
}

/// Average homophily over every `k`-subset `S` of `pool`, applied to `base`
/// as a union (add) or difference (delete).
fn subset_average(masks: &Masks, base: u32, pool: u32, k: usize, direction: Direction) -> (Rational, u64) {
    let bits: Vec<u32> = (0..32).map(|b| 1u32 << b).filter(|b| pool & b != 0).collect();
    let p = bits.len();
    let mut sum_same: i128 = 0;
    let mut count: u64 = 0;
    let mut total_edges = 0;
    // Gosper's hack over p-bit selectors with exactly k bits set.
    let mut sel: u64 = (1u64 << k) - 1;
    while sel < (1u64 << p) {
        let mut s = 0u32;
        for (i, b) in bits.iter().enumerate() {
            if sel >> i & 1 == 1 {
                s |= b;
            }
        }
        let g = match direction {
            Direction::Add => base | s,
            Direction::Delete => base & !s,
        };
        total_edges = g.count_ones();
        sum_same += (g & masks.same).count_ones() as i128;
        count += 1;
        let c = sel & sel.wrapping_neg();
        let r = sel + c;
        sel = (((r ^ sel) >> 2) / c) | r;
    }
    // Every subset leaves the same number of edges.
    (
        Rational::new(sum_same, count as i128 * total_edges as i128),
        count,
    )
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct PropositionSummary {
    pub cases: usize,
    pub expectation_checks: usize,
    pub subsets_enumerated: u64,
    pub expectation_mismatches: usize,
    pub monotonicity_checks: usize,
    pub monotonicity_violations: usize,
    pub failures: Vec<String>,
}

impl PropositionSummary {
    pub fn passed(&self) -> bool {
        self.expectation_mismatches == 0 && self.monotonicity_violations == 0
    }

    fn fail(&mut self, msg: String) {
        if self.failures.len() < 20 {
            self.failures.push(msg);
        }
    }
}

fn expected_trend(direction: Direction, pool_vs_graph: Ordering) -> Trend {
    match (direction, pool_vs_graph) {
        (_, Ordering::Equal) => Trend::Constant,
        (Direction::Add, Ordering::Greater) | (Direction::Delete, Ordering::Less) => Trend::StrictlyIncreasing,
        _ => Trend::StrictlyDecreasing,
    }
}

/// Checks every case in both directions: the closed form against the subset
/// average for every feasible `k`, and the trend of the averages in `k`
/// against the sign of `H(pool) − H(G)`.
pub fn check_propositions(cases: &[OracleCase]) -> Result<PropositionSummary> {
    let mut out = PropositionSummary::default();
    for (idx, case) in cases.iter().enumerate() {
        if case.labels.len() > ORACLE_MAX_NODES {
            return Err(Error::InvalidParameter(format!("case {idx} exceeds {ORACLE_MAX_NODES} nodes")));
        }
        out.cases += 1;
        let masks = Masks::new(&case.labels);
        let g = masks.of(&case.graph);
        let r = masks.of(&case.reference);
        let labeled = case.labeled_graph();
        let reference = case.reference_graph();
        for direction in [Direction::Add, Direction::Delete] {
            let pool = match direction {
                Direction::Add => r & !g,
                Direction::Delete => g & !r,
            };
            let p = pool.count_ones() as usize;
            let k_max = match direction {
                Direction::Add => p,
                Direction::Delete => p.min(g.count_ones() as usize - 1),
            };
            if k_max == 0 {
                continue;
            }
            let base = LabelCounts::of(&case.graph, labeled.labels());
            let pooled = EdgeSet::from_edges(case.graph.node_count(), pool_edges(&case.graph, &case.reference, direction)?)?;
            let pooled = LabelCounts::of(&pooled, labeled.labels());
            let h_g = masks.homophily(g).expect("nonempty graph");
            let mut averages = vec![h_g];
            for k in 1..=k_max {
                let (avg, subsets) = subset_average(&masks, g, pool, k, direction);
                out.subsets_enumerated += subsets;
                out.expectation_checks += 1;
                let closed = match direction {
                    Direction::Add => {
                        rewire::expected_homophily_add(base.same, base.different, pooled.same, pooled.different, k as u64)?
                    }
                    Direction::Delete => {
                        rewire::expected_homophily_delete(base.same, base.different, pooled.same, pooled.different, k as u64)?
                    }
                };
                if closed != avg {
                    out.expectation_mismatches += 1;
                    out.fail(format!("case {idx} {} k={k}: closed {closed} vs exhaustive {avg}", direction.as_str()));
                }
                averages.push(avg);
            }
            let h_pool = masks.homophily(pool).expect("nonempty pool");
            let want = expected_trend(direction, h_pool.cmp(&h_g));
            let observed = Trend::of(&averages);
            let report = rewire::monotonicity_report(&labeled, &reference, direction, k_max)?;
            out.monotonicity_checks += 1;
            if observed != want || report.trend != want {
                out.monotonicity_violations += 1;
                out.fail(format!(
                    "case {idx} {}: expected {want:?}, exhaustive {observed:?}, closed form {:?}",
                    direction.as_str(),
                    report.trend
                ));
            }
        }
    }
    Ok(out)
}

fn pool_edges(g: &EdgeSet, r: &EdgeSet, direction: Direction) -> Result<Vec<Edge>> {
    Ok(rewire::candidate_pool(g, r, direction)?.to_vec())
}

#[derive(Clone, Debug, Serialize)]
pub struct MonteCarloOutcome {
    pub executions: usize,
    pub k: usize,
    pub mean: f64,
    pub std_error: f64,
    pub expected: f64,
    /// `|mean − expected| / std_error`; 0 when both vanish.
    pub z: f64,
}

/// Mean realized homophily of `executions` seeded runs of one plan.
pub fn monte_carlo_check(
    g: &LabeledGraph,
    reference: &ReferenceGraph,
    direction: Direction,
    k: usize,
    executions: usize,
    seed: u64,
) -> Result<MonteCarloOutcome> {
    use rayon::prelude::*;
    let plan = rewire::build_plan(g, reference, direction, EdgeBudget::Count(k), seed)?;
    let expected = plan
        .predicted_expectation
        .as_ref()
        .map(crate::rational::to_f64)
        .ok_or_else(|| Error::MissingLabels("labels for every edge".into()))?;
    let hs: Vec<f64> = (0..executions)
        .into_par_iter()
        .map(|t| {
            let mut plan = plan.clone();
            plan.seed = trial_seed(seed, 1, t);
            let out = rewire::execute(&plan, g)?;
            Ok(crate::rational::to_f64(&out.graph.homophily()?.homophily))
        })
        .collect::<Result<_>>()?;
    let (mean, std) = mean_std(&hs);
    let std_error = std / (executions as f64).sqrt();
    let diff = (mean - expected).abs();
    // Summation error alone can exceed a vanishing standard error.
    let z = if diff <= 1e-12 {
        0.0
    } else if std_error > 0.0 {
        diff / std_error
    } else {
        f64::INFINITY
    };
    Ok(MonteCarloOutcome {
        executions,
        k: plan.k,
        mean,
        std_error,
        expected,
        z,
    })
}

/// One fixed-`k` rewiring setup for [`monte_carlo_check`].
#[derive(Clone, Debug)]
pub struct MonteCarloConfig {
    pub graph: LabeledGraph,
    pub reference: ReferenceGraph,
    pub direction: Direction,
    pub k: usize,
}

/// `count` small block-model graphs with perturbed ideal references,
/// alternating between addition and deletion.
pub fn monte_carlo_configs(count: usize, seed: u64) -> Result<Vec<MonteCarloConfig>> {
    let mut out = Vec::with_capacity(count);
    let mut i = 0u64;
    while out.len() < count {
        let s = trial_seed(seed, 3, i as usize);
        i += 1;
        let sizes = vec![6 + (i as usize % 4), 8, 5 + (i as usize % 3)];
        let spec = synth::SbmSpec::new(sizes, 0.35, 0.2, s);
        let graph = synth::generate_sbm(&spec)?;
        let labels: Vec<Label> = graph.labels().iter().map(|l| l.expect("synthetic labels")).collect();
        let p = 0.05 + 0.05 * (out.len() % 8) as f64;
        let ideal = synth::ideal_reference(&labels);
        let reference = match synth::perturb_reference(&ideal, &labels, &synth::PerturbedReferenceSpec::new(p, s)?) {
            Ok(r) => r,
            Err(Error::DegenerateResult) => continue,
            Err(e) => return Err(e),
        };
        let direction = if out.len() % 2 == 0 { Direction::Add } else { Direction::Delete };
        let pool = rewire::candidate_pool(graph.edges(), &reference.edges, direction)?.len();
        let limit = match direction {
            Direction::Add => pool,
            Direction::Delete => pool.min(graph.edges().len().saturating_sub(1)),
        };
        if limit < 2 {
            continue;
        }
        out.push(MonteCarloConfig {
            graph,
            reference,
            direction,
            k: (limit / 3).max(1),
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct TheoremSummary {
    pub trials: usize,
    pub violations: usize,
    pub min_slack: f64,
    /// Two nodes with different labels joined by one edge.
    pub path_case: BoundCheck,
}

impl TheoremSummary {
    pub fn passed(&self) -> bool {
        self.violations == 0
            && (self.path_case.energy - 2.0).abs() <= 1e-12
            && (self.path_case.bound - 0.25).abs() <= 1e-12
    }
}

/// Random graphs with `Z = Y` (one-hot) and `W = I`.
pub fn check_theorem(trials: usize, n_max: usize, seed: u64) -> Result<TheoremSummary> {
    if n_max < 2 {
        return Err(Error::InvalidParameter("n_max must be at least 2".into()));
    }
    let mut violations = 0;
    let mut min_slack = f64::INFINITY;
    for t in 0..trials {
        let mut rng = rng_from_seed(trial_seed(seed, 2, t));
        let n = rng.random_range(2..=n_max);
        let classes = rng.random_range(1..=4u32);
        let labels: Vec<Label> = (0..n).map(|_| rng.random_range(0..classes)).collect();
        let density = rng.random_range(0.1..0.9);
        let mut edges = EdgeSet::new(n);
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random::<f64>() < density {
                    edges.insert_pair(i, j)?;
                }
            }
        }
        if edges.is_empty() {
            edges.insert_pair(0, 1)?;
        }
        let g = LabeledGraph::fully_labeled(edges, labels.clone())?;
        let check = SeparabilityCheck::one_hot(&labels, classes as usize)?;
        let b = synth::theorem1_bound_check(&g, &check)?;
        min_slack = min_slack.min(b.slack);
        if !b.satisfied {
            violations += 1;
        }
    }
    let path = LabeledGraph::fully_labeled(EdgeSet::from_pairs(2, [(0, 1)])?, vec![0, 1])?;
    let path_case = synth::theorem1_bound_check(&path, &SeparabilityCheck::one_hot(&[0, 1], 2)?)?;
    Ok(TheoremSummary {
        trials,
        violations,
        min_slack,
        path_case,
    })
}

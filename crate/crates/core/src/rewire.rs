//! Reference-guided edge addition and deletion.
//!
//! Adding samples `k` edges uniformly from `E_r \ E`; deleting samples `k`
//! edges uniformly from `E ∩ E_rᶜ`. With `n` same-label and `m`
//! different-label edges in `G`, and `n'` / `m'` (resp. `n*` / `m*`) the same
//! split of the pool, the expected homophily after rewiring is
//!
//! ```text
//! add:     (n + k·n'/(n'+m')) / (n + m + k)
//! delete:  (n − k·n*/(n*+m*)) / (n + m − k)
//! ```
//!
//! The number of same-label edges in a uniform `k`-subset is hypergeometric
//! with mean `k·n'/(n'+m')`, and the denominator is fixed, so these formulas are
//! exact for sampling without replacement.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeSet, LabelCounts, LabeledGraph};
use crate::rational::Rational;
use crate::reference::{partial_shuffle, ReferenceGraph};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    Add,
    Delete,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Add => "add",
            Direction::Delete => "delete",
        }
    }
}

/// How many edges to rewire: an absolute count or a fraction of the pool.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeBudget {
    Count(usize),
    Fraction(f64),
}

impl EdgeBudget {
    pub fn validate(&self) -> Result<()> {
        match *self {
            EdgeBudget::Count(0) => Err(Error::InvalidParameter("k must be at least 1".into())),
            EdgeBudget::Fraction(f) if !(f > 0.0 && f <= 1.0) => Err(Error::InvalidParameter(
                format!("fractional k must lie in (0, 1], got {f}"),
            )),
            _ => Ok(()),
        }
    }

    /// Requested edge count against a pool of `pool` edges. Fractions round
    /// half up.
    pub fn requested(&self, pool: usize) -> usize {
        match *self {
            EdgeBudget::Count(k) => k,
            EdgeBudget::Fraction(f) => (f * pool as f64 + 0.5).floor() as usize,
        }
    }

    /// Requested count clamped to `1..=pool`.
    pub fn resolve(&self, pool: usize) -> usize {
        self.requested(pool).clamp(1, pool.max(1))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RewirePlan {
    pub direction: Direction,
    pub k: usize,
    /// `k` before clamping to the pool size.
    pub requested_k: usize,
    pub candidate_pool: EdgeSet,
    pub seed: u64,
    /// Closed-form `E[H]` after rewiring, when every edge involved is labeled.
    pub predicted_expectation: Option<Rational>,
}

impl RewirePlan {
    pub fn clamped(&self) -> bool {
        self.k != self.requested_k
    }
}

#[derive(Clone, Debug)]
pub struct RewiredGraph {
    pub graph: LabeledGraph,
    /// The sampled edge set `S` that was added or removed.
    pub applied: EdgeSet,
    pub plan: RewirePlan,
}

/// The candidate pool for `direction`.
pub fn candidate_pool(g: &EdgeSet, reference: &EdgeSet, direction: Direction) -> Result<EdgeSet> {
    match direction {
        Direction::Add => reference.residual(g),
        Direction::Delete => g.residual(reference),
    }
}

pub fn build_plan(
    g: &LabeledGraph,
    reference: &ReferenceGraph,
    direction: Direction,
    budget: EdgeBudget,
    seed: u64,
) -> Result<RewirePlan> {
    budget.validate()?;
    let pool = candidate_pool(g.edges(), &reference.edges, direction)?;
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let requested_k = budget.requested(pool.len());
    let k = budget.resolve(pool.len());
    if k != requested_k {
        log::warn!(
            "k = {requested_k} clamped to {k} (pool has {} edges)",
            pool.len()
        );
    }
    let base = LabelCounts::of(g.edges(), g.labels());
    let pooled = LabelCounts::of(&pool, g.labels());
    let predicted_expectation = if base.unknown == 0 && pooled.unknown == 0 {
        match direction {
            Direction::Add => {
                expected_homophily_add(base.same, base.different, pooled.same, pooled.different, k as u64).ok()
            }
            Direction::Delete => {
                expected_homophily_delete(base.same, base.different, pooled.same, pooled.different, k as u64)
                    .ok()
            }
        }
    } else {
        None
    };
    Ok(RewirePlan {
        direction,
        k,
        requested_k,
        candidate_pool: pool,
        seed,
        predicted_expectation,
    })
}

/// Samples `plan.k` pool edges uniformly without replacement and applies them.
/// Deterministic in `(pool, k, seed)`.
pub fn execute(plan: &RewirePlan, g: &LabeledGraph) -> Result<RewiredGraph> {
    let mut pool = plan.candidate_pool.to_vec();
    let k = plan.k.min(pool.len());
    partial_shuffle(&mut pool, k, plan.seed);
    let applied = EdgeSet::from_edges(g.node_count(), pool[..k].iter().copied())?;
    let mut edges = g.edges().clone();
    for e in &applied {
        let consistent = match plan.direction {
            Direction::Add => edges.insert(*e)?,
            Direction::Delete => edges.remove(e),
        };
        if !consistent {
            return Err(Error::InvalidParameter(format!(
                "plan edge {:?} does not match the graph",
                e.endpoints()
            )));
        }
    }
    Ok(RewiredGraph {
        graph: g.with_edges(edges)?,
        applied,
        plan: plan.clone(),
    })
}

fn r(x: u64) -> Rational {
    Rational::from_integer(x as i128)
}

/// `(n + k·n'/(n'+m')) / (n + m + k)`.
pub fn expected_homophily_add(
    n_same: u64,
    m_diff: u64,
    n_prime: u64,
    m_prime: u64,
    k: u64,
) -> Result<Rational> {
    if n_prime + m_prime == 0 {
        return Err(Error::DivisionByZero("candidate pool has no edges"));
    }
    if n_same + m_diff + k == 0 {
        return Err(Error::DivisionByZero("rewired graph has no edges"));
    }
    let pool_rate = Rational::new(n_prime as i128, (n_prime + m_prime) as i128);
    Ok((r(n_same) + r(k) * pool_rate) / r(n_same + m_diff + k))
}

/// `(n − k·n*/(n*+m*)) / (n + m − k)`.
pub fn expected_homophily_delete(
    n_same: u64,
    m_diff: u64,
    n_star: u64,
    m_star: u64,
    k: u64,
) -> Result<Rational> {
    if n_star + m_star == 0 {
        return Err(Error::DivisionByZero("candidate pool has no edges"));
    }
    if k > n_star + m_star {
        return Err(Error::OverDeletion {
            k,
            reason: format!("the pool has only {} edges", n_star + m_star),
        });
    }
    if n_star > n_same || m_star > m_diff {
        return Err(Error::InvalidParameter(
            "the deletion pool must be a subset of the graph".into(),
        ));
    }
    if k >= n_same + m_diff {
        return Err(Error::DivisionByZero("every edge of the graph would be deleted"));
    }
    let pool_rate = Rational::new(n_star as i128, (n_star + m_star) as i128);
    Ok((r(n_same) - r(k) * pool_rate) / r(n_same + m_diff - k))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    StrictlyIncreasing,
    StrictlyDecreasing,
    Constant,
    Mixed,
}

impl Trend {
    pub fn of(values: &[Rational]) -> Trend {
        let steps: Vec<Ordering> = values.windows(2).map(|w| w[1].cmp(&w[0])).collect();
        if steps.iter().all(|o| *o == Ordering::Equal) {
            Trend::Constant
        } else if steps.iter().all(|o| *o == Ordering::Greater) {
            Trend::StrictlyIncreasing
        } else if steps.iter().all(|o| *o == Ordering::Less) {
            Trend::StrictlyDecreasing
        } else {
            Trend::Mixed
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonotonicityReport {
    pub direction: Direction,
    /// `(k, E[H(G⁽ᵏ⁾)])` for `k = 0..=k_max`.
    pub points: Vec<(usize, Rational)>,
    pub trend: Trend,
    /// `H(pool)` compared with `H(G)`.
    pub pool_vs_graph: Ordering,
}

impl MonotonicityReport {
    /// Trend predicted from the pool-vs-graph comparison.
    pub fn predicted_trend(&self) -> Trend {
        let improving = match self.direction {
            Direction::Add => self.pool_vs_graph == Ordering::Greater,
            Direction::Delete => self.pool_vs_graph == Ordering::Less,
        };
        if self.points.len() < 2 || self.pool_vs_graph == Ordering::Equal {
            Trend::Constant
        } else if improving {
            Trend::StrictlyIncreasing
        } else {
            Trend::StrictlyDecreasing
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.trend == self.predicted_trend()
    }
}

/// Closed-form expectations for `k = 0..=k_max` (clamped to what the pool and,
/// for deletion, the graph allow).
pub fn monotonicity_report(
    g: &LabeledGraph,
    reference: &ReferenceGraph,
    direction: Direction,
    k_max: usize,
) -> Result<MonotonicityReport> {
    let pool = candidate_pool(g.edges(), &reference.edges, direction)?;
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let base = LabelCounts::of(g.edges(), g.labels());
    let pooled = LabelCounts::of(&pool, g.labels());
    if base.unknown > 0 || pooled.unknown > 0 {
        return Err(Error::MissingLabels("edges of the graph or the pool".into()));
    }
    let graph_h = base.homophily().ok_or(Error::EmptyGraph)?;
    let pool_h = pooled.homophily().expect("pool is nonempty and labeled");
    let mut limit = k_max.min(pool.len());
    if direction == Direction::Delete {
        limit = limit.min(g.edges().len().saturating_sub(1));
    }
    let points = (0..=limit)
        .map(|k| {
            let value = match direction {
                Direction::Add => {
                    expected_homophily_add(base.same, base.different, pooled.same, pooled.different, k as u64)
                }
                Direction::Delete => {
                    expected_homophily_delete(base.same, base.different, pooled.same, pooled.different, k as u64)
                }
            }?;
            Ok((k, value))
        })
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<Rational> = points.iter().map(|(_, v)| *v).collect();
    Ok(MonotonicityReport {
        direction,
        trend: Trend::of(&values),
        points,
        pool_vs_graph: pool_h.cmp(&graph_h),
    })
}

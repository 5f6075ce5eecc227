//! The `report.json` written next to a rewired graph.
//!
//! Every homophily value appears as `{"ratio": "num/den", "value": float}`.
//! Field order is fixed and no maps are used, so identical runs serialize to
//! identical bytes.

use serde::Serialize;

use crate::io::{LoadReport, RunConfig};
use crate::pipeline::{ClusterResult, RefineOutput};
use crate::rational::{Rational, RationalValue};
use crate::reference::{ConditionCheck, EvaluationMode, Verdict};

fn rv(r: &Option<Rational>) -> Option<RationalValue> {
    r.map(RationalValue)
}

#[derive(Debug, Serialize)]
pub struct ConditionSection {
    pub verdict: Verdict,
    pub margin: Option<RationalValue>,
    pub graph_homophily: Option<RationalValue>,
    pub pool_homophily: Option<RationalValue>,
    pub pool_size: usize,
    /// `|E_r| / |E|`, addition only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_to_graph_ratio: Option<f64>,
    /// Whether `H(G_r) > H(G)` may stand in for the pool condition.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub surrogate_applicable: bool,
}

impl From<&ConditionCheck> for ConditionSection {
    fn from(c: &ConditionCheck) -> Self {
        ConditionSection {
            verdict: c.verdict,
            margin: rv(&c.margin),
            graph_homophily: rv(&c.graph_homophily),
            pool_homophily: rv(&c.pool_homophily),
            pool_size: c.pool_size,
            reference_to_graph_ratio: c.reference_to_graph_ratio,
            surrogate_applicable: c.surrogate_applicable,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Conditions {
    pub mode: EvaluationMode,
    pub addition: ConditionSection,
    pub deletion: ConditionSection,
}

#[derive(Debug, Serialize)]
pub struct HomophilySection {
    /// `H(G)`, or `H(Gˢ)` on the sampled subgraph.
    pub input_estimate: Option<RationalValue>,
    /// `H(G_r)`, or `H(G_rˢ)` on the sampled subgraph.
    pub reference_estimate: Option<RationalValue>,
    /// Full-graph homophily before and after, over the labels the evaluation
    /// mode may read.
    pub input: Option<RationalValue>,
    pub output: Option<RationalValue>,
}

#[derive(Debug, Serialize)]
pub struct EdgeCounts {
    pub input: usize,
    pub output: usize,
    pub applied: usize,
    pub reference: usize,
    pub inter_cluster: usize,
}

#[derive(Debug, Serialize)]
pub struct PassThrough {
    pub reason: String,
}

#[derive(Debug, Serialize)]
pub struct ClusterSection {
    pub id: usize,
    pub nodes: usize,
    pub seed: u64,
    pub input_edges: usize,
    pub output_edges: usize,
    pub applied_edges: usize,
    pub reference_edges: usize,
    pub input_homophily: Option<RationalValue>,
    pub realized_homophily: Option<RationalValue>,
    pub expected_homophily: Option<RationalValue>,
    pub pass_through: Option<PassThrough>,
}

impl From<&ClusterResult> for ClusterSection {
    fn from(c: &ClusterResult) -> Self {
        ClusterSection {
            id: c.cluster_id,
            nodes: c.nodes.len(),
            seed: c.seed,
            input_edges: c.input_edges,
            output_edges: c.output_edges,
            applied_edges: c.applied.len(),
            reference_edges: c.reference.edges.len(),
            input_homophily: rv(&c.input_homophily),
            realized_homophily: rv(&c.realized_homophily()),
            expected_homophily: rv(&c.expected_homophily),
            pass_through: c.pass_through.clone().map(|reason| PassThrough { reason }),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct EpsilonSection {
    pub selected: f64,
    /// Grid scores when a grid was searched.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub grid: Vec<GridScore>,
}

#[derive(Debug, Serialize)]
pub struct GridScore {
    pub epsilon: f64,
    pub score: Option<RationalValue>,
}

#[derive(Debug, Serialize)]
pub struct PartitionSection {
    pub cluster_size: usize,
    pub clusters: usize,
    pub sizes_min: usize,
    pub sizes_max: usize,
}

#[derive(Debug, Serialize)]
pub struct RewireReport {
    pub command: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub config: RunConfig,
    pub input: LoadReport,
    pub epsilon: EpsilonSection,
    pub partition: PartitionSection,
    pub homophily: HomophilySection,
    pub conditions: Conditions,
    pub edges: EdgeCounts,
    pub clusters: Vec<ClusterSection>,
    pub degraded: bool,
    pub allow_degraded: bool,
}

impl RewireReport {
    pub fn new(cfg: &RunConfig, load: &LoadReport, out: &RefineOutput, allow_degraded: bool) -> Self {
        let sizes = out.partition.sizes();
        RewireReport {
            command: "rewire",
            version: env!("CARGO_PKG_VERSION"),
            seed: cfg.seed,
            config: cfg.clone(),
            input: load.clone(),
            epsilon: EpsilonSection {
                selected: out.epsilon,
                grid: out
                    .epsilon_selection
                    .iter()
                    .flat_map(|s| &s.scores)
                    .map(|(epsilon, score)| GridScore {
                        epsilon: *epsilon,
                        score: rv(score),
                    })
                    .collect(),
            },
            partition: PartitionSection {
                cluster_size: out.cluster_size,
                clusters: out.partition.cluster_count(),
                sizes_min: sizes.iter().copied().min().unwrap_or(0),
                sizes_max: sizes.iter().copied().max().unwrap_or(0),
            },
            homophily: HomophilySection {
                input_estimate: rv(&out.conditions.graph_homophily),
                reference_estimate: rv(&out.conditions.reference_homophily),
                input: rv(&out.input_homophily),
                output: rv(&out.output_homophily),
            },
            conditions: Conditions {
                mode: out.conditions.mode,
                addition: (&out.conditions.addition).into(),
                deletion: (&out.conditions.deletion).into(),
            },
            edges: EdgeCounts {
                input: load.edges,
                output: out.graph.edges().len(),
                applied: out.applied.len(),
                reference: out.reference.edges.len(),
                inter_cluster: out.partition.cut_size(),
            },
            clusters: out.clusters.iter().map(ClusterSection::from).collect(),
            degraded: out.degraded(),
            allow_degraded,
        }
    }

    /// Pretty-printed JSON with a trailing newline.
    pub fn to_json(&self) -> serde_json::Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

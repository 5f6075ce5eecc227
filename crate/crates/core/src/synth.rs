//! Synthetic data and controlled references: ideal and perturbed reference
//! graphs, homophily-versus-k curves, the Dirichlet energy lower bound, and a
//! stochastic block model generator.

use std::io::Write;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Edge, EdgeSet, Label, LabelCounts, LabeledGraph, Split};
use crate::rational::{to_f64, Rational};
use crate::reference::{ReferenceGraph, ReferenceSource};
use crate::rewire::{build_plan, execute, Direction, EdgeBudget};
use crate::seed::{rng_from_seed, splitmix64, trial_seed};

/// Largest residual `max |Y − ZW|` accepted as exact separability.
pub const SEPARABILITY_TOLERANCE: f64 = 1e-8;

/// Same-class cliques, nothing across classes.
pub fn ideal_reference(labels: &[Label]) -> ReferenceGraph {
    let n = labels.len();
    let mut edges = EdgeSet::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            if labels[i] == labels[j] {
                edges.insert(Edge::new(i, j).expect("i < j")).expect("in range");
            }
        }
    }
    ReferenceGraph::new(edges, ReferenceSource::Synthetic)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbMode {
    /// Drop same-class edges and add cross-class pairs, each with probability `p`.
    #[default]
    Flip,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbedReferenceSpec {
    pub p: f64,
    pub mode: PerturbMode,
    pub seed: u64,
}

impl PerturbedReferenceSpec {
    pub fn new(p: f64, seed: u64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidParameter(format!("flip rate must lie in (0, 1), got {p}")));
        }
        Ok(PerturbedReferenceSpec {
            p,
            mode: PerturbMode::Flip,
            seed,
        })
    }
}

/// Flips pairs of `reference` independently at rate `p`: present same-class
/// edges are dropped, absent cross-class pairs are added. Pairs are visited
/// in row-major order so the result depends only on the seed.
pub fn perturb_reference(
    reference: &ReferenceGraph,
    labels: &[Label],
    spec: &PerturbedReferenceSpec,
) -> Result<ReferenceGraph> {
    let spec = PerturbedReferenceSpec::new(spec.p, spec.seed)?;
    let n = labels.len();
    if reference.node_count() != n {
        return Err(Error::UniverseMismatch {
            left: reference.node_count(),
            right: n,
        });
    }
    let mut rng = rng_from_seed(spec.seed);
    let mut edges = EdgeSet::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let present = reference.edges.contains_pair(i, j);
            let same = labels[i] == labels[j];
            let flip = rng.random::<f64>() < spec.p;
            let keep = match (same, present) {
                (true, true) => !flip,
                (false, false) => flip,
                (_, present) => present,
            };
            if keep {
                edges.insert(Edge::new(i, j).expect("i < j"))?;
            }
        }
    }
    if edges.is_empty() {
        return Err(Error::DegenerateResult);
    }
    Ok(ReferenceGraph::new(edges, ReferenceSource::Synthetic))
}

/// Keeps each reference edge independently with probability `keep`.
pub fn sparsify_reference(reference: &ReferenceGraph, keep: f64, seed: u64) -> Result<ReferenceGraph> {
    if !(0.0..=1.0).contains(&keep) {
        return Err(Error::InvalidParameter(format!("keep fraction must lie in [0, 1], got {keep}")));
    }
    let mut rng = rng_from_seed(seed);
    let kept = reference.edges.iter().filter(|_| rng.random::<f64>() < keep).copied();
    let edges = EdgeSet::from_edges(reference.node_count(), kept.collect::<Vec<_>>())?;
    Ok(ReferenceGraph::new(edges, reference.source))
}

/// `s(1−p) / (s(1−p) + x·p)` for `s` same-class and `x` cross-class pairs:
/// the ratio of expected counts after perturbing an ideal reference.
pub fn perturbed_homophily_ratio(labels: &[Label], p: f64) -> f64 {
    let mut sizes = std::collections::BTreeMap::<Label, u64>::new();
    for &l in labels {
        *sizes.entry(l).or_default() += 1;
    }
    let n = labels.len() as u64;
    let same: u64 = sizes.values().map(|&s| s * s.saturating_sub(1) / 2).sum();
    let cross = n * n.saturating_sub(1) / 2 - same;
    let s = same as f64 * (1.0 - p);
    s / (s + cross as f64 * p)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurveRow {
    pub k: usize,
    pub mean_h: f64,
    pub expected_h: f64,
    pub std_h: f64,
    pub trials: usize,
    #[serde(skip)]
    pub expected_exact: Option<Rational>,
}

pub const CURVE_CSV_HEADER: &str = "k,mean_H,expected_H,std_H,trials";

/// Mean realized homophily over `trials` seeded executions per `k`, next to
/// the closed-form expectation. Uses every known label of `g`. `k = 0` is the
/// input graph itself. Trial `t` at grid point `i` uses `trial_seed(seed, i, t)`.
pub fn homophily_curve(
    g: &LabeledGraph,
    reference: &ReferenceGraph,
    direction: Direction,
    k_grid: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<CurveRow>> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let base = LabelCounts::of(g.edges(), g.labels()).homophily().ok_or(Error::NoLabeledEdges)?;
    k_grid
        .iter()
        .enumerate()
        .map(|(point, &k)| {
            if k == 0 {
                return Ok(CurveRow {
                    k,
                    mean_h: to_f64(&base),
                    expected_h: to_f64(&base),
                    std_h: 0.0,
                    trials,
                    expected_exact: Some(base),
                });
            }
            let plan = build_plan(g, reference, direction, EdgeBudget::Count(k), seed)?;
            let realized: Vec<f64> = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let mut plan = plan.clone();
                    plan.seed = trial_seed(seed, point, t);
                    let out = execute(&plan, g)?;
                    LabelCounts::of(out.graph.edges(), g.labels())
                        .homophily()
                        .map(|h| to_f64(&h))
                        .ok_or(Error::NoLabeledEdges)
                })
                .collect::<Result<_>>()?;
            let (mean, std) = mean_std(&realized);
            Ok(CurveRow {
                k: plan.k,
                mean_h: mean,
                expected_h: plan.predicted_expectation.as_ref().map_or(f64::NAN, to_f64),
                std_h: std,
                trials,
                expected_exact: plan.predicted_expectation,
            })
        })
        .collect()
}

/// Sample mean and standard deviation (`n − 1` denominator).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn write_curve_csv<W: Write>(rows: &[CurveRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CURVE_CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.k, r.mean_h, r.expected_h, r.std_h, r.trials)?;
    }
    Ok(())
}

fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &t in &idx[i..=j] {
            ranks[t] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with tied values given their average rank.
/// `None` when either side is constant or the lengths differ.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(xs), average_ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    (vx > 0.0 && vy > 0.0).then(|| cov / (vx * vy).sqrt())
}

/// Embeddings `Z` and a linear classifier `W` with `Y = ZW`.
#[derive(Clone, Debug)]
pub struct SeparabilityCheck {
    pub embeddings: Array2<f64>,
    pub classifier: Array2<f64>,
    pub labels: Array2<f64>,
    /// Smallest nonzero adjacency entry; 1 for unweighted graphs.
    pub alpha_m: f64,
    pub residual: f64,
}

impl SeparabilityCheck {
    pub fn new(embeddings: Array2<f64>, classifier: Array2<f64>, labels: Array2<f64>, alpha_m: f64) -> Result<Self> {
        if embeddings.ncols() != classifier.nrows()
            || labels.nrows() != embeddings.nrows()
            || labels.ncols() != classifier.ncols()
        {
            return Err(Error::ShapeMismatch(format!(
                "Z {:?}, W {:?}, Y {:?}",
                embeddings.dim(),
                classifier.dim(),
                labels.dim()
            )));
        }
        let residual = (&labels - &embeddings.dot(&classifier))
            .iter()
            .fold(0.0f64, |m, x| m.max(x.abs()));
        Ok(SeparabilityCheck {
            embeddings,
            classifier,
            labels,
            alpha_m,
            residual,
        })
    }

    /// `Z = Y` (one-hot rows), `W = I`.
    pub fn one_hot(labels: &[Label], classes: usize) -> Result<Self> {
        let y = one_hot(labels, classes)?;
        SeparabilityCheck::new(y.clone(), Array2::eye(classes), y, 1.0)
    }
}

pub fn one_hot(labels: &[Label], classes: usize) -> Result<Array2<f64>> {
    let mut y = Array2::zeros((labels.len(), classes));
    for (i, &l) in labels.iter().enumerate() {
        if l as usize >= classes {
            return Err(Error::InvalidParameter(format!("label {l} out of range for {classes} classes")));
        }
        y[[i, l as usize]] = 1.0;
    }
    Ok(y)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundCheck {
    pub energy: f64,
    pub bound: f64,
    pub satisfied: bool,
    pub slack: f64,
}

/// `tr(ZᵀLZ) ≥ α_m·|E| / (2‖W‖_F²) · (1 − H)`.
pub fn theorem1_bound_check(g: &LabeledGraph, check: &SeparabilityCheck) -> Result<BoundCheck> {
    if check.residual > SEPARABILITY_TOLERANCE {
        return Err(Error::PreconditionViolated(check.residual));
    }
    let energy = g.dirichlet_energy(check.embeddings.view())?;
    let bound = if g.edges().is_empty() {
        0.0
    } else {
        let h = to_f64(&g.homophily()?.homophily);
        let w2 = frobenius_sq(check.classifier.view());
        check.alpha_m * g.edges().len() as f64 / (2.0 * w2) * (1.0 - h)
    };
    Ok(BoundCheck {
        energy,
        bound,
        satisfied: energy >= bound,
        slack: energy - bound,
    })
}

fn frobenius_sq(w: ArrayView2<f64>) -> f64 {
    w.iter().map(|x| x * x).sum()
}

/// Per-class Gaussian features: class `c` has mean `separation·e_{c mod dim}`
/// and isotropic noise with standard deviation `noise`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureModel {
    pub dim: usize,
    pub separation: f64,
    pub noise: f64,
}

impl Default for FeatureModel {
    fn default() -> Self {
        FeatureModel {
            dim: 8,
            separation: 3.0,
            noise: 1.0,
        }
    }
}

/// Fractions of nodes tagged train and val; the rest are test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions { train: 0.6, val: 0.2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SbmSpec {
    pub class_sizes: Vec<usize>,
    pub intra_p: f64,
    pub inter_p: f64,
    pub features: FeatureModel,
    pub splits: SplitFractions,
    pub seed: u64,
}

impl SbmSpec {
    pub fn new(class_sizes: Vec<usize>, intra_p: f64, inter_p: f64, seed: u64) -> Self {
        SbmSpec {
            class_sizes,
            intra_p,
            inter_p,
            features: FeatureModel::default(),
            splits: SplitFractions::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if self.class_sizes.is_empty() || self.class_sizes.contains(&0) {
            return Err(Error::InvalidParameter("every class needs at least one node".into()));
        }
        if !prob(self.intra_p) || !prob(self.inter_p) {
            return Err(Error::InvalidParameter("edge probabilities must lie in [0, 1]".into()));
        }
        let s = self.splits;
        if s.train < 0.0 || s.val < 0.0 || s.train + s.val > 1.0 + 1e-12 {
            return Err(Error::InvalidParameter("split fractions must be nonnegative and sum to at most 1".into()));
        }
        if self.features.dim == 0 || self.features.noise.is_nan() || self.features.noise < 0.0 || !self.features.separation.is_finite() {
            return Err(Error::InvalidParameter("feature model needs dim ≥ 1 and finite parameters".into()));
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.class_sizes.iter().sum()
    }
}

// Stream offsets so edges, features and splits draw from unrelated generators.
const FEATURE_STREAM: u64 = 0x5EED_F3A7;
const SPLIT_STREAM: u64 = 0x5EED_5B17;

/// Draws a stochastic block model. Nodes are numbered class by class.
pub fn generate_sbm(spec: &SbmSpec) -> Result<LabeledGraph> {
    spec.validate()?;
    let n = spec.node_count();
    let mut starts = Vec::with_capacity(spec.class_sizes.len() + 1);
    let mut labels = Vec::with_capacity(n);
    starts.push(0);
    for (c, &size) in spec.class_sizes.iter().enumerate() {
        labels.extend(std::iter::repeat_n(c as Label, size));
        starts.push(starts[c] + size);
    }

    let mut rng = rng_from_seed(spec.seed);
    let mut edges = EdgeSet::new(n);
    for (u, &label) in labels.iter().enumerate() {
        let cu = label as usize;
        for cv in cu..spec.class_sizes.len() {
            let (lo, p) = if cv == cu {
                (u + 1, spec.intra_p)
            } else {
                (starts[cv], spec.inter_p)
            };
            for v in bernoulli_run(lo, starts[cv + 1], p, &mut rng) {
                edges.insert(Edge::new(u, v).expect("u < v"))?;
            }
        }
    }

    let fm = spec.features;
    let mut frng = rng_from_seed(splitmix64(spec.seed ^ FEATURE_STREAM));
    let mut x = Array2::zeros((n, fm.dim));
    for (i, mut row) in x.rows_mut().into_iter().enumerate() {
        for v in row.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut frng);
            *v = fm.noise * z;
        }
        row[labels[i] as usize % fm.dim] += fm.separation;
    }

    let mut order: Vec<usize> = (0..n).collect();
    crate::reference::partial_shuffle(&mut order, n, splitmix64(spec.seed ^ SPLIT_STREAM));
    let n_train = (spec.splits.train * n as f64).round() as usize;
    let n_val = ((spec.splits.val * n as f64).round() as usize).min(n - n_train.min(n));
    let mut splits = vec![Split::Test; n];
    for (rank, &v) in order.iter().enumerate() {
        splits[v] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    LabeledGraph::new(edges, labels.into_iter().map(Some).collect(), Some(x), splits)
}

/// Indices in `lo..hi` selected independently with probability `p`, drawn by
/// geometric skipping.
fn bernoulli_run(lo: usize, hi: usize, p: f64, rng: &mut impl Rng) -> Vec<usize> {
    let mut out = Vec::new();
    if p <= 0.0 || lo >= hi {
        return out;
    }
    if p >= 1.0 {
        out.extend(lo..hi);
        return out;
    }
    let log_q = (1.0 - p).ln();
    let mut pos = lo as f64 - 1.0;
    loop {
        let u: f64 = 1.0 - rng.random::<f64>();
        pos += (u.ln() / log_q).floor() + 1.0;
        if pos >= hi as f64 {
            return out;
        }
        out.push(pos as usize);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;
    use ndarray::array;

    #[test]
    fn ideal_reference_examples() {
        assert_eq!(ideal_reference(&[0, 0, 1]).edges.to_vec(), vec![Edge::new(0, 1).unwrap()]);
        assert!(ideal_reference(&[0, 1, 2, 3]).edges.is_empty());
        let labels = [0, 0, 0, 1, 1, 1];
        let r = ideal_reference(&labels);
        assert_eq!(r.edges.len(), 6);
        let opt: Vec<_> = labels.iter().map(|&l| Some(l)).collect();
        assert_eq!(LabelCounts::of(&r.edges, &opt).homophily(), Some(ratio(1, 1)));
    }

    #[test]
    fn tiny_flip_rate_keeps_ideal() {
        let labels = [0, 0, 1, 1, 2, 2, 0];
        let ideal = ideal_reference(&labels);
        let spec = PerturbedReferenceSpec::new(1e-9, 3).unwrap();
        assert_eq!(perturb_reference(&ideal, &labels, &spec).unwrap(), ideal);
    }

    #[test]
    fn flip_rate_must_be_open_interval() {
        assert!(PerturbedReferenceSpec::new(0.0, 1).is_err());
        assert!(PerturbedReferenceSpec::new(1.0, 1).is_err());
    }

    #[test]
    fn degenerate_perturbation_reported() {
        // One same-class pair and no cross pairs: dropping it empties the graph.
        let labels = [0, 0];
        let ideal = ideal_reference(&labels);
        let hit = (0..200)
            .map(|s| perturb_reference(&ideal, &labels, &PerturbedReferenceSpec::new(0.5, s).unwrap()))
            .any(|r| matches!(r, Err(Error::DegenerateResult)));
        assert!(hit);
    }

    #[test]
    fn perturbed_counts_match_rates() {
        // Monte Carlo oracle on counts: same-class survivors ~ s(1−p),
        // cross-class additions ~ x·p, each within 3 standard errors.
        let labels: Vec<Label> = (0..60).map(|i| i / 20).collect();
        let opt: Vec<_> = labels.iter().map(|&l| Some(l)).collect();
        let ideal = ideal_reference(&labels);
        let p = 0.3;
        let (s, x) = (3.0 * 190.0, 1770.0 - 570.0);
        let seeds = 1000;
        let (mut same_sum, mut cross_sum, mut ratio_sum) = (0.0, 0.0, 0.0);
        for seed in 0..seeds {
            let r = perturb_reference(&ideal, &labels, &PerturbedReferenceSpec::new(p, seed).unwrap()).unwrap();
            let c = LabelCounts::of(&r.edges, &opt);
            same_sum += c.same as f64;
            cross_sum += c.different as f64;
            ratio_sum += c.same as f64 / (c.same + c.different) as f64;
        }
        let n = seeds as f64;
        let se_same = (s * p * (1.0 - p) / n).sqrt();
        let se_cross = (x * p * (1.0 - p) / n).sqrt();
        assert!((same_sum / n - s * (1.0 - p)).abs() < 3.0 * se_same);
        assert!((cross_sum / n - x * p).abs() < 3.0 * se_cross);
        // The ratio of expectations tracks the mean ratio closely at this size.
        let analytic = perturbed_homophily_ratio(&labels, p);
        assert!((analytic - s * 0.7 / (s * 0.7 + x * 0.3)).abs() < 1e-12);
        assert!((ratio_sum / n - analytic).abs() < 0.005);
    }

    #[test]
    fn half_flip_two_classes_is_mixed() {
        let labels: Vec<Label> = (0..20).map(|i| i / 10).collect();
        let opt: Vec<_> = labels.iter().map(|&l| Some(l)).collect();
        let ideal = ideal_reference(&labels);
        for seed in 0..100 {
            let r = perturb_reference(&ideal, &labels, &PerturbedReferenceSpec::new(0.5, seed).unwrap()).unwrap();
            let h = LabelCounts::of(&r.edges, &opt).homophily().unwrap();
            assert!(h > ratio(0, 1) && h < ratio(1, 1));
        }
    }

    #[test]
    fn spearman_basics() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]), None);
        // Ties: ranks [1.5, 1.5, 3] vs [1, 2, 3].
        let r = spearman(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((r - 0.866_025_403_784_438_6).abs() < 1e-12);
    }

    #[test]
    fn bound_on_path_pair() {
        let g = LabeledGraph::fully_labeled(EdgeSet::from_pairs(2, [(0, 1)]).unwrap(), vec![0, 1]).unwrap();
        let check = SeparabilityCheck::one_hot(&[0, 1], 2).unwrap();
        let b = theorem1_bound_check(&g, &check).unwrap();
        assert!((b.energy - 2.0).abs() < 1e-12);
        assert!((b.bound - 0.25).abs() < 1e-12);
        assert!(b.satisfied);
    }

    #[test]
    fn bound_zero_when_homophilous() {
        let g = LabeledGraph::fully_labeled(EdgeSet::from_pairs(3, [(0, 1), (1, 2)]).unwrap(), vec![0, 0, 0]).unwrap();
        let check = SeparabilityCheck::one_hot(&[0, 0, 0], 1).unwrap();
        let b = theorem1_bound_check(&g, &check).unwrap();
        assert_eq!(b.bound, 0.0);
        assert!(b.satisfied);
    }

    #[test]
    fn bound_requires_separability() {
        let g = LabeledGraph::fully_labeled(EdgeSet::from_pairs(2, [(0, 1)]).unwrap(), vec![0, 1]).unwrap();
        let y = array![[1.0, 0.0], [0.0, 1.0]];
        let check = SeparabilityCheck::new(array![[0.5, 0.0], [0.0, 1.0]], Array2::eye(2), y, 1.0).unwrap();
        assert!(matches!(theorem1_bound_check(&g, &check), Err(Error::PreconditionViolated(_))));
    }

    #[test]
    fn sbm_extremes() {
        let g = generate_sbm(&SbmSpec::new(vec![10, 10], 0.5, 0.0, 1)).unwrap();
        assert_eq!(g.homophily().unwrap().homophily, ratio(1, 1));
        let g = generate_sbm(&SbmSpec::new(vec![10, 10], 0.0, 0.5, 1)).unwrap();
        assert_eq!(g.homophily().unwrap().homophily, ratio(0, 1));
        let full = generate_sbm(&SbmSpec::new(vec![4, 3], 1.0, 1.0, 1)).unwrap();
        assert_eq!(full.edges().len(), 21);
    }

    #[test]
    fn sbm_uniform_matches_pair_fraction() {
        // Equal rates: H ≈ same-class pairs / all pairs = 2·C(10,2)/C(20,2).
        let expected = 90.0 / 190.0;
        let trials = 200;
        let hs: Vec<f64> = (0..trials)
            .map(|s| to_f64(&generate_sbm(&SbmSpec::new(vec![10, 10], 0.3, 0.3, s)).unwrap().homophily().unwrap().homophily))
            .collect();
        let (mean, std) = mean_std(&hs);
        assert!((mean - expected).abs() < 3.0 * std / (trials as f64).sqrt());
    }

    #[test]
    fn sbm_is_deterministic_and_split() {
        let spec = SbmSpec::new(vec![30, 30, 40], 0.2, 0.05, 9);
        let (a, b) = (generate_sbm(&spec).unwrap(), generate_sbm(&spec).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.nodes_in(Split::Train).len(), 60);
        assert_eq!(a.nodes_in(Split::Val).len(), 20);
        assert_eq!(a.nodes_in(Split::Test).len(), 20);
        assert_eq!(a.features().unwrap().dim(), (100, 8));
    }

    #[test]
    fn bernoulli_run_rate() {
        let mut rng = rng_from_seed(2);
        let total: usize = (0..200).map(|_| bernoulli_run(0, 1000, 0.1, &mut rng).len()).sum();
        let mean = total as f64 / 200.0;
        assert!((mean - 100.0).abs() < 3.0 * (90.0f64 / 200.0).sqrt());
    }

    #[test]
    fn curve_zero_row_is_input() {
        let labels: Vec<Label> = vec![0, 0, 1, 1];
        let g = LabeledGraph::fully_labeled(EdgeSet::from_pairs(4, [(0, 2), (1, 3), (0, 1)]).unwrap(), labels.clone())
            .unwrap();
        let r = ideal_reference(&labels);
        let rows = homophily_curve(&g, &r, Direction::Add, &[0, 1], 5, 3).unwrap();
        assert_eq!(rows[0].mean_h, 1.0 / 3.0);
        assert_eq!(rows[0].expected_exact, Some(ratio(1, 3)));
        assert_eq!(rows[1].expected_exact, Some(ratio(2, 4)));
        assert_eq!(rows[1].mean_h, 0.5);
        let mut csv = Vec::new();
        write_curve_csv(&rows, &mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("k,mean_H,expected_H,std_H,trials\n0,"));
    }
}

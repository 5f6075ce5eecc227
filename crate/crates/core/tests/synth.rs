use ndarray::Array2;
use proptest::prelude::*;
use refine_core::graph::{EdgeSet, Label, LabelCounts, LabeledGraph};
use refine_core::rational::to_f64;
use refine_core::reference::{check_addition_condition, check_deletion_condition, Verdict};
use refine_core::rewire::{candidate_pool, Direction};
use refine_core::seed::trial_seed;
use refine_core::synth::{
    generate_sbm, homophily_curve, ideal_reference, one_hot, perturb_reference, sparsify_reference, spearman,
    theorem1_bound_check, PerturbedReferenceSpec, SbmSpec, SeparabilityCheck,
};

fn labeled(labels: &[Label]) -> Vec<Option<Label>> {
    labels.iter().map(|&l| Some(l)).collect()
}

fn full_labels(g: &LabeledGraph) -> Vec<Label> {
    g.labels().iter().map(|l| l.unwrap()).collect()
}

fn edges_strategy() -> impl Strategy<Value = (Vec<Label>, EdgeSet)> {
    (2usize..=10).prop_flat_map(|n| {
        let pairs = n * (n - 1) / 2;
        (
            proptest::collection::vec(0u32..4, n),
            proptest::collection::vec(any::<bool>(), pairs),
        )
            .prop_map(move |(labels, mask)| {
                let mut edges = EdgeSet::new(n);
                let mut bits = mask.into_iter();
                for i in 0..n {
                    for j in (i + 1)..n {
                        if bits.next().unwrap() {
                            edges.insert_pair(i, j).unwrap();
                        }
                    }
                }
                if edges.is_empty() {
                    edges.insert_pair(0, 1).unwrap();
                }
                (labels, edges)
            })
    })
}

proptest! {
    #[test]
    fn ideal_reference_is_perfectly_homophilous(labels in proptest::collection::vec(0u32..5, 2..40)) {
        let r = ideal_reference(&labels);
        let counts = LabelCounts::of(&r.edges, &labeled(&labels));
        prop_assert_eq!(counts.different, 0);
        let same_pairs: usize = (0..5u32)
            .map(|c| labels.iter().filter(|&&l| l == c).count())
            .map(|s| s * s.saturating_sub(1) / 2)
            .sum();
        prop_assert_eq!(r.edges.len(), same_pairs);
        if same_pairs > 0 {
            prop_assert_eq!(counts.homophily().unwrap(), refine_core::rational::ratio(1, 1));
        }
    }

    #[test]
    fn bound_holds_for_scaled_separable_embeddings(
        (labels, edges) in edges_strategy(),
        scales in proptest::collection::vec(0.2f64..5.0, 4),
    ) {
        // Z = Y·S and W = S⁻¹ keep Y = ZW exact up to round-off.
        let classes = 4;
        let y = one_hot(&labels, classes).unwrap();
        let s = Array2::from_diag(&ndarray::Array1::from(scales.clone()));
        let w = Array2::from_diag(&ndarray::Array1::from(scales.iter().map(|v| 1.0 / v).collect::<Vec<_>>()));
        let check = SeparabilityCheck::new(y.dot(&s), w, y, 1.0).unwrap();
        let g = LabeledGraph::fully_labeled(edges, labels).unwrap();
        let b = theorem1_bound_check(&g, &check).unwrap();
        prop_assert!(b.satisfied, "energy {} below bound {}", b.energy, b.bound);
    }
}

fn heterophilous_sbm(seed: u64) -> LabeledGraph {
    generate_sbm(&SbmSpec::new(vec![30; 5], 0.1, 0.1, seed)).unwrap()
}

#[test]
fn curve_means_track_closed_form() {
    let g = heterophilous_sbm(3);
    let labels = full_labels(&g);
    let ideal = ideal_reference(&labels);
    for (i, p) in [0.1, 0.6].into_iter().enumerate() {
        let r = perturb_reference(&ideal, &labels, &PerturbedReferenceSpec::new(p, i as u64).unwrap()).unwrap();
        for direction in [Direction::Add, Direction::Delete] {
            let pool = candidate_pool(g.edges(), &r.edges, direction).unwrap().len();
            let cap = match direction {
                Direction::Add => pool,
                Direction::Delete => pool.min(g.edges().len() - 1),
            };
            let ks: Vec<usize> = (0..=8).map(|j| cap * j / 8).collect();
            let trials = 40;
            for row in homophily_curve(&g, &r, direction, &ks, trials, 17).unwrap() {
                let tol = 4.0 * row.std_h / (trials as f64).sqrt();
                assert!(
                    (row.mean_h - row.expected_h).abs() <= tol.max(1e-12),
                    "p={p} {} k={}: mean {} expected {} tol {tol}",
                    direction.as_str(),
                    row.k,
                    row.mean_h,
                    row.expected_h
                );
            }
        }
    }
}

fn curve_rho(g: &LabeledGraph, r: &refine_core::reference::ReferenceGraph, direction: Direction, cap: usize) -> f64 {
    let ks: Vec<usize> = (0..=10).map(|j| cap * j / 10).collect();
    let rows = homophily_curve(g, r, direction, &ks, 30, 23).unwrap();
    let xs: Vec<f64> = rows.iter().map(|r| r.k as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mean_h).collect();
    spearman(&xs, &ys).unwrap()
}

#[test]
fn addition_curve_rises_when_condition_holds() {
    let g = heterophilous_sbm(8);
    let labels = full_labels(&g);
    let r = perturb_reference(&ideal_reference(&labels), &labels, &PerturbedReferenceSpec::new(0.1, 2).unwrap())
        .unwrap();
    assert_eq!(check_addition_condition(&g, &r).unwrap().verdict, Verdict::Holds);
    let cap = candidate_pool(g.edges(), &r.edges, Direction::Add).unwrap().len();
    let rho = curve_rho(&g, &r, Direction::Add, cap);
    assert!(rho > 0.99, "spearman {rho}");
}

#[test]
fn deletion_against_sparse_reference_follows_condition() {
    let g = heterophilous_sbm(12);
    let labels = full_labels(&g);
    let perturbed =
        perturb_reference(&ideal_reference(&labels), &labels, &PerturbedReferenceSpec::new(0.1, 4).unwrap()).unwrap();
    let r = sparsify_reference(&perturbed, 0.1, 9).unwrap();
    assert!(r.edges.len() * 8 < perturbed.edges.len());
    let check = check_deletion_condition(&g, &r).unwrap();
    assert_eq!(check.verdict, Verdict::Holds);
    let cap = g.edges().len() - 1;
    let pool = candidate_pool(g.edges(), &r.edges, Direction::Delete).unwrap().len();
    let rho = curve_rho(&g, &r, Direction::Delete, pool.min(cap));
    assert!(rho > 0.95, "spearman {rho}");
}

#[test]
fn uniform_two_class_sbm_homophily_near_pair_fraction() {
    // Same-class pairs over all pairs for two classes of 20: 2·190 / 780.
    let analytic = 380.0 / 780.0;
    let hs: Vec<f64> = (0..200)
        .map(|s| {
            let g = generate_sbm(&SbmSpec::new(vec![20, 20], 0.2, 0.2, trial_seed(1, 0, s))).unwrap();
            to_f64(&g.homophily().unwrap().homophily)
        })
        .collect();
    let (mean, std) = refine_core::synth::mean_std(&hs);
    assert!(mean < 0.5);
    assert!((mean - analytic).abs() <= 3.0 * std / (hs.len() as f64).sqrt(), "mean {mean}");
}

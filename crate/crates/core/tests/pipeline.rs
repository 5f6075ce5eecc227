use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use refine_core::graph::{Edge, EdgeSet, LabeledGraph};
use refine_core::partition::{self, Partition};
use refine_core::pipeline::{run_refine, ClusterSize, Evaluation, RefineConfig};
use refine_core::reference::{build_reference, check_addition_condition, KernelChoice, ReferenceConfig, Verdict};
use refine_core::rewire::{Direction, EdgeBudget};
use refine_core::synth::{generate_sbm, SbmSpec};

fn random_edges(n: usize, avg_degree: f64, seed: u64) -> EdgeSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = (avg_degree / n as f64).min(1.0);
    let mut edges = EdgeSet::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < p {
                edges.insert_pair(i, j).unwrap();
            }
        }
    }
    edges
}

fn check_set_partition(p: &Partition, edges: &EdgeSet) {
    let n = edges.node_count();
    let total: usize = p.clusters().iter().map(Vec::len).sum();
    assert_eq!(total, n);
    let mut seen = vec![false; n];
    for (id, nodes) in p.clusters().iter().enumerate() {
        assert!(!nodes.is_empty());
        for &v in nodes {
            assert!(!seen[v], "node {v} in two clusters");
            seen[v] = true;
            assert_eq!(p.assignment()[v], id);
        }
    }
    let cut: Vec<Edge> = edges
        .iter()
        .filter(|e| p.assignment()[e.u()] != p.assignment()[e.v()])
        .copied()
        .collect();
    assert_eq!(p.inter_cluster_edges().to_vec(), cut);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn partition_is_a_set_partition(
        n in 2usize..300,
        c in 2usize..60,
        degree in 0.0f64..8.0,
        seed in any::<u64>(),
    ) {
        let edges = random_edges(n, degree, seed);
        let p = partition::partition(&edges, c, seed).unwrap();
        check_set_partition(&p, &edges);
        prop_assert_eq!(p.cluster_count(), if n <= c { 1 } else { n.div_ceil(c) });
    }

    #[test]
    fn balance_within_quarter_of_target(
        parts in 4usize..12,
        c in 10usize..60,
        degree in 1.0f64..10.0,
        seed in any::<u64>(),
    ) {
        let n = parts * c;
        let edges = random_edges(n, degree, seed);
        let p = partition::partition(&edges, c, seed).unwrap();
        let largest = p.sizes().into_iter().max().unwrap();
        prop_assert!(largest as f64 <= 1.25 * c as f64, "largest {} for c = {}", largest, c);
    }
}

fn sbm(seed: u64) -> LabeledGraph {
    generate_sbm(&SbmSpec::new(vec![50; 4], 0.06, 0.03, seed)).unwrap()
}

fn clustered(direction: Direction, seed: u64) -> RefineConfig {
    let mut cfg = RefineConfig::new(1.0, direction, EdgeBudget::Fraction(0.4), seed);
    cfg.cluster_size = ClusterSize::Fixed(50);
    cfg
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn reconstruction_changes_only_applied_edges(seed in any::<u64>(), delete in any::<bool>()) {
        let direction = if delete { Direction::Delete } else { Direction::Add };
        let g = sbm(seed);
        let out = run_refine(&g, &clustered(direction, seed)).unwrap();
        let a = out.partition.assignment();
        let input = g.edges();
        let output = out.graph.edges();
        let cross = |e: &&Edge| a[e.u()] != a[e.v()];
        prop_assert_eq!(
            input.iter().filter(cross).collect::<Vec<_>>(),
            output.iter().filter(cross).collect::<Vec<_>>()
        );
        let mut expected = input.clone();
        for c in &out.clusters {
            for e in &c.applied {
                prop_assert_eq!(a[e.u()], c.cluster_id);
                prop_assert_eq!(a[e.v()], c.cluster_id);
                let changed = match direction {
                    Direction::Add => expected.insert(*e).unwrap(),
                    Direction::Delete => expected.remove(e),
                };
                prop_assert!(changed);
            }
        }
        prop_assert_eq!(&expected, output);
    }
}

#[test]
fn output_independent_of_worker_count() {
    let g = sbm(41);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_refine(&g, &clustered(Direction::Add, 5)).unwrap())
    };
    let one = run(1);
    for threads in [2, 4, 7] {
        let other = run(threads);
        assert_eq!(one.graph.edges(), other.graph.edges());
        assert_eq!(one.partition.assignment(), other.partition.assignment());
        assert_eq!(one.applied, other.applied);
    }
}

/// Two loosely linked communities, each holding two classes joined mostly
/// across the class boundary. Features come from the block model, so each
/// class has its own mean.
fn two_communities(seed: u64) -> LabeledGraph {
    let base = generate_sbm(&SbmSpec::new(vec![30; 4], 0.0, 0.0, seed)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let n = base.node_count();
    let label = |v: usize| base.labels()[v].unwrap();
    let community = |v: usize| label(v) / 2;
    let mut edges = EdgeSet::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if community(i) != community(j) {
                0.002
            } else if label(i) == label(j) {
                0.04
            } else {
                0.15
            };
            if rng.random::<f64>() < p {
                edges.insert_pair(i, j).unwrap();
            }
        }
    }
    base.with_edges(edges).unwrap()
}

#[test]
fn two_cluster_addition_usually_raises_homophily() {
    let mut raised = 0;
    let mut runs = 0;
    for seed in 0..50u64 {
        let g = two_communities(100 + seed);
        let mut cfg = RefineConfig::new(1.0, Direction::Add, EdgeBudget::Fraction(0.3), seed);
        cfg.cluster_size = ClusterSize::Fixed(60);
        cfg.evaluation = Evaluation::Exact;
        let out = run_refine(&g, &cfg).unwrap();
        assert_eq!(out.partition.cluster_count(), 2);
        let holds = out.partition.clusters().iter().all(|nodes| {
            let local = g.induced(nodes);
            let x = local.features().unwrap();
            let r = build_reference(x.view(), &local.train_labels(), &ReferenceConfig::new(KernelChoice::Pdp, 1.0))
                .unwrap()
                .reference;
            check_addition_condition(&local, &r).unwrap().verdict == Verdict::Holds
        });
        if !holds {
            continue;
        }
        runs += 1;
        if out.output_homophily.unwrap() > out.input_homophily.unwrap() {
            raised += 1;
        }
    }
    assert!(runs >= 40, "conditions held in only {runs} of 50 graphs");
    assert!(raised * 10 >= runs * 9, "homophily rose in {raised} of {runs} runs");
}

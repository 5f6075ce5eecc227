use ndarray::Array2;
use proptest::prelude::*;
use refine_core::graph::{EdgeSet, LabeledGraph, Split};
use refine_core::io::{load_dataset, save_dataset};

fn dataset() -> impl Strategy<Value = LabeledGraph> {
    (1usize..30).prop_flat_map(|n| {
        (
            proptest::collection::vec((0..n, 0..n), 0..60),
            proptest::collection::vec(proptest::option::of(0u32..6), n),
            proptest::collection::vec(0u8..4, n),
            proptest::option::of(proptest::collection::vec(-1e6f64..1e6, n * 3)),
        )
            .prop_map(move |(pairs, labels, tags, features)| {
                let mut edges = EdgeSet::new(n);
                for (a, b) in pairs {
                    if a != b {
                        edges.insert_pair(a, b).unwrap();
                    }
                }
                let splits = tags
                    .iter()
                    .zip(&labels)
                    .map(|(t, l)| match (t, l) {
                        (0, Some(_)) => Split::Train,
                        (1, _) => Split::Val,
                        (2, _) => Split::Test,
                        _ => Split::None,
                    })
                    .collect();
                let x = features.map(|v| Array2::from_shape_vec((n, 3), v).unwrap());
                LabeledGraph::new(edges, labels, x, splits).unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn save_then_load_is_identity(g in dataset()) {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&g, dir.path()).unwrap();
        let (back, report) = load_dataset(dir.path()).unwrap();
        prop_assert_eq!(report.nodes, g.node_count());
        prop_assert_eq!(back.edges(), g.edges());
        prop_assert_eq!(back.labels(), g.labels());
        prop_assert_eq!(back.features(), g.features());
        prop_assert_eq!(back.splits(), g.splits());
    }
}

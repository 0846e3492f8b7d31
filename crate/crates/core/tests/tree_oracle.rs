use epiops::policy::{fit_tree_features, leaf_stats, Node};
use epiops_oracles::gen::tree_data;
use epiops_oracles::tree::{brute_force, BruteTree};
use proptest::prelude::*;

fn names() -> Vec<String> {
    (0..4).map(|i| format!("f{i}")).collect()
}

fn to_brute(node: &Node) -> BruteTree {
    match node {
        Node::Leaf { .. } => BruteTree::Leaf,
        Node::Split {
            feature, left, right, ..
        } => BruteTree::Split(*feature, Box::new(to_brute(left)), Box::new(to_brute(right))),
    }
}

#[test]
fn matches_exhaustive_builder_on_random_data() {
    for seed in 0..50 {
        let d = tree_data(seed);
        let idx: Vec<usize> = (0..d.y.len()).collect();
        let tol = 1e-12 * leaf_stats(&d.y, &idx).1;
        let oracle = brute_force(&d.x, &d.y, d.depth, d.min_leaf, tol);
        let tree = fit_tree_features(&d.x, &d.y, d.depth, d.min_leaf, names());
        assert_eq!(to_brute(&tree.root), oracle.tree, "seed {seed}");
        let leaves = tree.root.leaves();
        assert_eq!(leaves.len(), oracle.leaves.len());
        for ((v, n), (ov, on)) in leaves.iter().zip(&oracle.leaves) {
            assert_eq!(n, on, "seed {seed}");
            assert!((v - ov).abs() <= 1e-12 * (1.0 + ov.abs()), "seed {seed}: {v} vs {ov}");
        }
        assert!((tree.sse(&d.x, &d.y) - oracle.sse).abs() <= 1e-9 * (1.0 + oracle.sse));
    }
}

fn arb_data() -> impl Strategy<Value = (Vec<Vec<bool>>, Vec<f64>)> {
    (1usize..60).prop_flat_map(|n| {
        (
            prop::collection::vec(prop::collection::vec(any::<bool>(), 4), n),
            prop::collection::vec(-5.0f64..5.0, n),
        )
    })
}

proptest! {
    #[test]
    fn deeper_trees_never_fit_worse((x, y) in arb_data(), min_leaf in 1usize..4) {
        let mut last = f64::INFINITY;
        for depth in 0..=4 {
            let sse = fit_tree_features(&x, &y, depth, min_leaf, names()).sse(&x, &y);
            prop_assert!(sse <= last + 1e-9, "depth {depth}: {sse} > {last}");
            last = sse;
        }
    }

    #[test]
    fn leaves_are_means_of_their_rows((x, y) in arb_data(), depth in 0usize..4) {
        let tree = fit_tree_features(&x, &y, depth, 1, names());
        let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0;
        for (value, n) in tree.root.leaves() {
            prop_assert!(value >= lo - 1e-12 && value <= hi + 1e-12);
            total += n;
        }
        prop_assert_eq!(total, y.len());
        for xi in &x {
            let p = tree.predict(xi);
            let same: Vec<f64> = x.iter().zip(&y).filter(|(xj, _)| tree.predict(xj) == p).map(|(_, v)| *v).collect();
            let mean = same.iter().sum::<f64>() / same.len() as f64;
            prop_assert!((p - mean).abs() <= 1e-9 * (1.0 + mean.abs()));
        }
    }
}

//! Regression trees by enumerating every tree up to a depth.

#[derive(Debug, Clone, PartialEq)]
pub enum BruteTree {
    Leaf,
    Split(usize, Box<BruteTree>, Box<BruteTree>),
}

/// A fitted candidate: the shape plus leaf `(mean, count)` in left-to-right
/// order, where a set feature goes right.
#[derive(Debug, Clone, PartialEq)]
pub struct BruteFit {
    pub tree: BruteTree,
    pub leaves: Vec<(f64, usize)>,
    pub sse: f64,
}

/// All shapes of depth at most `depth`, leaf first, then by feature at the
/// root, then by left subtree, then by right subtree.
pub fn shapes(depth: usize, n_features: usize) -> Vec<BruteTree> {
    let mut out = vec![BruteTree::Leaf];
    if depth == 0 {
        return out;
    }
    let sub = shapes(depth - 1, n_features);
    for f in 0..n_features {
        for l in &sub {
            for r in &sub {
                out.push(BruteTree::Split(f, Box::new(l.clone()), Box::new(r.clone())));
            }
        }
    }
    out
}

fn leaf_index(tree: &BruteTree, x: &[bool], offset: usize) -> usize {
    match tree {
        BruteTree::Leaf => offset,
        BruteTree::Split(f, l, r) => {
            if x[*f] {
                leaf_index(r, x, offset + count_leaves(l))
            } else {
                leaf_index(l, x, offset)
            }
        }
    }
}

fn count_leaves(tree: &BruteTree) -> usize {
    match tree {
        BruteTree::Leaf => 1,
        BruteTree::Split(_, l, r) => count_leaves(l) + count_leaves(r),
    }
}

/// Evaluates one shape; `None` if a split leaves some leaf with fewer than
/// `min_leaf` rows. The bare leaf is always allowed.
pub fn evaluate(tree: &BruteTree, x: &[Vec<bool>], y: &[f64], min_leaf: usize) -> Option<BruteFit> {
    let n_leaves = count_leaves(tree);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_leaves];
    for (i, xi) in x.iter().enumerate() {
        members[leaf_index(tree, xi, 0)].push(i);
    }
    if n_leaves > 1 && members.iter().any(|m| m.len() < min_leaf.max(1)) {
        return None;
    }
    let mut leaves = Vec::new();
    let mut sse = 0.0;
    for m in &members {
        let mean = m.iter().map(|&i| y[i]).sum::<f64>() / m.len() as f64;
        sse += m.iter().map(|&i| (y[i] - mean).powi(2)).sum::<f64>();
        leaves.push((mean, m.len()));
    }
    Some(BruteFit {
        tree: tree.clone(),
        leaves,
        sse,
    })
}

/// The best tree: least squared error, where errors within `tol` are equal
/// and then fewer leaves win; remaining ties go to the earliest shape in
/// [`shapes`] order.
pub fn brute_force(x: &[Vec<bool>], y: &[f64], depth: usize, min_leaf: usize, tol: f64) -> BruteFit {
    let n_features = x[0].len();
    let mut best: Option<BruteFit> = None;
    for shape in shapes(depth, n_features) {
        let Some(fit) = evaluate(&shape, x, y, min_leaf) else {
            continue;
        };
        let better = match &best {
            None => true,
            Some(b) => fit.sse < b.sse - tol || (fit.sse <= b.sse + tol && fit.leaves.len() < b.leaves.len()),
        };
        if better {
            best = Some(fit);
        }
    }
    best.expect("the single leaf is always feasible")
}

//! Regression trees on binary features.
//!
//! Trees are fitted by exhaustive search: among all trees of depth at most
//! `max_depth` whose leaves hold at least `min_leaf` samples, the one with
//! the smallest total squared error is returned. Costs within
//! [`TIE_TOLERANCE`] (relative to the squared error of the whole data set) count as
//! equal; equal costs prefer fewer leaves, then the lower feature index at
//! the highest node.

use serde::{Deserialize, Serialize};

/// Split threshold on a 0/1 feature: samples with the feature set go right.
pub const THRESHOLD: f64 = 0.5;

pub const TIE_TOLERANCE: f64 = 1e-12;

/// Absolute cost tolerance for a data set whose single-leaf error is `sse`.
pub fn tie_tolerance(sse: f64) -> f64 {
    TIE_TOLERANCE * sse.max(f64::MIN_POSITIVE)
}

/// `true` if `(cost, leaves)` beats `(best_cost, best_leaves)` under `tol`.
pub fn improves(cost: f64, leaves: usize, best_cost: f64, best_leaves: usize, tol: f64) -> bool {
    cost < best_cost - tol || (cost <= best_cost + tol && leaves < best_leaves)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
        n_samples: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaves(&self) -> Vec<(f64, usize)> {
        match self {
            Node::Leaf { value, n_samples } => vec![(*value, *n_samples)],
            Node::Split { left, right, .. } => {
                let mut v = left.leaves();
                v.extend(right.leaves());
                v
            }
        }
    }

    pub fn predict(&self, x: &[bool]) -> f64 {
        match self {
            Node::Leaf { value, .. } => *value,
            Node::Split {
                feature, left, right, ..
            } => {
                if x[*feature] {
                    right.predict(x)
                } else {
                    left.predict(x)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub root: Node,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub feature_names: Vec<String>,
}

impl RegressionTree {
    pub fn predict(&self, x: &[bool]) -> f64 {
        self.root.predict(x)
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    /// Total squared error on a data set.
    pub fn sse(&self, x: &[Vec<bool>], y: &[f64]) -> f64 {
        x.iter().zip(y).map(|(xi, yi)| (self.predict(xi) - yi).powi(2)).sum()
    }
}

/// Mean and squared error of `y` over `idx`, summed in index order.
pub fn leaf_stats(y: &[f64], idx: &[usize]) -> (f64, f64) {
    let mean = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
    let sse = idx.iter().map(|&i| (y[i] - mean).powi(2)).sum();
    (mean, sse)
}

/// Fits the optimal tree described in the module docs.
///
/// Panics if `x` is empty, rows have different lengths, or `min_leaf == 0`.
pub fn fit_tree_features(
    x: &[Vec<bool>],
    y: &[f64],
    max_depth: usize,
    min_leaf: usize,
    feature_names: Vec<String>,
) -> RegressionTree {
    assert!(!x.is_empty() && x.len() == y.len(), "need matching, nonempty data");
    assert!(min_leaf >= 1, "min_leaf must be positive");
    let n_features = x[0].len();
    assert!(x.iter().all(|r| r.len() == n_features), "ragged feature rows");
    let idx: Vec<usize> = (0..x.len()).collect();
    let tol = tie_tolerance(leaf_stats(y, &idx).1);
    let (root, _, _) = best(x, y, &idx, max_depth, min_leaf, n_features, tol);
    RegressionTree {
        root,
        max_depth,
        min_leaf,
        feature_names,
    }
}

fn best(
    x: &[Vec<bool>],
    y: &[f64],
    idx: &[usize],
    depth: usize,
    min_leaf: usize,
    n_features: usize,
    tol: f64,
) -> (Node, f64, usize) {
    let (mean, leaf_sse) = leaf_stats(y, idx);
    let mut out = (
        Node::Leaf {
            value: mean,
            n_samples: idx.len(),
        },
        leaf_sse,
        1,
    );
    if depth == 0 || leaf_sse <= tol {
        return out;
    }
    for f in 0..n_features {
        let (r, l): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x[i][f]);
        if l.len() < min_leaf || r.len() < min_leaf {
            continue;
        }
        let (ln, lc, ll) = best(x, y, &l, depth - 1, min_leaf, n_features, tol);
        let (rn, rc, rl) = best(x, y, &r, depth - 1, min_leaf, n_features, tol);
        let (cost, leaves) = (lc + rc, ll + rl);
        if improves(cost, leaves, out.1, out.2, tol) {
            out = (
                Node::Split {
                    feature: f,
                    threshold: THRESHOLD,
                    left: Box::new(ln),
                    right: Box::new(rn),
                },
                cost,
                leaves,
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names() -> Vec<String> {
        (0..4).map(|i| format!("f{i}")).collect()
    }

    #[test]
    fn depth_zero_is_the_mean() {
        let x = vec![vec![true, false, false, false], vec![false; 4], vec![true; 4]];
        let y = [0.3, 0.6, 1.2];
        let t = fit_tree_features(&x, &y, 0, 1, names());
        let Node::Leaf { value, n_samples } = t.root else {
            panic!()
        };
        assert!((value - 0.7).abs() < 1e-15 && n_samples == 3);
    }

    #[test]
    fn perfect_split() {
        let x: Vec<Vec<bool>> = (0..16).map(|i| (0..4).map(|b| i >> b & 1 == 1).collect()).collect();
        let y: Vec<f64> = x.iter().map(|r| if r[1] { 0.4 } else { 0.9 }).collect();
        let t = fit_tree_features(&x, &y, 3, 1, names());
        match &t.root {
            Node::Split {
                feature, left, right, ..
            } => {
                assert_eq!(*feature, 1);
                let [(lv, ln), (rv, rn)] = [left.leaves(), right.leaves()].map(|l| {
                    assert_eq!(l.len(), 1);
                    l[0]
                });
                assert!((lv - 0.9).abs() < 1e-12 && ln == 8);
                assert!((rv - 0.4).abs() < 1e-12 && rn == 8);
            }
            other => panic!("{other:?}"),
        }
        assert!((t.predict(&[false, true, false, false]) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn min_leaf_is_respected() {
        let x = vec![vec![true], vec![false], vec![false], vec![false]];
        let y = [10.0, 0.0, 0.0, 0.0];
        assert_eq!(fit_tree_features(&x, &y, 1, 2, vec!["a".into()]).depth(), 0);
        assert_eq!(fit_tree_features(&x, &y, 1, 1, vec!["a".into()]).depth(), 1);
    }

    #[test]
    fn ties_prefer_lowest_feature() {
        // Features 0 and 2 are identical copies.
        let x: Vec<Vec<bool>> = (0..8)
            .map(|i| vec![i % 2 == 0, i % 3 == 0, i % 2 == 0, false])
            .collect();
        let y: Vec<f64> = x.iter().map(|r| if r[0] { 1.0 } else { 0.5 }).collect();
        match fit_tree_features(&x, &y, 1, 1, names()).root {
            Node::Split { feature, .. } => assert_eq!(feature, 0),
            other => panic!("{other:?}"),
        }
    }
}

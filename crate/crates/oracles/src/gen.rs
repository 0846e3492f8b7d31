//! Seeded instance generators shared by the oracle tests and the acceptance run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::alloc::Micro;

const RHOS: [(u64, u64); 4] = [(0, 1), (1, 4), (1, 2), (1, 1)];
const EPS: [(u64, u64); 2] = [(0, 1), (1, 2)];

/// Symmetric integer matrix with a zero diagonal and entries in `lo..=hi`.
pub fn symmetric(rng: &mut impl Rng, n: usize, lo: u64, hi: u64) -> Vec<Vec<u64>> {
    let mut d = vec![vec![0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            d[i][j] = rng.random_range(lo..=hi);
            d[j][i] = d[i][j];
        }
    }
    d
}

/// At most three regions, three days and five units of supply each.
pub fn micro(rng: &mut impl Rng) -> Micro {
    let n = rng.random_range(1..=3);
    // Three regions over three days with pooling and federal stock is too
    // many plans to enumerate in a test; shorten those.
    let days = if n == 3 {
        rng.random_range(1..=2)
    } else {
        rng.random_range(1..=3)
    };
    let weights = [(1_000_000, 1_000, 1), (5, 1, 1), (1, 0, 3)];
    Micro {
        base: (0..n).map(|_| rng.random_range(0..=5)).collect(),
        dist: symmetric(rng, n, 1, 900),
        demand: (0..n)
            .map(|_| (0..days).map(|_| rng.random_range(0..=6)).collect())
            .collect(),
        federal: rng.random_range(0..=2),
        rho: RHOS[rng.random_range(0..4)],
        eps: EPS[rng.random_range(0..2)],
        lead: rng.random_range(0..=1),
        w: weights[rng.random_range(0..3)],
    }
}

/// The fixed set of `n` micro-instances drawn from `seed`.
pub fn micro_instances(seed: u64, n: usize) -> Vec<Micro> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| micro(&mut rng)).collect()
}

pub struct TreeData {
    pub x: Vec<Vec<bool>>,
    pub y: Vec<f64>,
    pub depth: usize,
    pub min_leaf: usize,
}

/// Up to 200 points on four skewed binary features; the response follows a
/// random depth-2 tree plus noise.
pub fn tree_data(seed: u64) -> TreeData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=200);
    let bias: Vec<f64> = (0..4).map(|_| rng.random_range(0.1..0.9)).collect();
    let x: Vec<Vec<bool>> = (0..n)
        .map(|_| bias.iter().map(|&p| rng.random_bool(p)).collect())
        .collect();
    let (a, b, c) = (rng.random_range(0..4), rng.random_range(0..4), rng.random_range(0..4));
    let levels: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..2.0)).collect();
    let noise = rng.random_range(0.0..0.3);
    let y = x
        .iter()
        .map(|r| {
            let leaf = if r[a] { 2 + r[c] as usize } else { r[b] as usize };
            levels[leaf] + noise * rng.random_range(-1.0..1.0)
        })
        .collect();
    TreeData {
        x,
        y,
        depth: rng.random_range(0..=2),
        min_leaf: rng.random_range(1..=5),
    }
}

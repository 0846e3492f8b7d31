//! Nelder-Mead simplex search on an unconstrained space.

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Converged when the spread of simplex values falls below
    /// `f_tol * (|f_best| + f_tol)` and its diameter below `x_tol`.
    pub f_tol: f64,
    pub x_tol: f64,
    /// Edge length of the initial axis-aligned simplex.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_evals: 4000,
            f_tol: 1e-10,
            x_tol: 1e-9,
            initial_step: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

const REFLECT: f64 = 1.0;

/// Minimizes `f` from `x0`. Non-finite values are treated as `+inf`, so a
/// failed evaluation simply loses every comparison.
pub fn minimize<F>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    assert!(n >= 1, "cannot minimize over an empty space");
    // Dimension-dependent coefficients (Gao and Han); they reduce to the
    // classic 2, 1/2, 1/2 in two dimensions.
    let dim = n as f64;
    let expand = 1.0 + 2.0 / dim;
    let contract = 0.75 - 0.5 / dim;
    let shrink = 1.0 - 1.0 / dim;
    let (expand, contract, shrink) = if n <= 2 {
        (2.0, 0.5, 0.5)
    } else {
        (expand, contract, shrink)
    };
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let v0 = eval(x0, &mut evals);
    simplex.push((x0.to_vec(), v0));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += opts.initial_step;
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }

    let mut converged = false;
    while evals < opts.max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if worst.is_finite() {
            let spread = worst - best;
            let diameter = simplex[1..]
                .iter()
                .map(|(x, _)| max_abs_diff(x, &simplex[0].0))
                .fold(0.0, f64::max);
            if spread <= opts.f_tol * (best.abs() + opts.f_tol) && diameter <= opts.x_tol {
                converged = true;
                break;
            }
        }

        let centroid = centroid(&simplex[..n]);
        let reflected = along(&centroid, &simplex[n].0, -REFLECT);
        let f_r = eval(&reflected, &mut evals);

        if f_r < simplex[0].1 {
            let expanded = along(&centroid, &simplex[n].0, -expand);
            let f_e = eval(&expanded, &mut evals);
            simplex[n] = if f_e < f_r { (expanded, f_e) } else { (reflected, f_r) };
            continue;
        }
        if f_r < simplex[n - 1].1 {
            simplex[n] = (reflected, f_r);
            continue;
        }

        let (contracted, f_c) = if f_r < simplex[n].1 {
            let x = along(&centroid, &reflected, contract);
            let v = eval(&x, &mut evals);
            (x, v)
        } else {
            let x = along(&centroid, &simplex[n].0, contract);
            let v = eval(&x, &mut evals);
            (x, v)
        };
        if f_c < simplex[n].1.min(f_r) {
            simplex[n] = (contracted, f_c);
            continue;
        }

        let anchor = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let x = along(&anchor, &vertex.0, shrink);
            let v = eval(&x, &mut evals);
            *vertex = (x, v);
        }
    }

    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Minimum {
        x,
        value,
        evals,
        converged,
    }
}

fn centroid(points: &[(Vec<f64>, f64)]) -> Vec<f64> {
    let n = points[0].0.len();
    let mut c = vec![0.0; n];
    for (x, _) in points {
        for (ci, xi) in c.iter_mut().zip(x) {
            *ci += xi;
        }
    }
    let k = points.len() as f64;
    c.iter_mut().for_each(|v| *v /= k);
    c
}

/// `from + t * (to - from)`.
fn along(from: &[f64], to: &[f64], t: f64) -> Vec<f64> {
    from.iter().zip(to).map(|(a, b)| a + t * (b - a)).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Radical-inverse (Halton) points in the open unit cube, using the first
/// `dim` primes. `skip` offsets the sequence index.
pub fn halton_points(count: usize, dim: usize, skip: u64) -> Vec<Vec<f64>> {
    const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    assert!(dim <= PRIMES.len());
    (0..count as u64)
        .map(|i| {
            let index = skip.wrapping_add(i + 1);
            PRIMES[..dim].iter().map(|&b| radical_inverse(index, b)).collect()
        })
        .collect()
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base) as f64 * inv;
        i /= base;
        inv /= base as f64;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_rosenbrock_minimum() {
        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let opts = NelderMeadOptions {
            max_evals: 20_000,
            ..Default::default()
        };
        let m = minimize(rosen, &[-1.2, 1.0], &opts);
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{m:?}");
    }

    #[test]
    fn quadratic_in_seven_dimensions() {
        let target = [0.3, -1.0, 2.0, 0.0, 0.7, -0.2, 1.5];
        let f = |x: &[f64]| {
            x.iter()
                .zip(&target)
                .enumerate()
                .map(|(i, (a, b))| (i + 1) as f64 * (a - b).powi(2))
                .sum::<f64>()
        };
        let m = minimize(f, &[0.0; 7], &NelderMeadOptions::default());
        for (a, b) in m.x.iter().zip(&target) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn infinite_regions_are_avoided() {
        let f = |x: &[f64]| {
            if x[0] < 0.0 {
                f64::NAN
            } else {
                (x[0] - 2.0).powi(2) + x[1] * x[1]
            }
        };
        let m = minimize(f, &[0.1, 0.5], &NelderMeadOptions::default());
        assert!((m.x[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn respects_evaluation_budget() {
        let m = minimize(
            |x: &[f64]| x[0].sin() + x[1].cos(),
            &[0.0, 0.0],
            &NelderMeadOptions {
                max_evals: 25,
                ..Default::default()
            },
        );
        assert!(m.evals <= 25 + 3);
        assert!(!m.converged);
    }

    #[test]
    fn halton_is_deterministic_and_in_unit_cube() {
        let a = halton_points(30, 7, 5);
        assert_eq!(a, halton_points(30, 7, 5));
        assert_ne!(a, halton_points(30, 7, 6));
        assert!(a.iter().flatten().all(|v| *v > 0.0 && *v < 1.0));
        assert_eq!(halton_points(3, 1, 0), vec![vec![0.5], vec![0.25], vec![0.75]]);
    }
}

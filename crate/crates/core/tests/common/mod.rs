//! Reference implementations used only by tests.
#![allow(dead_code)]

use aitv_core::spectral::ConvKernel;
use aitv_core::ImageGrid;

pub fn prox_objective(y: [f64; 2], x: [f64; 2], alpha: f64, beta: f64) -> f64 {
    y[0].abs() + y[1].abs() - alpha * y[0].hypot(y[1]) + ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)) / (2.0 * beta)
}

fn golden(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    for _ in 0..80 {
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - r * (b - a);
        d = a + r * (b - a);
    }
    let t = (a + b) / 2.0;
    (t, f(t))
}

/// Minimum of the l1 - a*l2 prox objective by brute force: a lattice scan,
/// shrinking pattern search around the best node, and golden-section
/// searches along both axes (the 1-sparse supports).
pub fn prox_oracle(x: [f64; 2], alpha: f64, beta: f64) -> f64 {
    let obj = |y: [f64; 2]| prox_objective(y, x, alpha, beta);
    let r = x[0].abs().max(x[1].abs()) + alpha * beta + 0.1;
    let n = 120;
    let h = 2.0 * r / n as f64;
    let mut best = ([0.0, 0.0], obj([0.0, 0.0]));
    for i in 0..=n {
        for j in 0..=n {
            let y = [-r + i as f64 * h, -r + j as f64 * h];
            let v = obj(y);
            if v < best.1 {
                best = (y, v);
            }
        }
    }
    let mut step = h;
    while step > 1e-10 {
        let mut moved = false;
        for (di, dj) in [
            (1.0, 0.0),
            (-1.0, 0.0),
            (0.0, 1.0),
            (0.0, -1.0),
            (1.0, 1.0),
            (1.0, -1.0),
            (-1.0, 1.0),
            (-1.0, -1.0),
        ] {
            let y = [best.0[0] + di * step, best.0[1] + dj * step];
            let v = obj(y);
            if v < best.1 {
                best = (y, v);
                moved = true;
            }
        }
        if !moved {
            step /= 2.0;
        }
    }
    let (_, ax) = golden(|t| obj([t, 0.0]), -r, r);
    let (_, ay) = golden(|t| obj([0.0, t]), -r, r);
    best.1.min(ax).min(ay)
}

/// Direct periodic convolution `Σ_{r,c} k(r,c) u(i - r + ar, j - c + ac)`.
pub fn naive_convolve(u: &ImageGrid, k: &ConvKernel) -> ImageGrid {
    let (m, n) = u.dims();
    let (ar, ac) = k.anchor();
    ImageGrid::from_fn(m, n, |i, j| {
        let mut s = 0.0;
        for r in 0..k.rows() {
            for c in 0..k.cols() {
                let ii = (i as isize - r as isize + ar as isize).rem_euclid(m as isize) as usize;
                let jj = (j as isize - c as isize + ac as isize).rem_euclid(n as isize) as usize;
                s += k.tap(r, c) * u.get(ii, jj);
            }
        }
        s
    })
}

/// Lowest within-cluster sum of squares over every split of the sorted
/// values into `k` contiguous groups.
pub fn kmeans_1d_exhaustive(values: &[f64], k: usize) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    fn cost(v: &[f64]) -> f64 {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum()
    }
    fn go(v: &[f64], k: usize) -> f64 {
        if k == 1 {
            return cost(v);
        }
        (1..=v.len() - (k - 1))
            .filter(|&s| v[s - 1] != v.get(s).copied().unwrap_or(f64::NAN))
            .map(|s| cost(&v[..s]) + go(&v[s..], k - 1))
            .fold(f64::INFINITY, f64::min)
    }
    go(&v, k)
}

pub fn random_grid(rows: usize, cols: usize, seed: u64) -> ImageGrid {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    ImageGrid::from_fn(rows, cols, |_, _| rng.random::<f64>())
}

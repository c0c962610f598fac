#![allow(dead_code)]

use atlas_lab::{ModelParams, Params, Permutation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// n = 3 Atlas model, g = 1, equal unit variances: λ = (2, 4) in every chamber.
pub fn atlas3() -> Params {
    ModelParams::new(vec![0.0; 3], vec![-1.0, -1.0, 2.0], vec![1.0; 3]).unwrap()
}

pub fn atlas(n: usize, g: f64, sigma2: f64) -> Params {
    ModelParams::new(vec![0.0; n], ModelParams::atlas_drifts(n, g), vec![sigma2.sqrt(); n]).unwrap()
}

/// n = 10, σ_k² = 1 + k, Atlas g = 1, γ_i = 1 − 2i/11.
pub fn occupation_example() -> Params {
    let n = 10;
    let sigma = (1..=n).map(|k| ((1 + k) as f64).sqrt()).collect();
    let gamma = (1..=n).map(|i| 1.0 - 2.0 * i as f64 / 11.0).collect();
    ModelParams::new(gamma, ModelParams::atlas_drifts(n, 1.0), sigma).unwrap()
}

/// Stable configuration with linearly growing variances and ρ = 0: name
/// drifts are arbitrary and rank drifts are chosen so every worst-case
/// partial sum is strictly negative.
pub fn random_config(n: usize, seed: u64) -> Params {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut sorted = gamma.clone();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut g = vec![0.0; n];
    for k in 0..n - 1 {
        g[k] = -(sorted[k] + rng.random_range(0.1..1.5));
    }
    g[n - 1] = -g[..n - 1].iter().sum::<f64>() - gamma.iter().sum::<f64>();
    let base = rng.random_range(0.2..2.0);
    let slope = rng.random_range(0.0..1.0);
    let sigma = (1..=n).map(|k| (base + slope * k as f64).sqrt()).collect();
    ModelParams::new(gamma, g, sigma).unwrap()
}

/// Unnormalized chamber weights by direct products, no logs.
pub fn direct_weights(p: &Params) -> Vec<(Permutation, f64)> {
    let n = p.n;
    let s2 = p.sigma2();
    let mut out = Vec::new();
    let mut names: Vec<usize> = (1..=n).collect();
    permute(&mut names, 0, &mut |v| {
        let mut w = 1.0;
        let mut s = 0.0;
        for k in 0..n - 1 {
            s += p.g_rank[k] + p.gamma_name[v[k] - 1];
            w /= -4.0 * s / (s2[k] + s2[k + 1]);
        }
        out.push((Permutation::from_rank_to_name(v).unwrap(), w));
    });
    out
}

/// Occupation matrix `[k][i]` from normalized direct weights.
pub fn direct_theta(p: &Params) -> Vec<Vec<f64>> {
    let n = p.n;
    let rows = direct_weights(p);
    let z: f64 = rows.iter().map(|r| r.1).sum();
    let mut theta = vec![vec![0.0; n]; n];
    for (perm, w) in &rows {
        for k in 1..=n {
            theta[k - 1][perm.name_at(k) - 1] += w / z;
        }
    }
    theta
}

fn permute(v: &mut Vec<usize>, at: usize, f: &mut dyn FnMut(&[usize])) {
    if at == v.len() {
        f(v);
        return;
    }
    for i in at..v.len() {
        v.swap(at, i);
        permute(v, at + 1, f);
        v.swap(at, i);
    }
}

/// Composite Simpson rule on `[a, b]` with `m` (even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    let m = m + m % 2;
    let h = (b - a) / m as f64;
    let mut s = f(a) + f(b);
    for j in 1..m {
        let w = if j % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + j as f64 * h);
    }
    s * h / 3.0
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration.
pub fn gauss_legendre(m: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(m);
    for i in 1..=m {
        let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Gauss–Legendre on `[a, b]` split into `pieces` panels.
pub fn gauss(f: impl Fn(f64) -> f64, a: f64, b: f64, pieces: usize, rule: &[(f64, f64)]) -> f64 {
    let h = (b - a) / pieces as f64;
    let mut s = 0.0;
    for p in 0..pieces {
        let lo = a + p as f64 * h;
        for &(x, w) in rule {
            s += w * f(lo + 0.5 * h * (x + 1.0));
        }
    }
    s * 0.5 * h
}

/// Kolmogorov–Smirnov distance of a sample against a CDF.
pub fn ks(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    atlas_lab::stats::ks_distance(sample, cdf)
}

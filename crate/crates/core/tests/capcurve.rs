mod common;

use atlas_lab::capcurve::{
    convexity_criterion, expected_curve_mc, expected_slope, log_weight_density, log_weights_from_gaps,
    mixed_exponential_curve, weight_density, Convexity,
};
use atlas_lab::invariant::chamber_weights;
use atlas_lab::sde::{ranked_log_weights, simulate};
use atlas_lab::{Error, ModelParams, Params, SimSettings};
use common::{atlas, atlas3, gauss, gauss_legendre, ks, random_config};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn linear_variance(n: usize) -> Params {
    ModelParams::new(vec![0.0; n], ModelParams::atlas_drifts(n, 1.0), (1..=n).map(|k| (0.5 * k as f64).sqrt()).collect()).unwrap()
}

/// Small-n pure hybrid market: only the bottom rank has a rank drift and
/// name 1 is favoured.
fn pure_hybrid(n: usize) -> Params {
    let c = 0.02;
    let mut g = vec![0.0; n];
    g[n - 1] = c * (2 * n - 1) as f64;
    let mut gamma = vec![-2.0 * c; n];
    gamma[0] = -c;
    ModelParams::new(gamma, g, vec![0.075f64.sqrt(); n]).unwrap()
}

fn two_names() -> Params {
    ModelParams::new(vec![0.2, -0.2], vec![-1.0, 1.0], vec![1.0, 1.0]).unwrap()
}

#[test]
fn atlas_three_slopes() {
    let m = chamber_weights(&atlas3()).unwrap();
    let s1 = expected_slope(&m, 1).unwrap();
    let s2 = expected_slope(&m, 2).unwrap();
    assert!((s1 + 0.5 / 2f64.ln()).abs() < 1e-12);
    assert!((s1 + 0.7213).abs() < 1e-4);
    assert!((s2 + 0.25 / 1.5f64.ln()).abs() < 1e-12);
    assert!((s2 + 0.6166).abs() < 1e-4);
    assert!(matches!(expected_slope(&m, 3), Err(Error::InvalidArgument(_))));
}

#[test]
fn pure_rank_slopes_use_the_common_rate() {
    let p = linear_variance(5);
    let m = chamber_weights(&p).unwrap();
    let s2 = p.sigma2();
    let mut partial = 0.0;
    for k in 1..5 {
        partial += p.g_rank[k - 1];
        let lambda = -4.0 * partial / (s2[k - 1] + s2[k]);
        let expect = -1.0 / lambda / (1.0 + 1.0 / k as f64).ln();
        assert!((expected_slope(&m, k).unwrap() - expect).abs() < 1e-12);
    }
}

#[test]
fn first_order_atlas_is_convex_with_quadratic_decay() {
    let r = convexity_criterion(&atlas(8, 1.0, 1.0)).unwrap();
    assert_eq!(r.rows.len(), 6);
    assert_eq!(r.overall(), Some(Convexity::Convex));
    assert!(r.rows.iter().all(|row| row.d_min > 0.0 && row.d_min == row.d_max));
    assert!(r.rows.windows(2).all(|w| w[1].d_min < w[0].d_min));
    for ratio in r.decay_ratios() {
        assert!((0.5..=2.0).contains(&ratio), "{ratio}");
    }
}

#[test]
fn linear_variances_are_concave() {
    let r = convexity_criterion(&linear_variance(8)).unwrap();
    assert_eq!(r.overall(), Some(Convexity::Concave));
    assert!(r.rows.iter().all(|row| row.d_max < 0.0));
}

#[test]
fn pure_hybrid_is_indeterminate() {
    let n = 7;
    let r = convexity_criterion(&pure_hybrid(n)).unwrap();
    for row in &r.rows {
        assert_eq!(row.class, Convexity::Indeterminate);
        // negative exactly on the chambers with name 1 at rank k+1
        assert!((row.negative_fraction - 1.0 / n as f64).abs() < 1e-12, "{}", row.negative_fraction);
        assert!((row.positive_fraction - (n - 1) as f64 / n as f64).abs() < 1e-12);
    }
}

#[test]
fn criterion_limits() {
    assert!(matches!(convexity_criterion(&atlas(12, 1.0, 1.0)), Err(Error::Capacity { .. })));
    let p = ModelParams::new(vec![0.0; 3], vec![-1.0, -1.0, 2.0], vec![1.0, 2f64.sqrt(), 5f64.sqrt()]).unwrap();
    assert!(matches!(convexity_criterion(&p), Err(Error::SkewSymmetry(_))));
}

#[test]
fn mc_curve_slopes_match_analytic_slopes() {
    let p = random_config(6, 40);
    let m = chamber_weights(&p).unwrap();
    let c = expected_curve_mc(&m, 200_000, 1).unwrap();
    for k in 1..6 {
        let d = (c.log_weight[k] - c.log_weight[k - 1]) / (1.0 + 1.0 / k as f64).ln();
        let se = (c.log_weight_se[k] + c.log_weight_se[k - 1]) / (1.0 + 1.0 / k as f64).ln();
        assert!((d - c.slope[k - 1]).abs() < 3.0 * se, "k={k}: {d} vs {}", c.slope[k - 1]);
    }
    assert!(c.log_weight.windows(2).all(|w| w[1] < w[0]));
    assert!(c.log_weight.iter().all(|x| *x < 0.0));
}

#[test]
fn two_name_curve_by_quadrature() {
    // symmetric n = 2: Ξ ~ Exp(2), E[log μ_(1)] = E[−log(1 + e^{−Ξ})]
    let m = chamber_weights(&atlas(2, 1.0, 1.0)).unwrap();
    let c = expected_curve_mc(&m, 400_000, 2).unwrap();
    let rule = gauss_legendre(20);
    let expect = gauss(|x| -(-x).exp().ln_1p() * 2.0 * (-2.0 * x).exp(), 0.0, 40.0, 40, &rule);
    assert!((c.log_weight[0] - expect).abs() < 1e-3, "{} vs {expect}", c.log_weight[0]);
}

#[test]
fn mc_curve_is_thread_independent() {
    let m = chamber_weights(&random_config(5, 41)).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| expected_curve_mc(&m, 20_000, 9).unwrap())
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(a.log_weight, b.log_weight);
    assert_eq!(a.second_difference, b.second_difference);
}

#[test]
fn mc_second_differences_agree_with_the_criterion() {
    for (p, class) in [(atlas(8, 1.0, 1.0), Convexity::Convex), (linear_variance(8), Convexity::Concave)] {
        let m = chamber_weights(&p).unwrap();
        let c = expected_curve_mc(&m, 100_000, 3).unwrap();
        for (k, (d, se)) in c.second_difference.iter().zip(&c.second_difference_se).enumerate() {
            assert_eq!(c.convexity[k], Some(class));
            match class {
                Convexity::Convex => assert!(*d >= -3.0 * se, "k={k}: {d}"),
                _ => assert!(*d <= 3.0 * se, "k={k}: {d}"),
            }
        }
    }
}

#[test]
fn two_name_weight_density_integrates_to_one() {
    let m = chamber_weights(&two_names()).unwrap();
    let rule = gauss_legendre(20);
    let one = gauss(|x| weight_density(&m, &[x]).unwrap(), 0.5, 1.0 - 1e-300, 200, &rule);
    assert!((one - 1.0).abs() < 1e-6, "{one}");
}

/// CDF of `m_1` at `n = 2` by cumulative quadrature of the weight density on
/// a fine grid, linearly interpolated.
fn weight_cdf(m: &atlas_lab::Measure) -> impl Fn(f64) -> f64 + '_ {
    let rule = gauss_legendre(8);
    let cells = 4000;
    let h = 0.5 / cells as f64;
    let mut cdf = vec![0.0; cells + 1];
    for j in 0..cells {
        let lo = 0.5 + j as f64 * h;
        cdf[j + 1] = cdf[j] + gauss(|x| weight_density(m, &[x]).unwrap(), lo, (lo + h).min(1.0 - 1e-16), 1, &rule);
    }
    move |x| {
        let u = ((x - 0.5) / h).clamp(0.0, cells as f64);
        let j = (u.floor() as usize).min(cells - 1);
        cdf[j] + (u - j as f64) * (cdf[j + 1] - cdf[j])
    }
}

#[test]
fn sampled_top_weight_matches_density() {
    let m = chamber_weights(&two_names()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let xs: Vec<f64> = (0..100_000)
        .map(|_| log_weights_from_gaps(&m.sample_stationary(&mut rng).unwrap().1)[0].exp())
        .collect();
    let d = ks(&xs, weight_cdf(&m));
    assert!(d < 0.02, "{d}");
}

#[test]
fn log_density_is_the_jacobian_transform() {
    for p in [two_names(), atlas3(), random_config(3, 5)] {
        let m = chamber_weights(&p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let (_, gaps) = m.sample_stationary(&mut rng).unwrap();
            let c = log_weights_from_gaps(&gaps);
            let c = &c[..p.n - 1];
            let w: Vec<f64> = c.iter().map(|x| x.exp()).collect();
            let jac: f64 = c.iter().sum::<f64>().exp();
            let a = log_weight_density(&m, c).unwrap();
            let b = weight_density(&m, &w).unwrap() * jac;
            assert!(a > 0.0 && b.is_finite());
            assert!((a - b).abs() <= 1e-10 * b, "{a} vs {b}");
        }
    }
}

#[test]
fn log_density_is_positive_on_valid_inputs() {
    let m = chamber_weights(&random_config(3, 7)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..1000 {
        let gaps: Vec<f64> = (0..2).map(|_| rng.random_range(0.001..3.0)).collect();
        let c = log_weights_from_gaps(&gaps);
        assert!(log_weight_density(&m, &c[..2]).unwrap() > 0.0);
    }
    assert!(matches!(log_weight_density(&m, &[-0.1, -0.05]), Err(Error::Domain(_))));
}

#[test]
fn simulated_top_log_weight_matches_density() {
    let m = chamber_weights(&atlas3()).unwrap();
    // marginal CDF of c_1 by nested quadrature over the valid c_2 range
    let rule = gauss_legendre(12);
    let lo = (1.0f64 / 3.0).ln();
    let cells = 600;
    let h = -lo / cells as f64;
    let marginal = |c1: f64| {
        let e1 = c1.exp();
        let a = ((1.0 - e1) / 2.0).ln();
        let b = c1.min((-e1).ln_1p());
        if b <= a {
            return 0.0;
        }
        gauss(|c2| log_weight_density(&m, &[c1, c2]).unwrap_or(0.0), a, b, 8, &rule)
    };
    let mut cdf = vec![0.0; cells + 1];
    for j in 0..cells {
        let x0 = lo + j as f64 * h;
        cdf[j + 1] = cdf[j] + gauss(marginal, x0, (x0 + h).min(-1e-12), 1, &rule);
    }
    assert!((cdf[cells] - 1.0).abs() < 1e-4, "{}", cdf[cells]);
    let f = |x: f64| {
        let u = ((x - lo) / h).clamp(0.0, cells as f64);
        let j = (u.floor() as usize).min(cells - 1);
        cdf[j] + (u - j as f64) * (cdf[j + 1] - cdf[j])
    };
    let out = simulate(&atlas3(), &SimSettings::new(2.1e4, 1e-3, 1, 13)).unwrap();
    let c1 = ranked_log_weights(&out).unwrap().pooled(0, 1e3);
    let d = ks(&c1, f);
    assert!(d < 0.03, "{d}");
}

#[test]
fn mixed_exponential_examples() {
    let x: Vec<f64> = (0..101).map(|j| j as f64 * 0.05).collect();
    let r = mixed_exponential_curve(&[0.7, 0.7, 0.7], &x).unwrap();
    assert!(r.convex);
    for w in r.log_phi.windows(3) {
        assert!((w[2] - 2.0 * w[1] + w[0]).abs() < 1e-12);
    }
    let r = mixed_exponential_curve(&[1.0, 2.0], &x).unwrap();
    for (xi, v) in x.iter().zip(&r.numerator) {
        assert!((v - (-3.0 * xi).exp()).abs() < 1e-15);
    }
    assert!(matches!(mixed_exponential_curve(&[1.0, 0.0], &x), Err(Error::Domain(_))));
    assert!(matches!(mixed_exponential_curve(&[1.0, -2.0], &x), Err(Error::Domain(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn mixed_exponential_second_differences(alphas in proptest::collection::vec(0.01f64..5.0, 1..12)) {
        let x: Vec<f64> = (0..201).map(|j| j as f64 * 0.025).collect();
        let r = mixed_exponential_curve(&alphas, &x).unwrap();
        prop_assert!(r.convex);
        prop_assert!(r.numerator.iter().all(|v| *v >= 0.0));
        for w in r.log_phi.windows(3) {
            prop_assert!(w[2] - 2.0 * w[1] + w[0] >= -1e-12);
        }
    }

    #[test]
    fn slopes_are_negative(n in 2usize..=6, seed in any::<u64>()) {
        let m = chamber_weights(&random_config(n, seed)).unwrap();
        for k in 1..n {
            prop_assert!(expected_slope(&m, k).unwrap() < 0.0);
        }
    }
}

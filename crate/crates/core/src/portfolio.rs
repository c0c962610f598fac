//! Portfolio constructions on simulated paths and their long-run rates.
//!
//! Wealth is handled in log space throughout. Constant-proportion wealth has
//! the closed form
//!
//! ```text
//! log V^π(t) = Σ_i π_i (A_ii(t)/2 + log X_i(t)/X_i(0)) − ½ πᵀ A(t) π,
//! ```
//!
//! which the target and universal portfolios reuse. Strategies that must be
//! compounded step by step (market, growth-optimal, compounded constant
//! portfolios) are accumulated by the stepper in [`crate::sde`].

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::invariant::InvariantMeasure;
use crate::linalg::solve;
use crate::model::ModelParams;
use crate::ranks::rank_permutation;
use crate::scalar::{LogSumExp, Real};
use crate::sde::{growth_optimal_weights, SimOutput, Tracked};

/// Tolerance on `Σ w_i = 1`.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Target and growth-optimal portfolios need `min_i A_ii(t)` above this.
pub const MIN_COVARIANCE: f64 = 1e-8;
/// Fewest simplex samples accepted by [`universal_portfolio`].
pub const MIN_SIMPLEX_SAMPLES: usize = 100;

/// Portfolio weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PortfolioWeights<T> {
    w: Vec<T>,
    nonnegative: bool,
}

impl<T: Real> PortfolioWeights<T> {
    pub fn new(w: Vec<T>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::Dimension("empty weight vector".into()));
        }
        let scale = w.iter().fold(T::one(), |m, x| m.max(x.abs()));
        let s: T = w.iter().copied().sum();
        if !((s - T::one()).abs() <= T::tolerance(WEIGHT_SUM_TOL, scale)) {
            return Err(Error::Domain(format!("weights sum to {s}, not 1")));
        }
        let nonnegative = w.iter().all(|x| *x >= T::zero());
        Ok(Self { w, nonnegative })
    }

    pub fn equal(n: usize) -> Self {
        let v = T::from_usize_lossy(n).recip();
        Self {
            w: vec![v; n],
            nonnegative: true,
        }
    }

    /// Everything in name `i` (1-based).
    pub fn unit(n: usize, i: usize) -> Self {
        let mut w = vec![T::zero(); n];
        w[i - 1] = T::one();
        Self { w, nonnegative: true }
    }

    pub fn as_slice(&self) -> &[T] {
        &self.w
    }

    pub fn n(&self) -> usize {
        self.w.len()
    }

    /// All weights nonnegative (the closed simplex).
    pub fn is_nonnegative(&self) -> bool {
        self.nonnegative
    }
}

/// Wealth on the stored grid of one path, kept as `log V` with `V(0) = 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WealthTrack<T> {
    pub times: Vec<f64>,
    pub log_value: Vec<T>,
}

impl<T: Real> WealthTrack<T> {
    pub fn value(&self, j: usize) -> T {
        self.log_value[j].exp()
    }

    pub fn terminal_log(&self) -> T {
        *self.log_value.last().expect("nonempty track")
    }

    /// `(1/T) log V(T)`.
    pub fn terminal_rate(&self) -> T {
        self.terminal_log() / T::lit(*self.times.last().expect("nonempty track"))
    }
}

/// Mean and standard error of the terminal rates across paths.
pub fn terminal_rate_stats<T: Real>(tracks: &[WealthTrack<T>]) -> (T, T) {
    let rates: Vec<T> = tracks.iter().map(WealthTrack::terminal_rate).collect();
    crate::stats::mean_se(&rates)
}

/// `log V^π` from the log price relatives `l_i = log X_i(t)/X_i(0)` and the
/// integrated covariance `A(t)` (row-major).
pub fn log_wealth_closed_form<T: Real>(pi: &[T], l: &[T], a: &[T]) -> T {
    let n = pi.len();
    let half = T::lit(0.5);
    let mut s = T::zero();
    for i in 0..n {
        s += pi[i] * (half * a[i * n + i] + l[i]);
        let row: T = (0..n).map(|j| a[i * n + j] * pi[j]).sum();
        s -= half * pi[i] * row;
    }
    s
}

fn log_relatives<'a, T: Real>(out: &'a SimOutput<T>, path: usize, j: usize) -> impl Iterator<Item = T> + 'a {
    let p = &out.paths[path];
    p.y(j).iter().zip(&out.params.y0).map(|(&y, &y0)| y - y0)
}

fn check_weights<T: Real>(pi: &PortfolioWeights<T>, n: usize) -> Result<()> {
    if pi.n() != n {
        return Err(Error::Dimension(format!("weights have length {}, expected {n}", pi.n())));
    }
    Ok(())
}

/// Closed-form constant-proportion wealth on every path.
pub fn wealth_constant<T: Real>(pi: &PortfolioWeights<T>, out: &SimOutput<T>) -> Result<Vec<WealthTrack<T>>> {
    check_weights(pi, out.n())?;
    Ok((0..out.paths.len())
        .map(|path| {
            let log_value = (0..out.times.len())
                .map(|j| {
                    let l: Vec<T> = log_relatives(out, path, j).collect();
                    log_wealth_closed_form(pi.as_slice(), &l, out.paths[path].a(j))
                })
                .collect();
            WealthTrack {
                times: out.times.clone(),
                log_value,
            }
        })
        .collect())
}

fn tracked_tracks<T: Real>(out: &SimOutput<T>, s: usize) -> Vec<WealthTrack<T>> {
    out.paths
        .iter()
        .map(|p| WealthTrack {
            times: out.times.clone(),
            log_value: p.tracked_log_wealth(s).to_vec(),
        })
        .collect()
}

/// Step-by-step compounded wealth of a constant portfolio, available when
/// the simulation tracked it.
pub fn wealth_constant_compounded<T: Real>(
    pi: &PortfolioWeights<T>,
    out: &SimOutput<T>,
) -> Result<Vec<WealthTrack<T>>> {
    check_weights(pi, out.n())?;
    let key = Tracked::Constant {
        weights: pi.as_slice().to_vec(),
    };
    let s = out
        .tracked_index(&key)
        .ok_or(Error::Unavailable("compounded wealth of an untracked portfolio"))?;
    Ok(tracked_tracks(out, s))
}

/// Market wealth `V^μ` from the compounded `μ`-weighted recursion, checked
/// at every step against `X(t)/X(0)` with relative tolerance `1e-10`.
pub fn market_wealth<T: Real>(out: &SimOutput<T>) -> Result<Vec<WealthTrack<T>>> {
    let tol = T::tolerance(1e-10, T::one()).as_f64();
    if let Some(p) = out.paths.iter().find(|p| p.market_identity_error > tol) {
        return Err(Error::Numerical(format!(
            "market wealth recursion drifted from X(t)/X(0) by {:e}",
            p.market_identity_error
        )));
    }
    Ok(out
        .paths
        .iter()
        .map(|p| WealthTrack {
            times: out.times.clone(),
            log_value: p.market_log_wealth().to_vec(),
        })
        .collect())
}

/// Excess growth rate `½(Σ π_i a_ii − πᵀ a π)`.
pub fn excess_growth<T: Real>(pi: &[T], a: &DMatrix<T>) -> T {
    let n = pi.len();
    let half = T::lit(0.5);
    let mut s = T::zero();
    for i in 0..n {
        s += pi[i] * a[(i, i)];
        for j in 0..n {
            s -= pi[i] * a[(i, j)] * pi[j];
        }
    }
    half * s
}

/// Long-run average covariance `𝔞^∞ = Σ_p θ_p s_p s_pᵀ`.
///
/// Exact measures sum over chambers; MCMC measures (always `ρ = 0`) use the
/// diagonal `Σ_k θ_{k,i} σ_k²` from the occupation matrix.
pub fn asymptotic_covariance<T: Real>(
    measure: &InvariantMeasure<T>,
    params: &ModelParams<T>,
) -> Result<DMatrix<T>> {
    let n = params.n;
    if measure.n() != n {
        return Err(Error::Dimension("measure and parameters differ in n".into()));
    }
    if !measure.is_exact() {
        let s2 = params.sigma2();
        let occ = measure.occupation().matrix();
        return Ok(DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                (0..n).map(|k| occ[(k, i)] * s2[k]).sum()
            } else {
                T::zero()
            }
        }));
    }
    let mut acc = DMatrix::zeros(n, n);
    for c in measure.chambers()? {
        let s = params.diffusion_matrix(&c.perm);
        acc += (&s * s.transpose()) * c.theta;
    }
    Ok(acc)
}

/// Maximize `½(Σ π_i d_i) + π·b − ½ πᵀ a π` over `Σ π = 1` by solving the
/// bordered system `[a 𝟙; 𝟙ᵀ 0][π; ν] = [b + d/2; 1]`.
fn constrained_max<T: Real>(a: &DMatrix<T>, b: &[T]) -> Result<Vec<T>> {
    let n = a.nrows();
    let half = T::lit(0.5);
    let k = DMatrix::from_fn(n + 1, n + 1, |i, j| match (i < n, j < n) {
        (true, true) => a[(i, j)],
        (false, false) => T::zero(),
        _ => T::one(),
    });
    let mut rhs: Vec<T> = (0..n).map(|i| b[i] + half * a[(i, i)]).collect();
    rhs.push(T::one());
    let mut x = solve(&k, &rhs)?;
    x.truncate(n);
    Ok(x)
}

/// Closed form for diagonal `𝔞^∞`:
/// `π̄_i = ½[1 − (n−2) / (𝔞_ii Σ_j 1/𝔞_jj)]`.
pub fn asymptotic_target_diagonal<T: Real>(a_diag: &[T]) -> Vec<T> {
    let n = T::from_usize_lossy(a_diag.len());
    let half = T::lit(0.5);
    let h: T = a_diag.iter().map(|a| a.recip()).sum();
    a_diag
        .iter()
        .map(|&a| half * (T::one() - (n - T::lit(2.0)) / (a * h)))
        .collect()
}

/// Constant portfolio maximizing the long-run growth rate
/// `γ + ½(Σ π_i 𝔞_ii − πᵀ 𝔞^∞ π)` over the affine simplex.
pub fn asymptotic_target<T: Real>(
    measure: &InvariantMeasure<T>,
    params: &ModelParams<T>,
) -> Result<PortfolioWeights<T>> {
    let a = asymptotic_covariance(measure, params)?;
    PortfolioWeights::new(constrained_max(&a, &vec![T::zero(); params.n])?)
}

/// Maximizer `Π*(t)` of `V^π(t)` over the affine simplex and `log V*(t)`,
/// with the benchmarks it must dominate.
#[derive(Debug, Clone, Serialize)]
pub struct TargetResult<T> {
    pub weights: PortfolioWeights<T>,
    pub log_value: T,
    /// `max_i log X_i(t)/X_i(0)`.
    pub log_best_stock: T,
    /// `(1/n) Σ log X_i(t)/X_i(0)`.
    pub log_geometric_mean: T,
    /// `log((1/n) Σ X_i(t)/X_i(0))`, buy-and-hold equal initial amounts.
    pub log_arithmetic_mean: T,
}

impl<T: Real> TargetResult<T> {
    pub fn dominates_benchmarks(&self) -> bool {
        self.log_value >= self.log_best_stock
            && self.log_value >= self.log_geometric_mean
            && self.log_value >= self.log_arithmetic_mean
    }
}

/// Closed form for diagonal `A`: `Π*_i = (b_i − ν)/A_ii` with
/// `b_i = A_ii/2 + log X_i(t)/X_i(0)` and `ν` fixing `Σ Π*_i = 1`.
pub fn target_diagonal<T: Real>(a_diag: &[T], l: &[T]) -> Vec<T> {
    let half = T::lit(0.5);
    let b: Vec<T> = a_diag.iter().zip(l).map(|(&a, &x)| half * a + x).collect();
    let h: T = a_diag.iter().map(|a| a.recip()).sum();
    let nu = (b.iter().zip(a_diag).map(|(&b, &a)| b / a).sum::<T>() - T::one()) / h;
    b.iter().zip(a_diag).map(|(&b, &a)| (b - nu) / a).collect()
}

/// Target portfolio at stored point `j` of path `path`.
pub fn target_portfolio<T: Real>(out: &SimOutput<T>, path: usize, j: usize) -> Result<TargetResult<T>> {
    let n = out.n();
    let rec = out
        .paths
        .get(path)
        .ok_or_else(|| Error::InvalidArgument(format!("no path {path}")))?;
    if j >= rec.points() {
        return Err(Error::InvalidArgument(format!("no stored point {j}")));
    }
    let a = rec.a_matrix(j);
    let min_diag = (0..n).map(|i| a[(i, i)]).fold(T::infinity(), T::min);
    if !(min_diag > T::lit(MIN_COVARIANCE)) {
        return Err(Error::InvalidArgument(format!(
            "integrated covariance too small at t = {} (min A_ii = {min_diag})",
            out.times[j]
        )));
    }
    let l: Vec<T> = log_relatives(out, path, j).collect();
    let w = constrained_max(&a, &l)?;
    let log_value = log_wealth_closed_form(&w, &l, rec.a(j));
    let nf = T::from_usize_lossy(n);
    Ok(TargetResult {
        weights: PortfolioWeights::new(w)?,
        log_value,
        log_best_stock: l.iter().copied().fold(T::neg_infinity(), T::max),
        log_geometric_mean: l.iter().copied().sum::<T>() / nf,
        log_arithmetic_mean: crate::scalar::log_sum_exp(&l) - nf.ln(),
    })
}

/// Uniform samples from the closed simplex: normalized standard
/// exponentials.
pub fn simplex_samples<T: Real>(n: usize, count: usize, seed: u64) -> Vec<Vec<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let e: Vec<f64> = (0..n).map(|_| Exp1.sample(&mut rng)).collect();
            let s: f64 = e.iter().sum();
            e.iter().map(|x| T::lit(x / s)).collect()
        })
        .collect()
}

/// Universal portfolio on every path.
#[derive(Debug, Clone)]
pub struct UniversalResult<T> {
    /// `Û(t)`, indexed `[path][point][name]`.
    pub weights: Vec<Vec<Vec<T>>>,
    pub tracks: Vec<WealthTrack<T>>,
}

/// Performance-weighted average of constant portfolios over the closed
/// simplex, by Monte Carlo with the same `mc` samples at every time and on
/// every path.
pub fn universal_portfolio<T: Real>(out: &SimOutput<T>, mc: usize, seed: u64) -> Result<UniversalResult<T>> {
    if mc < MIN_SIMPLEX_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "universal portfolio needs at least {MIN_SIMPLEX_SAMPLES} simplex samples, got {mc}"
        )));
    }
    let n = out.n();
    let samples = simplex_samples::<T>(n, mc, seed);
    let log_mc = T::from_usize_lossy(mc).ln();
    let per_path: Vec<(Vec<Vec<T>>, WealthTrack<T>)> = (0..out.paths.len())
        .into_par_iter()
        .map(|path| {
            let a_of = |j| out.paths[path].a(j);
            let mut weights = Vec::with_capacity(out.times.len());
            let mut log_value = Vec::with_capacity(out.times.len());
            for j in 0..out.times.len() {
                let l: Vec<T> = log_relatives(out, path, j).collect();
                let logs: Vec<T> = samples
                    .iter()
                    .map(|pi| log_wealth_closed_form(pi, &l, a_of(j)))
                    .collect();
                let mut acc = LogSumExp::default();
                logs.iter().for_each(|&x| acc.push(x));
                let lse = acc.value();
                let mut u = vec![T::zero(); n];
                for (pi, &lv) in samples.iter().zip(&logs) {
                    let w = (lv - lse).exp();
                    for i in 0..n {
                        u[i] += w * pi[i];
                    }
                }
                weights.push(u);
                log_value.push(lse - log_mc);
            }
            (
                weights,
                WealthTrack {
                    times: out.times.clone(),
                    log_value,
                },
            )
        })
        .collect();
    let (weights, tracks) = per_path.into_iter().unzip();
    Ok(UniversalResult { weights, tracks })
}

/// Growth-optimal portfolio on every path.
#[derive(Debug, Clone)]
pub struct GrowthOptimalResult<T> {
    /// `ϖ(t)` at the stored points, indexed `[path][point][name]`.
    pub weights: Vec<Vec<Vec<T>>>,
    /// Compounded wealth from the stepper.
    pub tracks: Vec<WealthTrack<T>>,
}

/// Growth-optimal weights `ϖ_i = ½ + (γ̃_i + γ̄)/a_ii` in chamber terms,
/// with wealth compounded by the stepper.
pub fn growth_optimal<T: Real>(params: &ModelParams<T>, out: &SimOutput<T>) -> Result<GrowthOptimalResult<T>> {
    if !params.rho_is_zero() {
        return Err(Error::Unsupported(
            "growth-optimal weights require zero name-based correlations".into(),
        ));
    }
    let s = out
        .tracked_index(&Tracked::GrowthOptimal)
        .ok_or(Error::Unavailable("growth-optimal wealth (not tracked by the simulation)"))?;
    let s2 = params.sigma2();
    let weights = out
        .paths
        .iter()
        .map(|p| {
            (0..p.points())
                .map(|j| {
                    let perm = rank_permutation(p.y(j))?;
                    let drift = params.drift_vector(&perm);
                    let a: Vec<T> = (1..=params.n).map(|i| s2[perm.rank_of(i) - 1]).collect();
                    Ok(growth_optimal_weights(&drift, &a))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GrowthOptimalResult {
        weights,
        tracks: tracked_tracks(out, s),
    })
}

/// Analytic long-run growth rates.
#[derive(Debug, Clone, Serialize)]
pub struct LongrunRates<T> {
    /// Common variance when all `σ_k` agree and `ρ = 0`.
    pub equal_variance: Option<T>,
    pub asymptotic_target: Vec<T>,
    /// `γ + ½(Σ π̄_i 𝔞_ii − π̄ᵀ 𝔞^∞ π̄)`.
    pub asymptotic_target_rate: T,
    /// `γ + σ²(1 − 1/n)/2` (equal variance only); also the universal rate.
    pub universal_rate: Option<T>,
    /// `γ + σ²(1 − 1/n)/2 + (Σ g_k² − Σ γ_i²)/(2σ²)` (equal variance only).
    pub growth_optimal_rate: Option<T>,
    pub sum_g2: T,
    pub sum_gamma2: T,
    /// `Σ g_k² > Σ γ_i²`.
    pub drift_inequality: bool,
}

pub fn longrun_rates<T: Real>(params: &ModelParams<T>, measure: &InvariantMeasure<T>) -> Result<LongrunRates<T>> {
    let a = asymptotic_covariance(measure, params)?;
    let target = asymptotic_target(measure, params)?;
    let rate = params.gamma + excess_growth(target.as_slice(), &a);
    let sum_g2: T = params.g_rank.iter().map(|g| *g * *g).sum();
    let sum_gamma2: T = params.gamma_name.iter().map(|g| *g * *g).sum();
    let s2 = params.sigma2();
    let equal_variance = (params.rho_is_zero() && s2.iter().all(|&v| v == s2[0])).then_some(s2[0]);
    let half = T::lit(0.5);
    let nf = T::from_usize_lossy(params.n);
    let universal_rate = equal_variance.map(|v| params.gamma + half * v * (T::one() - nf.recip()));
    let growth_optimal_rate = equal_variance
        .zip(universal_rate)
        .map(|(v, u)| u + (sum_g2 - sum_gamma2) / (T::lit(2.0) * v));
    Ok(LongrunRates {
        equal_variance,
        asymptotic_target: target.as_slice().to_vec(),
        asymptotic_target_rate: rate,
        universal_rate,
        growth_optimal_rate,
        sum_g2,
        sum_gamma2,
        drift_inequality: sum_g2 > sum_gamma2,
    })
}

/// Asymptotic activity of every name.
#[derive(Debug, Clone, Serialize)]
pub struct ActivityReport<T> {
    /// `(1/(n−2)) Σ_ℓ 1/𝔞_ℓℓ − 1/𝔞_ii`; positive means active. Empty for
    /// `n = 2`.
    pub margins: Vec<T>,
    pub active: Vec<bool>,
    /// Every name active, i.e. `π̄` in the open simplex.
    pub all_active: bool,
    /// `n = 2`: the condition is vacuous and `π̄ = (½, ½)`.
    pub vacuous: bool,
}

/// Sufficient condition `1/𝔞^∞_ii < (1/(n−2)) Σ_ℓ 1/𝔞^∞_ℓℓ` for name `i` to
/// keep a positive asymptotic-target weight.
pub fn activity_check<T: Real>(
    measure: &InvariantMeasure<T>,
    params: &ModelParams<T>,
) -> Result<ActivityReport<T>> {
    if !params.rho_is_zero() {
        return Err(Error::Unsupported(
            "activity check needs zero name-based correlations".into(),
        ));
    }
    let a = asymptotic_covariance(measure, params)?;
    let diag: Vec<T> = (0..params.n).map(|i| a[(i, i)]).collect();
    Ok(activity_from_diagonal(&diag))
}

pub fn activity_from_diagonal<T: Real>(diag: &[T]) -> ActivityReport<T> {
    let n = diag.len();
    if n < 3 {
        return ActivityReport {
            margins: Vec::new(),
            active: vec![true; n],
            all_active: true,
            vacuous: true,
        };
    }
    let h: T = diag.iter().map(|a| a.recip()).sum();
    let bound = h / T::from_usize_lossy(n - 2);
    let margins: Vec<T> = diag.iter().map(|a| bound - a.recip()).collect();
    let active: Vec<bool> = margins.iter().map(|m| *m > T::zero()).collect();
    ActivityReport {
        all_active: active.iter().all(|&x| x),
        margins,
        active,
        vacuous: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_must_sum_to_one() {
        assert!(PortfolioWeights::new(vec![0.5, 0.6]).is_err());
        let w = PortfolioWeights::new(vec![1.5, -0.5]).unwrap();
        assert!(!w.is_nonnegative());
        assert!(PortfolioWeights::<f64>::equal(4).is_nonnegative());
    }

    #[test]
    fn excess_growth_examples() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0f64, 2.0, 3.0]));
        assert!((excess_growth(&[1.0 / 3.0; 3], &a) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(excess_growth(&[0.0, 1.0, 0.0], &a), 0.0);
    }

    #[test]
    fn bordered_system_matches_diagonal_closed_forms() {
        let d = [0.7f64, 1.9, 3.1, 0.4];
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d.to_vec()));
        let general: Vec<f64> = constrained_max(&a, &[0.0; 4]).unwrap();
        for (x, y) in general.iter().zip(asymptotic_target_diagonal(&d)) {
            assert!((x - y).abs() < 1e-12);
        }
        let l = [0.3f64, -0.2, 0.05, 0.0];
        let general: Vec<f64> = constrained_max(&a, &l).unwrap();
        for (x, y) in general.iter().zip(target_diagonal(&d, &l)) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn activity_examples() {
        let r = activity_from_diagonal(&[1.0, 100.0, 100.0, 100.0]);
        assert_eq!(r.active, vec![false, true, true, true]);
        assert!(!r.all_active);
        let r = activity_from_diagonal(&[1.0, 1.0, 100.0]);
        assert!(r.all_active);
        assert!(activity_from_diagonal(&[1.0, 5.0]).vacuous);
    }
}

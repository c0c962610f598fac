//! Euler–Maruyama simulation of the hybrid Atlas system on the log scale.
//!
//! Each step resolves the chamber from the pre-step state, then advances
//!
//! ```text
//! Y ← Y + G_p dt + s_p √dt ξ,   ξ ~ N(0, I).
//! ```
//!
//! Alongside the state the stepper accumulates the occupation tallies, the
//! integrated covariance `A_ij(t) = Σ a_ij dt`, the time integral of the rank
//! gaps, and the log-wealth of every strategy that must be compounded step
//! by step (the market portfolio always, plus whatever the config asks for).
//!
//! Path `j` draws from the ChaCha8 stream `j` keyed by the master seed, and
//! partial results are merged in path order, so the output does not depend
//! on the number of worker threads.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::invariant::OccupationMatrix;
use crate::model::ModelParams;
use crate::ranks::{rank_permutation, resort_ranks};
use crate::scalar::{log_sum_exp, Real};
use crate::stats::mean_se;

/// A path is aborted once any `|Y_i|` exceeds this bound.
pub const OVERFLOW_BOUND: f64 = 1e6;
pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_STRIDE: usize = 100;

/// Strategy whose wealth is compounded inside the stepper.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Tracked<T> {
    /// Constant proportions `π`, rebalanced every step.
    Constant { weights: Vec<T> },
    /// Growth-optimal weights `ϖ(t)`, recomputed from the pre-step chamber.
    GrowthOptimal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig<T> {
    /// Horizon `T` in model time units.
    pub horizon: f64,
    pub dt: f64,
    pub paths: usize,
    pub seed: u64,
    /// Every `stride`-th step is stored (the last step always is).
    pub stride: usize,
    /// Store the thinned trajectory; otherwise only the end points are kept.
    pub store_paths: bool,
    #[serde(default = "Vec::new")]
    pub track: Vec<Tracked<T>>,
}

impl<T> Default for SimConfig<T> {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            dt: DEFAULT_DT,
            paths: 1,
            seed: 0,
            stride: DEFAULT_STRIDE,
            store_paths: true,
            track: Vec::new(),
        }
    }
}

impl<T: Real> SimConfig<T> {
    pub fn new(horizon: f64, dt: f64, paths: usize, seed: u64) -> Self {
        Self {
            horizon,
            dt,
            paths,
            seed,
            ..Self::default()
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn summaries_only(mut self) -> Self {
        self.store_paths = false;
        self
    }

    pub fn with_track(mut self, t: Tracked<T>) -> Self {
        self.track.push(t);
        self
    }

    /// Number of Euler steps, `round(T / dt)`.
    pub fn steps(&self) -> u64 {
        (self.horizon / self.dt).round() as u64
    }

    pub fn check(&self, n: usize) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon >= self.dt && self.horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "horizon {} must be finite and at least dt = {}",
                self.horizon, self.dt
            )));
        }
        if self.paths == 0 {
            return Err(Error::InvalidArgument("path count must be at least 1".into()));
        }
        if self.stride == 0 {
            return Err(Error::InvalidArgument("stride must be at least 1".into()));
        }
        for t in &self.track {
            if let Tracked::Constant { weights } = t {
                if weights.len() != n {
                    return Err(Error::Dimension(format!(
                        "tracked weights have length {}, expected {n}",
                        weights.len()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Everything recorded along one path.
#[derive(Debug, Clone)]
pub struct PathRecord<T> {
    n: usize,
    /// Stored states, `points × n`.
    y: Vec<T>,
    /// Stored integrated covariances, `points × n × n`.
    a: Vec<T>,
    /// Market log-wealth `log V^μ` at the stored points.
    market: Vec<T>,
    /// Log-wealth of each tracked strategy at the stored points.
    tracked: Vec<Vec<T>>,
    /// Step counts with name `i` at rank `k`, index `k * n + i`.
    pub tally: Vec<u64>,
    /// `∫ Ξ_k dt` over the whole path.
    pub gap_integral: Vec<T>,
    /// Largest per-step relative gap between the compounded market wealth
    /// and `X(t)/X(0)`.
    pub market_identity_error: f64,
}

impl<T: Real> PathRecord<T> {
    pub fn points(&self) -> usize {
        self.y.len() / self.n
    }

    /// State `Y` at stored point `j`.
    pub fn y(&self, j: usize) -> &[T] {
        &self.y[j * self.n..(j + 1) * self.n]
    }

    pub fn y_terminal(&self) -> &[T] {
        self.y(self.points() - 1)
    }

    /// Integrated covariance `A(t)` at stored point `j`, row-major.
    pub fn a(&self, j: usize) -> &[T] {
        let m = self.n * self.n;
        &self.a[j * m..(j + 1) * m]
    }

    pub fn a_matrix(&self, j: usize) -> DMatrix<T> {
        DMatrix::from_row_slice(self.n, self.n, self.a(j))
    }

    pub fn market_log_wealth(&self) -> &[T] {
        &self.market
    }

    /// Compounded log-wealth of tracked strategy `s` at the stored points.
    pub fn tracked_log_wealth(&self, s: usize) -> &[T] {
        &self.tracked[s]
    }
}

/// Result of [`simulate`]. Immutable once returned.
#[derive(Debug, Clone)]
pub struct SimOutput<T> {
    pub params: ModelParams<T>,
    pub config: SimConfig<T>,
    pub steps: u64,
    /// Times of the stored points, starting at 0 and ending at the horizon.
    pub times: Vec<f64>,
    pub paths: Vec<PathRecord<T>>,
    /// Tallies merged over paths, index `k * n + i`.
    pub tally: Vec<u64>,
}

impl<T: Real> SimOutput<T> {
    pub fn n(&self) -> usize {
        self.params.n
    }

    /// Simulated horizon `steps · dt`.
    pub fn horizon(&self) -> f64 {
        self.steps as f64 * self.config.dt
    }

    pub fn has_paths(&self) -> bool {
        self.config.store_paths
    }

    /// Index of `t` in the tracked strategy list, if tracked.
    pub fn tracked_index(&self, t: &Tracked<T>) -> Option<usize> {
        self.config.track.iter().position(|x| x == t)
    }
}

struct Coefficients<T> {
    n: usize,
    gamma: T,
    gamma_name: Vec<T>,
    g: Vec<T>,
    sigma: Vec<T>,
    /// Row-major `ρ`; empty when `ρ = 0`.
    rho: Vec<T>,
    /// Row-major `ρρᵀ`.
    rho_rho: Vec<T>,
}

impl<T: Real> Coefficients<T> {
    fn new(p: &ModelParams<T>) -> Self {
        let n = p.n;
        let (rho, rho_rho) = if p.rho_is_zero() {
            (Vec::new(), Vec::new())
        } else {
            let flat: Vec<T> = p.rho.iter().flatten().copied().collect();
            let mut rr = vec![T::zero(); n * n];
            for i in 0..n {
                for j in 0..n {
                    rr[i * n + j] = (0..n).map(|k| flat[i * n + k] * flat[j * n + k]).sum();
                }
            }
            (flat, rr)
        };
        Self {
            n,
            gamma: p.gamma,
            gamma_name: p.gamma_name.clone(),
            g: p.g_rank.clone(),
            sigma: p.sigma_rank.clone(),
            rho,
            rho_rho,
        }
    }
}

/// Growth-optimal weights `ϖ_i = ½ + (γ̃_i + γ̄)/a_ii` for diagonal `a`,
/// with the multiplier `γ̄` chosen so that the weights sum to one.
pub fn growth_optimal_weights<T: Real>(drift: &[T], a_diag: &[T]) -> Vec<T> {
    let n = drift.len();
    let half = T::lit(0.5);
    let inv_sum: T = a_diag.iter().map(|&a| a.recip()).sum();
    let drift_sum: T = drift.iter().zip(a_diag).map(|(&g, &a)| g / a).sum();
    let bar = (T::one() - half * T::from_usize_lossy(n) - drift_sum) / inv_sum;
    drift
        .iter()
        .zip(a_diag)
        .map(|(&g, &a)| half + (g + bar) / a)
        .collect()
}

fn stored_steps(steps: u64, stride: usize, store: bool) -> Vec<u64> {
    let mut v = Vec::new();
    if store {
        let mut j = 0;
        while j < steps {
            v.push(j);
            j += stride as u64;
        }
    } else {
        v.push(0);
    }
    v.push(steps);
    v
}

fn run_path<T: Real>(
    c: &Coefficients<T>,
    y0: &[T],
    cfg: &SimConfig<T>,
    steps: u64,
    path: usize,
) -> Result<PathRecord<T>> {
    let n = c.n;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(path as u64);
    let dt = T::lit(cfg.dt);
    let sqdt = dt.sqrt();
    let bound = T::lit(OVERFLOW_BOUND);
    let stride = if cfg.store_paths { cfg.stride as u64 } else { u64::MAX };

    let mut y = y0.to_vec();
    let mut order = rank_permutation(&y)?.rank_to_name();
    order.iter_mut().for_each(|i| *i -= 1);
    let mut rank = vec![0usize; n];
    let mut sig = vec![T::zero(); n];
    let mut drift = vec![T::zero(); n];
    let mut xi = vec![T::zero(); n];
    let mut ret = vec![T::zero(); n];
    let mut mu = vec![T::zero(); n];
    let mut a_acc = vec![T::zero(); n * n];
    let mut a_diag = vec![T::zero(); n];

    let mut rec = PathRecord {
        n,
        y: Vec::new(),
        a: Vec::new(),
        market: Vec::new(),
        tracked: vec![Vec::new(); cfg.track.len()],
        tally: vec![0; n * n],
        gap_integral: vec![T::zero(); n - 1],
        market_identity_error: 0.0,
    };
    let mut log_market = T::zero();
    let mut log_w = vec![T::zero(); cfg.track.len()];
    let lse0 = log_sum_exp(&y);
    let mut lse = lse0;

    let push = |rec: &mut PathRecord<T>, y: &[T], a: &[T], lm: T, lw: &[T]| {
        rec.y.extend_from_slice(y);
        rec.a.extend_from_slice(a);
        rec.market.push(lm);
        for (s, &w) in lw.iter().enumerate() {
            rec.tracked[s].push(w);
        }
    };
    push(&mut rec, &y, &a_acc, log_market, &log_w);

    for step in 0..steps {
        resort_ranks(&y, &mut order);
        for (k, &i) in order.iter().enumerate() {
            rank[i] = k;
            rec.tally[k * n + i] += 1;
        }
        for k in 0..n - 1 {
            rec.gap_integral[k] += (y[order[k]] - y[order[k + 1]]) * dt;
        }
        for i in 0..n {
            sig[i] = c.sigma[rank[i]];
            drift[i] = c.g[rank[i]] + c.gamma_name[i] + c.gamma;
            mu[i] = (y[i] - lse).exp();
        }

        if c.rho.is_empty() {
            for i in 0..n {
                a_diag[i] = sig[i] * sig[i];
                a_acc[i * n + i] += a_diag[i] * dt;
            }
        } else {
            // (diag(σ) + ρ)(diag(σ) + ρ)ᵀ
            for i in 0..n {
                for j in 0..n {
                    let mut a = c.rho_rho[i * n + j]
                        + sig[i] * c.rho[j * n + i]
                        + c.rho[i * n + j] * sig[j];
                    if i == j {
                        a += sig[i] * sig[i];
                        a_diag[i] = a;
                    }
                    a_acc[i * n + j] += a * dt;
                }
            }
        }

        for x in xi.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *x = T::lit(z);
        }
        for i in 0..n {
            let mut shock = sig[i] * xi[i];
            if !c.rho.is_empty() {
                shock += (0..n).map(|j| c.rho[i * n + j] * xi[j]).sum::<T>();
            }
            let dy = drift[i] * dt + sqdt * shock;
            ret[i] = dy.exp_m1();
            y[i] += dy;
            if !(y[i].abs() <= bound) {
                return Err(Error::AbortedPath { path, step: step + 1 });
            }
        }

        let growth: T = mu.iter().zip(&ret).map(|(&m, &r)| m * r).sum();
        log_market += growth.ln_1p();
        lse = log_sum_exp(&y);
        let gap = (log_market - (lse - lse0)).exp_m1().abs().as_f64();
        if gap > rec.market_identity_error {
            rec.market_identity_error = gap;
        }

        for (s, t) in cfg.track.iter().enumerate() {
            let r: T = match t {
                Tracked::Constant { weights } => {
                    weights.iter().zip(&ret).map(|(&w, &r)| w * r).sum()
                }
                Tracked::GrowthOptimal => growth_optimal_weights(&drift, &a_diag)
                    .iter()
                    .zip(&ret)
                    .map(|(&w, &r)| w * r)
                    .sum(),
            };
            // a leveraged strategy can be ruined in discrete time
            log_w[s] = if r > -T::one() {
                log_w[s] + r.ln_1p()
            } else {
                T::neg_infinity()
            };
        }

        let done = step + 1;
        if done % stride == 0 || done == steps {
            push(&mut rec, &y, &a_acc, log_market, &log_w);
        }
    }
    Ok(rec)
}

/// Simulate `cfg.paths` independent paths.
///
/// The parameters only need to be structurally valid: unstable models are a
/// legitimate experiment and typically end in [`Error::AbortedPath`].
pub fn simulate<T: Real>(params: &ModelParams<T>, cfg: &SimConfig<T>) -> Result<SimOutput<T>> {
    params.check_structure()?;
    cfg.check(params.n)?;
    if !params.rho_is_zero() && cfg.track.contains(&Tracked::GrowthOptimal) {
        return Err(Error::Unsupported(
            "growth-optimal weights require zero name-based correlations".into(),
        ));
    }
    let n = params.n;
    let steps = cfg.steps();
    let coeffs = Coefficients::new(params);
    let paths: Vec<PathRecord<T>> = (0..cfg.paths)
        .into_par_iter()
        .map(|p| run_path(&coeffs, &params.y0, cfg, steps, p))
        .collect::<Result<_>>()?;
    let mut tally = vec![0u64; n * n];
    for p in &paths {
        for (t, x) in tally.iter_mut().zip(&p.tally) {
            *t += x;
        }
    }
    let times = stored_steps(steps, cfg.stride, cfg.store_paths)
        .into_iter()
        .map(|j| j as f64 * cfg.dt)
        .collect();
    Ok(SimOutput {
        params: params.clone(),
        config: cfg.clone(),
        steps,
        times,
        paths,
        tally,
    })
}

/// `θ̂_{k,i} = tally(k,i) / steps`, pooled over paths. With two or more
/// paths the standard errors come from the spread of the per-path matrices.
pub fn occupation_estimate<T: Real>(out: &SimOutput<T>) -> OccupationMatrix<T> {
    let n = out.n();
    let total = T::from_u64(out.steps * out.paths.len() as u64).expect("step count");
    let theta = DMatrix::from_fn(n, n, |k, i| {
        T::from_u64(out.tally[k * n + i]).expect("tally") / total
    });
    let stderr = (out.paths.len() >= 2).then(|| {
        let steps = T::from_u64(out.steps).expect("step count");
        DMatrix::from_fn(n, n, |k, i| {
            let per: Vec<T> = out
                .paths
                .iter()
                .map(|p| T::from_u64(p.tally[k * n + i]).expect("tally") / steps)
                .collect();
            mean_se(&per).1
        })
    });
    OccupationMatrix::new(theta, stderr).expect("square tallies")
}

/// Per-path means and standard errors across paths.
#[derive(Debug, Clone, Serialize)]
pub struct Estimate<T> {
    pub mean: Vec<T>,
    /// NaN with a single path.
    pub se: Vec<T>,
}

fn estimate<T: Real>(rows: &[Vec<T>]) -> Estimate<T> {
    let m = rows.first().map_or(0, Vec::len);
    let (mean, se) = (0..m)
        .map(|k| mean_se(&rows.iter().map(|r| r[k]).collect::<Vec<_>>()))
        .unzip();
    Estimate { mean, se }
}

/// Long-run growth rates measured over `[0, T]`.
#[derive(Debug, Clone, Serialize)]
pub struct GrowthRates<T> {
    /// `(Y_i(T) − Y_i(0)) / T` per name.
    pub per_name: Estimate<T>,
    /// `log(X(T)/X(0)) / T` for the total capitalization.
    pub market: Estimate<T>,
    /// `(Z_k(T) − Z_k(0)) / T` per rank.
    pub ranked: Estimate<T>,
    /// `max_i |rate_i − market rate|` on the path means.
    pub coherence_gap: T,
}

pub fn growth_rates<T: Real>(out: &SimOutput<T>) -> GrowthRates<T> {
    let h = T::lit(out.horizon());
    let y0 = &out.params.y0;
    let mut z0 = y0.clone();
    z0.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    let mut names = Vec::new();
    let mut market = Vec::new();
    let mut ranked = Vec::new();
    for p in &out.paths {
        let yt = p.y_terminal();
        names.push(yt.iter().zip(y0).map(|(&a, &b)| (a - b) / h).collect());
        market.push(vec![(log_sum_exp(yt) - log_sum_exp(y0)) / h]);
        let mut zt = yt.to_vec();
        zt.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
        ranked.push(zt.iter().zip(&z0).map(|(&a, &b)| (a - b) / h).collect());
    }
    let per_name = estimate(&names);
    let market = estimate(&market);
    let coherence_gap = per_name
        .mean
        .iter()
        .fold(T::zero(), |m, &r| m.max((r - market.mean[0]).abs()));
    GrowthRates {
        per_name,
        market,
        ranked: estimate(&ranked),
        coherence_gap,
    }
}

/// Time averages `(1/T) ∫ Ξ_k dt` of the rank gaps.
pub fn mean_gaps<T: Real>(out: &SimOutput<T>) -> Estimate<T> {
    let h = T::lit(out.horizon());
    let rows: Vec<Vec<T>> = out
        .paths
        .iter()
        .map(|p| p.gap_integral.iter().map(|&x| x / h).collect())
        .collect();
    estimate(&rows)
}

/// Time average `A(T)/T` of the covariance rate, averaged over paths.
pub fn mean_covariance<T: Real>(out: &SimOutput<T>) -> DMatrix<T> {
    let n = out.n();
    let h = T::lit(out.horizon());
    let k = T::from_usize_lossy(out.paths.len());
    let mut m = DMatrix::zeros(n, n);
    for p in &out.paths {
        m += p.a_matrix(p.points() - 1) / h;
    }
    m / k
}

/// Values on the stored grid, indexed `[path][point][component]`.
#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    pub times: Vec<f64>,
    pub values: Vec<Vec<Vec<T>>>,
}

impl<T: Real> Trajectory<T> {
    /// Component `k` over all paths at stored times `t ≥ from`.
    pub fn pooled(&self, k: usize, from: f64) -> Vec<T> {
        let start = self.times.partition_point(|&t| t < from);
        self.values
            .iter()
            .flat_map(|path| path[start..].iter().map(move |v| v[k]))
            .collect()
    }
}

fn map_stored<T: Real>(
    out: &SimOutput<T>,
    what: &'static str,
    f: impl Fn(&[T]) -> Vec<T>,
) -> Result<Trajectory<T>> {
    if !out.has_paths() {
        return Err(Error::Unavailable(what));
    }
    let values = out
        .paths
        .iter()
        .map(|p| (0..p.points()).map(|j| f(p.y(j))).collect())
        .collect();
    Ok(Trajectory {
        times: out.times.clone(),
        values,
    })
}

/// Gaps `Ξ_k = Z_k − Z_{k+1}` at the stored points.
pub fn gap_trajectory<T: Real>(out: &SimOutput<T>) -> Result<Trajectory<T>> {
    map_stored(out, "gap trajectory (summaries-only run)", |y| {
        let mut z = y.to_vec();
        z.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
        z.windows(2).map(|w| w[0] - w[1]).collect()
    })
}

/// Ranked log-capitalizations `Z_k` at the stored points.
pub fn ranked_trajectory<T: Real>(out: &SimOutput<T>) -> Result<Trajectory<T>> {
    map_stored(out, "ranked trajectory (summaries-only run)", |y| {
        let mut z = y.to_vec();
        z.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
        z
    })
}

/// Log ranked market weights `log μ_(k)` at the stored points.
pub fn ranked_log_weights<T: Real>(out: &SimOutput<T>) -> Result<Trajectory<T>> {
    map_stored(out, "ranked weights (summaries-only run)", |y| {
        let l = log_sum_exp(y);
        let mut z: Vec<T> = y.iter().map(|&v| v - l).collect();
        z.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
        z
    })
}

/// Fractions of stored points with near-ties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CollisionStats {
    /// Some gap is below `eps`.
    pub pairwise: f64,
    /// Two adjacent gaps are below `eps` at once (three names within `2 eps`).
    pub triple: f64,
    pub points: usize,
}

pub fn collision_stats<T: Real>(out: &SimOutput<T>, eps: T) -> Result<CollisionStats> {
    let traj = gap_trajectory(out)?;
    let (mut pair, mut triple, mut total) = (0usize, 0usize, 0usize);
    for path in &traj.values {
        for g in path {
            total += 1;
            if g.iter().any(|&x| x < eps) {
                pair += 1;
            }
            if g.windows(2).any(|w| w[0] < eps && w[1] < eps) {
                triple += 1;
            }
        }
    }
    Ok(CollisionStats {
        pairwise: pair as f64 / total as f64,
        triple: triple as f64 / total as f64,
        points: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atlas3() -> ModelParams<f64> {
        ModelParams::new(vec![0.0; 3], vec![-1.0, -1.0, 2.0], vec![1.0; 3]).unwrap()
    }

    #[test]
    fn grid_includes_both_ends() {
        assert_eq!(stored_steps(10, 4, true), vec![0, 4, 8, 10]);
        assert_eq!(stored_steps(8, 4, true), vec![0, 4, 8]);
        assert_eq!(stored_steps(8, 4, false), vec![0, 8]);
    }

    #[test]
    fn config_checks() {
        let p = atlas3();
        for cfg in [
            SimConfig::<f64>::new(1.0, 0.0, 1, 0),
            SimConfig::new(1e-4, 1e-3, 1, 0),
            SimConfig::new(1.0, 1e-3, 0, 0),
            SimConfig::new(1.0, 1e-3, 1, 0).with_stride(0),
        ] {
            assert!(matches!(simulate(&p, &cfg), Err(Error::InvalidArgument(_))));
        }
    }

    #[test]
    fn growth_optimal_weights_sum_to_one() {
        let w = growth_optimal_weights(&[-1.0, -1.0, 2.0], &[1.0, 1.0, 1.0]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((w[2] - 7.0 / 3.0).abs() < 1e-15);
        let w = growth_optimal_weights(&[0.3, -0.1, 0.5, -0.7], &[1.0, 2.0, 3.0, 4.0]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn tallies_count_every_step() {
        let out = simulate(&atlas3(), &SimConfig::new(5.0, 1e-3, 2, 1)).unwrap();
        let n = 3;
        for p in &out.paths {
            for k in 0..n {
                let row: u64 = (0..n).map(|i| p.tally[k * n + i]).sum();
                let col: u64 = (0..n).map(|i| p.tally[i * n + k]).sum();
                assert_eq!(row, out.steps);
                assert_eq!(col, out.steps);
            }
        }
        assert!(occupation_estimate(&out).doubly_stochastic_error() < 1e-15);
    }

    #[test]
    fn covariance_is_nondecreasing() {
        let p = atlas3().with_rho(vec![vec![0.2, 0.1, 0.0], vec![0.0, 0.3, 0.0], vec![0.0, 0.0, 0.1]]).unwrap();
        let out = simulate(&p, &SimConfig::new(2.0, 1e-3, 1, 4).with_stride(10)).unwrap();
        let r = &out.paths[0];
        for j in 1..r.points() {
            for i in 0..3 {
                assert!(r.a(j)[i * 3 + i] >= r.a(j - 1)[i * 3 + i]);
            }
            let a = r.a_matrix(j);
            assert!((&a - a.transpose()).amax() < 1e-12);
        }
    }

    #[test]
    fn unstable_model_aborts() {
        let p = ModelParams::new(vec![0.0; 2], vec![2e5, -2e5], vec![1.0; 2]).unwrap();
        let r = simulate(&p, &SimConfig::new(20.0, 1e-2, 1, 0));
        assert!(matches!(r, Err(Error::AbortedPath { path: 0, .. })));
    }

    #[test]
    fn summaries_only_has_no_trajectory() {
        let out = simulate(&atlas3(), &SimConfig::new(1.0, 1e-3, 1, 0).summaries_only()).unwrap();
        assert_eq!(out.times, vec![0.0, 1.0]);
        assert!(matches!(gap_trajectory(&out), Err(Error::Unavailable(_))));
        assert!(collision_stats(&out, 0.1).is_err());
    }
}

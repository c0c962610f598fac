//! Capital distribution curves: expected slopes, the convexity criterion,
//! Monte Carlo expected curves from the stationary law, densities of the
//! ranked market weights and the mixed-exponential curve of pure hybrid
//! markets.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::invariant::{lambda_vector, InvariantMeasure};
use crate::model::ModelParams;
use crate::ranks::{permutation_chunks, PermutationIter, EXACT_ENUMERATION_CAP};
use crate::scalar::{log_sum_exp, LogSumExp, Real};
use crate::stats::mean_se;

/// Samples drawn per independent RNG stream in [`expected_curve_mc`].
pub const SAMPLE_BLOCK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Convexity {
    Convex,
    Concave,
    Indeterminate,
}

impl std::fmt::Display for Convexity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Convexity::Convex => "convex",
            Convexity::Concave => "concave",
            Convexity::Indeterminate => "indeterminate",
        })
    }
}

/// `log(1 + 1/k)`, the spacing of `log k`.
fn log_step<T: Real>(k: usize) -> T {
    T::from_usize_lossy(k).recip().ln_1p()
}

/// Expected slope of the curve between ranks `k` and `k+1`:
/// `−E[Ξ_k] / log(1 + 1/k)`.
pub fn expected_slope<T: Real>(measure: &InvariantMeasure<T>, k: usize) -> Result<T> {
    let n = measure.n();
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!("slope index {k} outside 1..={}", n - 1)));
    }
    Ok(-measure.mean_gaps()[k - 1] / log_step(k))
}

/// Sign summary of `d_{p,k}` over all chambers for one `k`.
#[derive(Debug, Clone, Serialize)]
pub struct CriterionRow<T> {
    pub k: usize,
    pub class: Convexity,
    pub d_min: T,
    pub d_max: T,
    /// Fractions of chambers with `d > 0` and `d < 0`.
    pub positive_fraction: f64,
    pub negative_fraction: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport<T> {
    pub n: usize,
    /// Rows for `k = 1..n-2`; row `k` covers `[log k, log(k+2)]`.
    pub rows: Vec<CriterionRow<T>>,
}

impl<T: Real> CriterionReport<T> {
    /// `Some(class)` when every row agrees.
    pub fn overall(&self) -> Option<Convexity> {
        let first = self.rows.first()?.class;
        self.rows.iter().all(|r| r.class == first).then_some(first)
    }

    /// `(d_k / d_{k+1}) / ((k+1)/k)²` for `k = 1..n-3`, using `d_min`.
    ///
    /// Values near one mean the differences decay like `k⁻²`.
    pub fn decay_ratios(&self) -> Vec<f64> {
        self.rows
            .windows(2)
            .map(|w| {
                let k = w[0].k as f64;
                let r = w[0].d_min.as_f64() / w[1].d_min.as_f64();
                r / ((k + 1.0) / k).powi(2)
            })
            .collect()
    }
}

#[derive(Clone)]
struct SignTally<T> {
    min: Vec<T>,
    max: Vec<T>,
    pos: Vec<u64>,
    neg: Vec<u64>,
}

impl<T: Real> SignTally<T> {
    fn new(m: usize) -> Self {
        Self {
            min: vec![T::infinity(); m],
            max: vec![T::neg_infinity(); m],
            pos: vec![0; m],
            neg: vec![0; m],
        }
    }

    fn merge(mut self, o: Self) -> Self {
        for k in 0..self.min.len() {
            self.min[k] = self.min[k].min(o.min[k]);
            self.max[k] = self.max[k].max(o.max[k]);
            self.pos[k] += o.pos[k];
            self.neg[k] += o.neg[k];
        }
        self
    }
}

/// `d_{p,k} = λ_{p,k+1} log(1 + 1/(k+1)) − λ_{p,k} log(1 + 1/k)` over all
/// chambers. The curve is convex (concave) on `[log k, log(k+2)]` when
/// `d_{p,k} ≥ 0` (`≤ 0`) for every `p`.
pub fn convexity_criterion<T: Real>(params: &ModelParams<T>) -> Result<CriterionReport<T>> {
    params.check_structure()?;
    params.require_skew_symmetry()?;
    let n = params.n;
    if n > EXACT_ENUMERATION_CAP {
        return Err(Error::Capacity {
            n,
            cap: EXACT_ENUMERATION_CAP,
        });
    }
    let m = n.saturating_sub(2);
    let steps: Vec<T> = (1..n).map(log_step).collect();
    let chunks = permutation_chunks(n, 1 << 15)?;
    let partials: Vec<SignTally<T>> = chunks
        .into_par_iter()
        .map(|range| {
            let mut t = SignTally::<T>::new(m);
            for p in PermutationIter::over_range(n, range) {
                let lam = lambda_vector(params, &p)?;
                for k in 0..m {
                    let d = lam[k + 1] * steps[k + 1] - lam[k] * steps[k];
                    t.min[k] = t.min[k].min(d);
                    t.max[k] = t.max[k].max(d);
                    if d > T::zero() {
                        t.pos[k] += 1;
                    } else if d < T::zero() {
                        t.neg[k] += 1;
                    }
                }
            }
            Ok(t)
        })
        .collect::<Result<_>>()?;
    let total = partials
        .into_iter()
        .reduce(SignTally::merge)
        .unwrap_or_else(|| SignTally::new(m));
    let count = crate::ranks::factorial(n).expect("capped n") as f64;
    let rows = (0..m)
        .map(|k| {
            let class = if total.min[k] >= T::zero() {
                Convexity::Convex
            } else if total.max[k] <= T::zero() {
                Convexity::Concave
            } else {
                Convexity::Indeterminate
            };
            CriterionRow {
                k: k + 1,
                class,
                d_min: total.min[k],
                d_max: total.max[k],
                positive_fraction: total.pos[k] as f64 / count,
                negative_fraction: total.neg[k] as f64 / count,
            }
        })
        .collect();
    Ok(CriterionReport { n, rows })
}

/// Monte Carlo expected capital distribution curve.
#[derive(Debug, Clone, Serialize)]
pub struct CurveReport<T> {
    pub samples: usize,
    pub seed: u64,
    /// `E[log μ_(k)]`, `k = 1..n`.
    pub log_weight: Vec<T>,
    pub log_weight_se: Vec<T>,
    /// Analytic expected slopes, `k = 1..n-1`.
    pub slope: Vec<T>,
    /// Second differences of `E[log μ_(k)]` against `log k` at the interior
    /// ranks `k = 2..n-1`, with standard errors.
    pub second_difference: Vec<T>,
    pub second_difference_se: Vec<T>,
    /// Criterion class at interior rank `k` (row `k-1`), when available.
    pub convexity: Vec<Option<Convexity>>,
}

/// Three-point second derivative on a nonuniform grid.
fn second_difference<T: Real>(x: [T; 3], f: [T; 3]) -> T {
    let two = T::lit(2.0);
    two * ((f[2] - f[1]) / (x[2] - x[1]) - (f[1] - f[0]) / (x[1] - x[0])) / (x[2] - x[0])
}

/// Ranked log-weights `log μ_(k)` of a gap vector: `Z_n = 0`,
/// `Z_k = Σ_{j≥k} Ξ_j`, `log μ_(k) = Z_k − log Σ_j e^{Z_j}`.
pub fn log_weights_from_gaps<T: Real>(gaps: &[T]) -> Vec<T> {
    let n = gaps.len() + 1;
    let mut z = vec![T::zero(); n];
    for k in (0..n - 1).rev() {
        z[k] = z[k + 1] + gaps[k];
    }
    let l = log_sum_exp(&z);
    z.iter().map(|&v| v - l).collect()
}

/// Draw `samples` stationary `(p, Ξ)` pairs and average the ranked
/// log-weights. Block `b` of [`SAMPLE_BLOCK`] draws uses ChaCha8 stream `b`,
/// so the result does not depend on the number of threads.
pub fn expected_curve_mc<T: Real>(
    measure: &InvariantMeasure<T>,
    samples: usize,
    seed: u64,
) -> Result<CurveReport<T>> {
    let n = measure.n();
    if samples < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples".into()));
    }
    let x: Vec<T> = (1..=n).map(|k| T::from_usize_lossy(k).ln()).collect();
    let blocks = samples.div_ceil(SAMPLE_BLOCK);
    let per_block: Vec<(Vec<Vec<T>>, Vec<Vec<T>>)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let len = SAMPLE_BLOCK.min(samples - b * SAMPLE_BLOCK);
            let mut lw = Vec::with_capacity(len);
            let mut sd = Vec::with_capacity(len);
            for _ in 0..len {
                let (_, gaps) = measure.sample_stationary(&mut rng)?;
                let w = log_weights_from_gaps(&gaps);
                let total = w.iter().map(|v| v.exp()).sum::<T>();
                if (total - T::one()).abs() > T::tolerance(1e-10, T::one()) {
                    return Err(Error::Numerical(format!("ranked weights sum to {total}")));
                }
                sd.push(
                    (1..n.saturating_sub(1))
                        .map(|k| second_difference([x[k - 1], x[k], x[k + 1]], [w[k - 1], w[k], w[k + 1]]))
                        .collect(),
                );
                lw.push(w);
            }
            Ok((lw, sd))
        })
        .collect::<Result<_>>()?;
    let (lw, sd): (Vec<_>, Vec<_>) = per_block.into_iter().unzip();
    let lw: Vec<Vec<T>> = lw.into_iter().flatten().collect();
    let sd: Vec<Vec<T>> = sd.into_iter().flatten().collect();
    let column = |rows: &[Vec<T>], k: usize| mean_se(&rows.iter().map(|r| r[k]).collect::<Vec<_>>());
    let (log_weight, log_weight_se) = (0..n).map(|k| column(&lw, k)).unzip();
    let (second, second_se) = (0..n.saturating_sub(2)).map(|k| column(&sd, k)).unzip();
    let slope = (1..n).map(|k| expected_slope(measure, k)).collect::<Result<_>>()?;
    let convexity = match convexity_criterion(measure.params()) {
        Ok(r) => r.rows.iter().map(|row| Some(row.class)).collect(),
        Err(_) => vec![None; n.saturating_sub(2)],
    };
    Ok(CurveReport {
        samples,
        seed,
        log_weight,
        log_weight_se,
        slope,
        second_difference: second,
        second_difference_se: second_se,
        convexity,
    })
}

/// Per-chamber `log θ_p + Σ_k log λ_{p,k}` and rates, for the densities.
fn chamber_terms<T: Real>(measure: &InvariantMeasure<T>) -> Result<Vec<(T, Vec<T>)>> {
    Ok(measure
        .chambers()?
        .map(|c| {
            let log_lam: T = c.lambda.iter().map(|l| l.ln()).sum();
            (c.theta.ln() + log_lam, c.lambda)
        })
        .collect())
}

fn check_len<T>(v: &[T], n: usize, what: &str) -> Result<()> {
    if v.len() != n - 1 {
        return Err(Error::Dimension(format!(
            "{what} has length {}, expected {}",
            v.len(),
            n - 1
        )));
    }
    Ok(())
}

/// Log of the stationary density of the ranked market weights
/// `(m_1, …, m_{n-1})`, `m_n = 1 − Σ m_j`:
///
/// ```text
/// Σ_p θ_p Π_k λ_{p,k} Π_{j=1}^{n} m_j^{−(λ_{p,j} − λ_{p,j−1} + 1)},  λ_{p,0} = λ_{p,n} = 0.
/// ```
pub fn log_weight_density_m<T: Real>(measure: &InvariantMeasure<T>, m: &[T]) -> Result<T> {
    let n = measure.n();
    check_len(m, n, "weight vector")?;
    let last = T::one() - m.iter().copied().sum::<T>();
    let mut full = m.to_vec();
    full.push(last);
    let ordered = full.windows(2).all(|w| w[0] >= w[1]);
    if !(full[0] < T::one() && last > T::zero() && ordered) {
        return Err(Error::Domain(
            "weights must satisfy 0 < m_n <= ... <= m_1 < 1".into(),
        ));
    }
    let logs: Vec<T> = full.iter().map(|x| x.ln()).collect();
    let mut acc = LogSumExp::default();
    for (base, lam) in chamber_terms(measure)? {
        let mut e = base;
        for j in 0..n {
            let hi = if j < n - 1 { lam[j] } else { T::zero() };
            let lo = if j > 0 { lam[j - 1] } else { T::zero() };
            e -= (hi - lo + T::one()) * logs[j];
        }
        acc.push(e);
    }
    Ok(acc.value())
}

/// Stationary density of the ranked market weights; see
/// [`log_weight_density_m`].
pub fn weight_density<T: Real>(measure: &InvariantMeasure<T>, m: &[T]) -> Result<T> {
    Ok(log_weight_density_m(measure, m)?.exp())
}

/// Stationary density of the log ranked weights `c_k = log μ_(k)`,
/// `k = 1..n-1`, with `c_n = log(1 − Σ e^{c_j})`:
///
/// ```text
/// Σ_p θ_p Π_k λ_{p,k} exp(−Σ_{j<n} (λ_{p,j} − λ_{p,j−1}) c_j + (λ_{p,n−1} − 1) c_n).
/// ```
///
/// This is the weight density times the Jacobian `Π_{j<n} e^{c_j}` of
/// `m = e^c`.
pub fn log_weight_density<T: Real>(measure: &InvariantMeasure<T>, c: &[T]) -> Result<T> {
    let n = measure.n();
    check_len(c, n, "log-weight vector")?;
    let s: T = c.iter().map(|x| x.exp()).sum();
    let ordered = c.windows(2).all(|w| w[0] >= w[1]);
    if !(c[0] < T::zero() && s < T::one() && ordered) {
        return Err(Error::Domain(
            "log-weights must be negative, nonincreasing and sum below one in weight".into(),
        ));
    }
    let cn = (-s).ln_1p();
    if cn > c[n - 2] {
        return Err(Error::Domain("implied c_n exceeds c_{n-1}".into()));
    }
    let mut acc = LogSumExp::default();
    for (base, lam) in chamber_terms(measure)? {
        let mut e = base;
        for j in 0..n - 1 {
            let lo = if j > 0 { lam[j - 1] } else { T::zero() };
            e -= (lam[j] - lo) * c[j];
        }
        e += (lam[n - 2] - T::one()) * cn;
        acc.push(e);
    }
    Ok(acc.value().exp())
}

/// `φ(x) = Σ_i e^{−α_i x}` and the convexity of `log φ`.
#[derive(Debug, Clone, Serialize)]
pub struct MixedExponential<T> {
    pub x: Vec<T>,
    pub log_phi: Vec<T>,
    /// `φ″φ − (φ′)² = ½ Σ_{i,j} (α_i − α_j)² e^{−(α_i+α_j)x}`.
    pub numerator: Vec<T>,
    /// `log φ` is convex: the numerator is a sum of squares.
    pub convex: bool,
}

pub fn mixed_exponential_curve<T: Real>(alphas: &[T], x_grid: &[T]) -> Result<MixedExponential<T>> {
    if alphas.is_empty() {
        return Err(Error::InvalidArgument("need at least one exponent".into()));
    }
    if let Some(a) = alphas.iter().find(|a| !(**a > T::zero() && a.is_finite())) {
        return Err(Error::Domain(format!("exponents must be positive, got {a}")));
    }
    let half = T::lit(0.5);
    let mut log_phi = Vec::with_capacity(x_grid.len());
    let mut numerator = Vec::with_capacity(x_grid.len());
    for &x in x_grid {
        let terms: Vec<T> = alphas.iter().map(|&a| -a * x).collect();
        log_phi.push(log_sum_exp(&terms));
        let mut s = T::zero();
        for &ai in alphas {
            for &aj in alphas {
                let d = ai - aj;
                s += d * d * (-(ai + aj) * x).exp();
            }
        }
        numerator.push(half * s);
    }
    let convex = numerator.iter().all(|v| *v >= T::zero());
    Ok(MixedExponential {
        x: x_grid.to_vec(),
        log_phi,
        numerator,
        convex,
    })
}

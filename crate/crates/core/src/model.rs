//! Model constants of the hybrid Atlas market and checks of the standing
//! assumptions.
//!
//! The log-capitalizations follow
//!
//! ```text
//! dY_i = (g_{rank(i)} + γ_i + γ) dt + Σ_j ρ_ij dW_j + σ_{rank(i)} dW_i,
//! ```
//!
//! so inside the chamber of permutation `p` the drift is constant and the
//! volatility matrix is `s_p = diag(σ_{p⁻¹(1)}, …, σ_{p⁻¹(n)}) + ρ`.

use nalgebra::DMatrix;
use num_rational::BigRational;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, SkewHypothesis};
use crate::linalg::min_symmetric_eigenvalue;
use crate::ranks::{enumerate_permutations, Permutation};
use crate::scalar::{Field, Real};

/// Tolerance on `Σ g_k + Σ γ_i = 0`.
pub const DRIFT_BALANCE_TOL: f64 = 1e-12;
/// Minimum eigenvalue of the symmetric part of `s_p` accepted as definite.
pub const DEFINITENESS_TOL: f64 = 1e-10;
/// Residual below which the skew-symmetry condition is taken to hold.
pub const SKEW_TOL: f64 = 1e-10;
/// Largest `n` for which definiteness is checked on every permutation.
pub const EXHAUSTIVE_DEFINITENESS_MAX_N: usize = 8;
/// Number of random permutations tried above that size.
pub const DEFINITENESS_SAMPLES: usize = 10_000;
/// Seed of the permutation sample used by the sampled definiteness check.
pub const DEFINITENESS_SEED: u64 = 0x000A_71A5;

/// All constants of one hybrid Atlas model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T> {
    pub n: usize,
    /// Common drift `γ`.
    pub gamma: T,
    /// Name-based drifts `γ_i`.
    pub gamma_name: Vec<T>,
    /// Rank-based drifts `g_k`, rank 1 is the largest stock.
    pub g_rank: Vec<T>,
    /// Rank-based volatilities `σ_k`.
    pub sigma_rank: Vec<T>,
    /// Name-based loadings `ρ_ij`, row-major.
    pub rho: Vec<Vec<T>>,
    /// Initial log-capitalizations.
    pub y0: Vec<T>,
}

impl<T: Field> ModelParams<T> {
    /// Parameters with `γ = 0`, `ρ = 0` and `y0 = 0`.
    pub fn new(gamma_name: Vec<T>, g_rank: Vec<T>, sigma_rank: Vec<T>) -> Result<Self> {
        let n = g_rank.len();
        let p = Self {
            n,
            gamma: T::zero(),
            gamma_name,
            g_rank,
            sigma_rank,
            rho: vec![vec![T::zero(); n]; n],
            y0: vec![T::zero(); n],
        };
        p.check_dimensions()?;
        Ok(p)
    }

    pub fn with_gamma(mut self, gamma: T) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_rho(mut self, rho: Vec<Vec<T>>) -> Result<Self> {
        self.rho = rho;
        self.check_dimensions()?;
        Ok(self)
    }

    pub fn with_y0(mut self, y0: Vec<T>) -> Result<Self> {
        self.y0 = y0;
        self.check_dimensions()?;
        Ok(self)
    }

    pub fn check_dimensions(&self) -> Result<()> {
        let n = self.n;
        if n < 2 {
            return Err(Error::Dimension(format!("need n >= 2, got {n}")));
        }
        let lens = [
            ("gamma_name", self.gamma_name.len()),
            ("g_rank", self.g_rank.len()),
            ("sigma_rank", self.sigma_rank.len()),
            ("rho rows", self.rho.len()),
            ("y0", self.y0.len()),
        ];
        for (name, len) in lens {
            if len != n {
                return Err(Error::Dimension(format!("{name} has length {len}, expected {n}")));
            }
        }
        if let Some((i, row)) = self.rho.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(Error::Dimension(format!(
                "rho row {} has length {}, expected {n}",
                i + 1,
                row.len()
            )));
        }
        Ok(())
    }

    pub fn rho_is_zero(&self) -> bool {
        self.rho.iter().flatten().all(|x| x.is_zero())
    }

    pub fn rho_is_diagonal(&self) -> bool {
        self.rho
            .iter()
            .enumerate()
            .all(|(i, r)| r.iter().enumerate().all(|(j, x)| i == j || x.is_zero()))
    }

    /// No name-based drifts: every `γ_i` is zero.
    pub fn is_pure_rank(&self) -> bool {
        self.gamma_name.iter().all(|x| x.is_zero())
    }

    /// Convert every constant with `f`.
    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> ModelParams<U> {
        ModelParams {
            n: self.n,
            gamma: f(&self.gamma),
            gamma_name: self.gamma_name.iter().map(&f).collect(),
            g_rank: self.g_rank.iter().map(&f).collect(),
            sigma_rank: self.sigma_rank.iter().map(&f).collect(),
            rho: self
                .rho
                .iter()
                .map(|r| r.iter().map(&f).collect())
                .collect(),
            y0: self.y0.iter().map(&f).collect(),
        }
    }

    /// Drift of every name inside the chamber `p`: `g_{p⁻¹(i)} + γ_i + γ`.
    pub fn drift_vector(&self, p: &Permutation) -> Vec<T> {
        p.ranks0()
            .iter()
            .zip(&self.gamma_name)
            .map(|(&k, gi)| self.g_rank[k].clone() + gi.clone() + self.gamma.clone())
            .collect()
    }

    /// Rank-based drifts of an Atlas configuration: `-g` on ranks `1..n-1`,
    /// `(n-1) g` on the last rank.
    pub fn atlas_drifts(n: usize, g: T) -> Vec<T> {
        let mut v = vec![-g.clone(); n];
        v[n - 1] = g * T::from_usize(n - 1).expect("small integer");
        v
    }
}

impl<T: Real> ModelParams<T> {
    /// Rank-based variances `σ_k²`.
    pub fn sigma2(&self) -> Vec<T> {
        self.sigma_rank.iter().map(|s| *s * *s).collect()
    }

    /// Dimensions and finiteness.
    pub fn check_structure(&self) -> Result<()> {
        self.check_dimensions()?;
        let finite = |v: &[T]| v.iter().all(|x| x.is_finite());
        if !self.gamma.is_finite() {
            return Err(Error::NonFinite("gamma"));
        }
        if !finite(&self.gamma_name) {
            return Err(Error::NonFinite("gamma_name"));
        }
        if !finite(&self.g_rank) {
            return Err(Error::NonFinite("g_rank"));
        }
        if !finite(&self.sigma_rank) {
            return Err(Error::NonFinite("sigma_rank"));
        }
        if !self.rho.iter().all(|r| finite(r)) {
            return Err(Error::NonFinite("rho"));
        }
        if !finite(&self.y0) {
            return Err(Error::NonFinite("y0"));
        }
        Ok(())
    }

    /// `Σ g_k + Σ γ_i`, zero for an admissible model.
    pub fn drift_balance(&self) -> T {
        self.g_rank.iter().copied().sum::<T>() + self.gamma_name.iter().copied().sum::<T>()
    }

    /// `max_ℓ (Σ_{k≤ℓ} g_k + sum of the ℓ largest γ_i)` over `ℓ = 1..n-1`.
    ///
    /// The worst permutation for every partial sum puts the largest name
    /// drifts on top, so this one number decides stability for all chambers.
    pub fn stability_margin(&self) -> T {
        let mut gam = self.gamma_name.clone();
        gam.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
        let mut partial = T::zero();
        let mut worst = T::neg_infinity();
        for l in 0..self.n - 1 {
            partial += self.g_rank[l] + gam[l];
            worst = worst.max(partial);
        }
        worst
    }

    /// `s_p = diag(σ_{p⁻¹(1)}, …, σ_{p⁻¹(n)}) + ρ`.
    pub fn diffusion_matrix(&self, p: &Permutation) -> DMatrix<T> {
        let ranks = p.ranks0();
        DMatrix::from_fn(self.n, self.n, |i, j| {
            let d = if i == j {
                self.sigma_rank[ranks[i]]
            } else {
                T::zero()
            };
            self.rho[i][j] + d
        })
    }

    /// Gap covariance `𝔄` for `ρ = 0`: tridiagonal with `σ_k² + σ_{k+1}²`
    /// on the diagonal and `-σ_{k+1}²` beside it.
    pub fn gap_covariance(&self) -> DMatrix<T> {
        let s2 = self.sigma2();
        let m = self.n - 1;
        DMatrix::from_fn(m, m, |k, l| {
            if k == l {
                s2[k] + s2[k + 1]
            } else if l == k + 1 {
                -s2[k + 1]
            } else if k == l + 1 {
                -s2[k]
            } else {
                T::zero()
            }
        })
    }

    /// Skew-symmetry check between the gap covariance and the reflection
    /// matrix: residual is the max-abs entry of `2𝔇 − 𝔥𝔇 − 𝔇𝔥 − 2𝔄`.
    pub fn is_skew_symmetric(&self) -> SkewCheck<T> {
        let a = self.gap_covariance();
        let m = self.n - 1;
        let half = T::lit(0.5);
        let two = T::lit(2.0);
        // 𝔥 = I − ℜ: zero diagonal, 1/2 next to it
        let h = DMatrix::from_fn(m, m, |k, l| {
            if k.abs_diff(l) == 1 {
                half
            } else {
                T::zero()
            }
        });
        let d = DMatrix::from_fn(m, m, |k, l| if k == l { a[(k, k)] } else { T::zero() });
        let resid = &d * two - &h * &d - &d * &h - &a * two;
        let residual = resid.iter().fold(T::zero(), |acc, x| acc.max(x.abs()));
        let failed = if !self.rho_is_zero() {
            Some(SkewHypothesis::NameCorrelation)
        } else if !(residual < T::tolerance(SKEW_TOL, a.iter().fold(T::zero(), |m, x| m.max(x.abs())))) {
            Some(SkewHypothesis::LinearVariance)
        } else {
            None
        };
        SkewCheck {
            holds: failed.is_none(),
            residual,
            failed,
        }
    }

    /// `Ok` when the product-form invariant law applies.
    pub fn require_skew_symmetry(&self) -> Result<()> {
        match self.is_skew_symmetric().failed {
            None => Ok(()),
            Some(h) => Err(Error::SkewSymmetry(h)),
        }
    }

    /// Check every standing assumption.
    pub fn validate(&self) -> Result<ValidationReport> {
        validate(self)
    }

    /// Exact copy in rational arithmetic (every finite float is a rational).
    pub fn to_rational(&self) -> Result<ModelParams<BigRational>> {
        self.check_structure()?;
        Ok(self.map(|x| BigRational::from_float(x.as_f64()).expect("finite")))
    }
}

/// Outcome of [`ModelParams::is_skew_symmetric`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SkewCheck<T> {
    pub holds: bool,
    pub residual: T,
    /// Hypothesis that failed, checked in the order name correlations, then
    /// linear variance growth.
    pub failed: Option<SkewHypothesis>,
}

/// How positive-definiteness of the `s_p` was established.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DefinitenessMode {
    /// `ρ` is diagonal, so the minimum over all chambers is `min σ + min ρ_ii`.
    ClosedForm,
    /// Every permutation was checked.
    Exhaustive,
    /// A seeded sample of permutations plus the extreme orderings.
    Sampled,
}

/// Result of [`validate`].
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub n: usize,
    /// `Σ g_k + Σ γ_i`.
    pub drift_balance: f64,
    pub drift_balance_ok: bool,
    /// Maximum over `ℓ` of the worst partial drift sum; negative when stable.
    pub stability_margin: f64,
    pub stability_ok: bool,
    pub min_sigma: f64,
    pub sigma_positive_ok: bool,
    /// Smallest eigenvalue of the symmetric part of `s_p` found.
    pub min_eigenvalue: f64,
    pub definiteness_ok: bool,
    pub definiteness_mode: DefinitenessMode,
    pub permutations_checked: u64,
    /// All four standing assumptions hold.
    pub stable: bool,
    /// Whether the product-form invariant law applies (informational).
    pub skew_symmetry: SkewCheck<f64>,
}

impl ValidationReport {
    /// Human-readable description of every failed condition.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.drift_balance_ok {
            out.push(format!(
                "drift balance: sum of g_k and gamma_i is {:e}, must vanish within {:e}",
                self.drift_balance, DRIFT_BALANCE_TOL
            ));
        }
        if !self.stability_ok {
            out.push(format!(
                "stability: worst partial drift sum is {:e}, must be negative",
                self.stability_margin
            ));
        }
        if !self.sigma_positive_ok {
            out.push(format!(
                "volatility: smallest sigma_k is {:e}, must be positive",
                self.min_sigma
            ));
        }
        if !self.definiteness_ok {
            out.push(format!(
                "definiteness: smallest eigenvalue of a chamber volatility matrix is {:e} ({:?})",
                self.min_eigenvalue, self.definiteness_mode
            ));
        }
        out
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mark = |ok: bool| if ok { "pass" } else { "FAIL" };
        writeln!(f, "n = {}", self.n)?;
        writeln!(
            f,
            "drift balance      {}  (sum = {:e})",
            mark(self.drift_balance_ok),
            self.drift_balance
        )?;
        writeln!(
            f,
            "stability          {}  (margin = {:e})",
            mark(self.stability_ok),
            self.stability_margin
        )?;
        writeln!(
            f,
            "positive sigma     {}  (min = {:e})",
            mark(self.sigma_positive_ok),
            self.min_sigma
        )?;
        writeln!(
            f,
            "definiteness       {}  (min eigenvalue = {:e}, {:?}, {} permutations)",
            mark(self.definiteness_ok),
            self.min_eigenvalue,
            self.definiteness_mode,
            self.permutations_checked
        )?;
        write!(
            f,
            "skew symmetry      {}  (residual = {:e})",
            if self.skew_symmetry.holds { "holds" } else { "fails" },
            self.skew_symmetry.residual
        )
    }
}

/// Check every standing assumption of the model.
pub fn validate<T: Real>(params: &ModelParams<T>) -> Result<ValidationReport> {
    params.check_structure()?;
    let balance = params.drift_balance().as_f64();
    let margin = params.stability_margin().as_f64();
    let min_sigma = params
        .sigma_rank
        .iter()
        .map(|s| s.as_f64())
        .fold(f64::INFINITY, f64::min);
    let (min_eig, mode, checked) = definiteness(params)?;
    let skew = params.is_skew_symmetric();
    let drift_scale = params
        .g_rank
        .iter()
        .chain(&params.gamma_name)
        .fold(T::zero(), |acc, x| acc + x.abs());
    let drift_balance_ok = balance.abs() <= T::tolerance(DRIFT_BALANCE_TOL, drift_scale).as_f64();
    let stability_ok = margin < 0.0;
    let sigma_positive_ok = min_sigma > 0.0;
    let definiteness_ok = min_eig > DEFINITENESS_TOL;
    Ok(ValidationReport {
        n: params.n,
        drift_balance: balance,
        drift_balance_ok,
        stability_margin: margin,
        stability_ok,
        min_sigma,
        sigma_positive_ok,
        min_eigenvalue: min_eig,
        definiteness_ok,
        definiteness_mode: mode,
        permutations_checked: checked,
        stable: drift_balance_ok && stability_ok && sigma_positive_ok && definiteness_ok,
        skew_symmetry: SkewCheck {
            holds: skew.holds,
            residual: skew.residual.as_f64(),
            failed: skew.failed,
        },
    })
}

fn definiteness<T: Real>(params: &ModelParams<T>) -> Result<(f64, DefinitenessMode, u64)> {
    let n = params.n;
    if params.rho_is_diagonal() {
        let min_s = params
            .sigma_rank
            .iter()
            .map(|s| s.as_f64())
            .fold(f64::INFINITY, f64::min);
        let min_r = (0..n)
            .map(|i| params.rho[i][i].as_f64())
            .fold(f64::INFINITY, f64::min);
        return Ok((min_s + min_r, DefinitenessMode::ClosedForm, 0));
    }
    let eig = |p: &Permutation| min_symmetric_eigenvalue(&params.diffusion_matrix(p));
    if n <= EXHAUSTIVE_DEFINITENESS_MAX_N {
        let mut min = f64::INFINITY;
        let mut count = 0;
        for p in enumerate_permutations(n)? {
            min = min.min(eig(&p));
            count += 1;
        }
        return Ok((min, DefinitenessMode::Exhaustive, count));
    }
    let mut min = f64::INFINITY;
    let mut count = 0;
    for p in extreme_orderings(params) {
        min = min.min(eig(&p));
        count += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(DEFINITENESS_SEED);
    let mut buf: Vec<usize> = (0..n).collect();
    for _ in 0..DEFINITENESS_SAMPLES {
        buf.shuffle(&mut rng);
        min = min.min(eig(&Permutation::from_zero_based_unchecked(&buf)));
        count += 1;
    }
    Ok((min, DefinitenessMode::Sampled, count))
}

/// Chambers pairing the sorted `σ_k` with the sorted `ρ_ii` in the four
/// monotone ways, plus the identity.
fn extreme_orderings<T: Real>(params: &ModelParams<T>) -> Vec<Permutation> {
    let n = params.n;
    let mut by_rho: Vec<usize> = (0..n).collect();
    by_rho.sort_by(|&a, &b| params.rho[a][a].partial_cmp(&params.rho[b][b]).expect("finite"));
    let mut by_sigma: Vec<usize> = (0..n).collect();
    by_sigma.sort_by(|&a, &b| {
        params.sigma_rank[a]
            .partial_cmp(&params.sigma_rank[b])
            .expect("finite")
    });
    let mut out = vec![Permutation::identity(n)];
    for rev_rho in [false, true] {
        for rev_sigma in [false, true] {
            let names: Vec<usize> = if rev_rho {
                by_rho.iter().rev().copied().collect()
            } else {
                by_rho.clone()
            };
            let ranks: Vec<usize> = if rev_sigma {
                by_sigma.iter().rev().copied().collect()
            } else {
                by_sigma.clone()
            };
            // name names[m] takes rank ranks[m]
            let mut rank_to_name = vec![0; n];
            for m in 0..n {
                rank_to_name[ranks[m]] = names[m];
            }
            out.push(Permutation::from_zero_based_unchecked(&rank_to_name));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn perm(v: &[usize]) -> Permutation {
        Permutation::from_rank_to_name(v).unwrap()
    }

    pub(crate) fn occupation_example() -> ModelParams<f64> {
        let n = 10;
        let sigma = (1..=n).map(|k| ((1 + k) as f64).sqrt()).collect();
        let g = ModelParams::atlas_drifts(n, 1.0);
        let gam = (1..=n).map(|i| 1.0 - 2.0 * i as f64 / (n as f64 + 1.0)).collect();
        ModelParams::new(gam, g, sigma).unwrap()
    }

    #[test]
    fn occupation_example_passes() {
        let r = occupation_example().validate().unwrap();
        assert!(r.stable, "{r}");
        assert!(r.stability_margin < 0.0);
        assert!(r.skew_symmetry.holds);
    }

    #[test]
    fn zero_drifts_are_not_stable() {
        let p = ModelParams::new(vec![0.0; 3], vec![0.0; 3], vec![1.0; 3]).unwrap();
        let r = p.validate().unwrap();
        assert!(!r.stability_ok);
        assert!(!r.stable);
        assert_eq!(r.stability_margin, 0.0);
    }

    #[test]
    fn atlas_three_margin() {
        let p = ModelParams::new(vec![0.0; 3], vec![-1.0, -1.0, 2.0], vec![1.0; 3]).unwrap();
        let r = p.validate().unwrap();
        assert!(r.stable);
        assert_eq!(r.stability_margin, -1.0);
    }

    #[test]
    fn unbalanced_drifts_fail() {
        let p = ModelParams::new(vec![0.0; 3], vec![-1.0, -1.0, 2.1], vec![1.0; 3]).unwrap();
        let r = p.validate().unwrap();
        assert!(!r.drift_balance_ok && !r.stable);
        assert!(r.failures()[0].starts_with("drift balance"));
    }

    #[test]
    fn structural_errors() {
        assert!(matches!(
            ModelParams::new(vec![0.0; 2], vec![0.0; 3], vec![1.0; 3]),
            Err(Error::Dimension(_))
        ));
        let p = ModelParams::new(vec![0.0; 3], vec![f64::NAN, 0.0, 0.0], vec![1.0; 3]).unwrap();
        assert!(matches!(p.validate(), Err(Error::NonFinite("g_rank"))));
    }

    #[test]
    fn diffusion_matrix_examples() {
        let p = ModelParams::new(vec![0.0; 3], vec![0.0; 3], vec![1.0, 2.0, 3.0]).unwrap();
        let m = p.diffusion_matrix(&Permutation::identity(3));
        assert_eq!(m, DMatrix::from_diagonal(&nalgebra::dvector![1.0, 2.0, 3.0]));
        let m = p.diffusion_matrix(&perm(&[3, 2, 1]));
        assert_eq!(m, DMatrix::from_diagonal(&nalgebra::dvector![3.0, 2.0, 1.0]));

        let mut rho = vec![vec![0.0; 3]; 3];
        rho[2][2] = 10.0;
        let q = ModelParams::new(vec![0.0; 3], vec![0.0; 3], vec![0.7; 3])
            .unwrap()
            .with_rho(rho)
            .unwrap();
        let m = q.diffusion_matrix(&perm(&[2, 3, 1]));
        assert_eq!(m[(0, 0)], 0.7);
        assert_eq!(m[(1, 1)], 0.7);
        assert_eq!(m[(2, 2)], 10.7);
    }

    #[test]
    fn drift_vector_examples() {
        let p = ModelParams::new(vec![0.0; 3], vec![-1.0, -1.0, 2.0], vec![1.0; 3]).unwrap();
        assert_eq!(p.drift_vector(&Permutation::identity(3)), vec![-1.0, -1.0, 2.0]);
        assert_eq!(p.drift_vector(&perm(&[3, 2, 1])), vec![2.0, -1.0, -1.0]);
        let q = occupation_example();
        let d = q.drift_vector(&Permutation::identity(10));
        assert!((d[0] + 2.0 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn skew_symmetry_examples() {
        let lin = ModelParams::new(vec![0.0; 4], vec![0.0; 4], (1..=4).map(|k| (2.0 * k as f64).sqrt()).collect())
            .unwrap();
        let s = lin.is_skew_symmetric();
        assert!(s.holds && s.residual < 1e-12);
        let eq = ModelParams::new(vec![0.0; 5], vec![0.0; 5], vec![1.3; 5]).unwrap();
        assert!(eq.is_skew_symmetric().holds);
        let bad = ModelParams::new(
            vec![0.0; 3],
            vec![0.0; 3],
            vec![1.0, 2f64.sqrt(), 5f64.sqrt()],
        )
        .unwrap();
        let s = bad.is_skew_symmetric();
        assert!(!s.holds);
        assert_eq!(s.failed, Some(SkewHypothesis::LinearVariance));
        // off-diagonal entry σ_2² − (σ_1² + σ_3²)/2 = 2 − 3
        assert!((s.residual - 1.0).abs() < 1e-12);
    }

    #[test]
    fn correlation_breaks_skew_symmetry() {
        let mut rho = vec![vec![0.0; 3]; 3];
        rho[0][1] = 0.1;
        let p = ModelParams::new(vec![0.0; 3], vec![-1.0, -1.0, 2.0], vec![1.0; 3])
            .unwrap()
            .with_rho(rho)
            .unwrap();
        let s = p.is_skew_symmetric();
        assert!(!s.holds);
        assert_eq!(s.failed, Some(SkewHypothesis::NameCorrelation));
        assert!(matches!(
            p.require_skew_symmetry(),
            Err(Error::SkewSymmetry(SkewHypothesis::NameCorrelation))
        ));
        let r = p.validate().unwrap();
        assert_eq!(r.definiteness_mode, DefinitenessMode::Exhaustive);
        assert_eq!(r.permutations_checked, 6);
        assert!(r.definiteness_ok);
    }

    #[test]
    fn sampled_definiteness_above_exhaustive_size() {
        let n = 9;
        let mut rho = vec![vec![0.0; n]; n];
        rho[0][1] = 0.05;
        rho[1][0] = 0.05;
        let p = ModelParams::new(vec![0.0; n], ModelParams::atlas_drifts(n, 1.0), vec![1.0; n])
            .unwrap()
            .with_rho(rho)
            .unwrap();
        let r = p.validate().unwrap();
        assert_eq!(r.definiteness_mode, DefinitenessMode::Sampled);
        assert_eq!(r.permutations_checked, DEFINITENESS_SAMPLES as u64 + 5);
        assert!(r.definiteness_ok);
    }

    #[test]
    fn indefinite_volatility_is_caught() {
        let mut rho = vec![vec![0.0; 3]; 3];
        rho[0][0] = -2.0;
        let p = ModelParams::new(vec![0.0; 3], vec![-1.0, -1.0, 2.0], vec![1.0; 3])
            .unwrap()
            .with_rho(rho)
            .unwrap();
        let r = p.validate().unwrap();
        assert!(!r.definiteness_ok && !r.stable);
        assert!((r.min_eigenvalue + 1.0).abs() < 1e-12);
    }

    #[test]
    fn f32_params_validate() {
        let p = ModelParams::<f32>::new(vec![0.0; 3], vec![-1.0, -1.0, 2.0], vec![1.0; 3]).unwrap();
        assert!(p.validate().unwrap().stable);
    }

    proptest! {
        #[test]
        fn linear_variances_are_skew_symmetric(
            n in 2usize..=8,
            base in 0.01f64..5.0,
            slope in 0.0f64..3.0,
        ) {
            let sigma = (1..=n).map(|k| (base + slope * k as f64).sqrt()).collect();
            let p = ModelParams::new(vec![0.0; n], vec![0.0; n], sigma).unwrap();
            let s = p.is_skew_symmetric();
            prop_assert!(s.holds, "residual {}", s.residual);
        }

        #[test]
        fn diffusion_diagonal_matches_ranks(
            seed in any::<u64>(),
            n in 2usize..7,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut names: Vec<usize> = (0..n).collect();
            names.shuffle(&mut rng);
            let p = Permutation::from_zero_based_unchecked(&names);
            let sigma: Vec<f64> = (0..n).map(|k| 1.0 + k as f64).collect();
            let rho: Vec<Vec<f64>> = (0..n)
                .map(|i| (0..n).map(|j| 0.01 * (i * n + j) as f64).collect())
                .collect();
            let m = ModelParams::new(vec![0.0; n], vec![0.0; n], sigma.clone())
                .unwrap()
                .with_rho(rho.clone())
                .unwrap()
                .diffusion_matrix(&p);
            for i in 1..=n {
                prop_assert_eq!(m[(i - 1, i - 1)], sigma[p.rank_of(i) - 1] + rho[i - 1][i - 1]);
            }
        }
    }
}

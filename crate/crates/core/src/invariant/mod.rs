//! Stationary law of the gap-and-permutation process under skew symmetry.
//!
//! In chamber `p` the gaps are independent exponentials with rates
//!
//! ```text
//! λ_{p,k} = −4 (Σ_{ℓ≤k} g_ℓ + γ_{p(ℓ)}) / (σ_k² + σ_{k+1}²),
//! ```
//!
//! and the chamber itself has probability `θ_p ∝ Π_k λ_{p,k}⁻¹`. The
//! occupation matrix aggregates `θ_{k,i} = Σ_{p(k)=i} θ_p`.

mod exact;
mod field;
mod mcmc;

use std::sync::OnceLock;

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Exp1;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::ranks::{enumerate_permutations_with_cap, Permutation, EXACT_ENUMERATION_CAP};
use crate::scalar::{Field, LogSumExp, Real};

pub use field::{equilibrium_residual_field, exact_occupation_field, FieldOccupation};
pub use mcmc::{chamber_weights_mcmc, chamber_weights_mcmc_with, default_burn_in, McmcConfig};

/// Largest `n` for which [`InvariantMeasure::sample_stationary`] tabulates
/// all chamber probabilities.
pub const SAMPLER_CAP: usize = 10;

/// Rates `λ_{p,k}` from rank drifts, name drifts and rank variances.
pub fn lambda_from_parts<F: Field>(
    g_rank: &[F],
    gamma_name: &[F],
    sigma2: &[F],
    p: &Permutation,
) -> Result<Vec<F>> {
    let n = g_rank.len();
    let four = F::from_u8(4).expect("small integer");
    let mut partial = F::zero();
    let mut out = Vec::with_capacity(n.saturating_sub(1));
    for (k, &name) in p.names0().iter().enumerate().take(n - 1) {
        partial = partial + g_rank[k].clone() + gamma_name[name].clone();
        if partial >= F::zero() {
            return Err(Error::Stability(format!(
                "partial drift sum through rank {} is {:?} for chamber {:?}; rate not positive",
                k + 1,
                partial,
                p
            )));
        }
        let denom = sigma2[k].clone() + sigma2[k + 1].clone();
        out.push(-(four.clone() * partial.clone()) / denom);
    }
    Ok(out)
}

/// Exponential rates `λ_p` of the gaps inside chamber `p`.
pub fn lambda_vector<F: Field>(params: &ModelParams<F>, p: &Permutation) -> Result<Vec<F>> {
    if p.n() != params.n {
        return Err(Error::Dimension(format!(
            "permutation of {} names for a model with n = {}",
            p.n(),
            params.n
        )));
    }
    let sigma2: Vec<F> = params
        .sigma_rank
        .iter()
        .map(|s| s.clone() * s.clone())
        .collect();
    lambda_from_parts(&params.g_rank, &params.gamma_name, &sigma2, p)
}

/// How a measure was obtained.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum MeasureMode {
    Exact {
        permutations: u64,
    },
    Mcmc {
        iters: u64,
        burn_in: u64,
        seed: u64,
        acceptance_rate: f64,
    },
}

/// Long-run fraction `θ_{k,i}` of time that name `i` holds rank `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationMatrix<T: Real> {
    theta: DMatrix<T>,
    stderr: Option<DMatrix<T>>,
}

impl<T: Real> OccupationMatrix<T> {
    pub fn new(theta: DMatrix<T>, stderr: Option<DMatrix<T>>) -> Result<Self> {
        if !theta.is_square() {
            return Err(Error::Dimension("occupation matrix must be square".into()));
        }
        if let Some(se) = &stderr {
            if se.shape() != theta.shape() {
                return Err(Error::Dimension("stderr shape differs from theta".into()));
            }
        }
        Ok(Self { theta, stderr })
    }

    pub fn n(&self) -> usize {
        self.theta.nrows()
    }

    /// `θ_{k,i}` with 1-based rank `k` and name `i`.
    pub fn get(&self, rank: usize, name: usize) -> T {
        self.theta[(rank - 1, name - 1)]
    }

    /// Monte Carlo standard error of `θ_{k,i}`, when estimated.
    pub fn stderr_at(&self, rank: usize, name: usize) -> Option<T> {
        self.stderr.as_ref().map(|s| s[(rank - 1, name - 1)])
    }

    /// Rows are ranks, columns are names.
    pub fn matrix(&self) -> &DMatrix<T> {
        &self.theta
    }

    pub fn stderr(&self) -> Option<&DMatrix<T>> {
        self.stderr.as_ref()
    }

    pub fn row_sums(&self) -> Vec<T> {
        self.theta.row_iter().map(|r| r.iter().copied().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<T> {
        self.theta
            .column_iter()
            .map(|c| c.iter().copied().sum())
            .collect()
    }

    /// Largest deviation of a row or column sum from 1.
    pub fn doubly_stochastic_error(&self) -> T {
        self.row_sums()
            .into_iter()
            .chain(self.col_sums())
            .fold(T::zero(), |acc, s| acc.max((s - T::one()).abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.theta
            .iter()
            .zip(other.theta.iter())
            .fold(T::zero(), |acc, (a, b)| acc.max((*a - *b).abs()))
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        rows_of(&self.theta)
    }
}

fn rows_of<T: Real>(m: &DMatrix<T>) -> Vec<Vec<T>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl<T: Real> Serialize for OccupationMatrix<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("OccupationMatrix", 2)?;
        st.serialize_field("theta", &self.rows())?;
        st.serialize_field("stderr", &self.stderr.as_ref().map(rows_of))?;
        st.end()
    }
}

/// One chamber of an exact measure.
#[derive(Debug, Clone)]
pub struct Chamber<T> {
    pub perm: Permutation,
    pub lambda: Vec<T>,
    /// `log Π_k λ_{p,k}⁻¹`.
    pub log_weight: T,
    /// Normalized probability `θ_p`.
    pub theta: T,
}

/// Stationary law of `(Ξ, 𝔓)`: per-chamber rates and weights plus the
/// aggregated occupation matrix and mean gaps.
#[derive(Debug, Clone)]
pub struct InvariantMeasure<T: Real> {
    params: ModelParams<T>,
    mode: MeasureMode,
    log_norm: Option<T>,
    occupation: OccupationMatrix<T>,
    mean_gaps: Vec<T>,
    mean_gaps_se: Option<Vec<T>>,
    table: OnceLock<ChamberTable>,
}

#[derive(Debug, Clone)]
struct ChamberTable {
    index: WeightedIndex<f64>,
}

impl<T: Real> InvariantMeasure<T> {
    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn mode(&self) -> &MeasureMode {
        &self.mode
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.mode, MeasureMode::Exact { .. })
    }

    /// `log Σ_q Π_k λ_{q,k}⁻¹`; only known in exact mode.
    pub fn log_norm(&self) -> Result<T> {
        self.log_norm
            .ok_or(Error::Unavailable("normalizing constant of an MCMC measure"))
    }

    pub fn lambda(&self, p: &Permutation) -> Result<Vec<T>> {
        lambda_vector(&self.params, p)
    }

    /// Unnormalized `log Π_k λ_{p,k}⁻¹`.
    pub fn log_weight(&self, p: &Permutation) -> Result<T> {
        Ok(-self.lambda(p)?.iter().map(|l| l.ln()).sum::<T>())
    }

    /// Chamber probability `θ_p`.
    pub fn theta_p(&self, p: &Permutation) -> Result<T> {
        Ok((self.log_weight(p)? - self.log_norm()?).exp())
    }

    pub fn occupation(&self) -> &OccupationMatrix<T> {
        &self.occupation
    }

    /// Stationary means `E[Ξ_k] = Σ_p θ_p / λ_{p,k}`, `k = 1..n-1`.
    pub fn mean_gaps(&self) -> &[T] {
        &self.mean_gaps
    }

    /// Standard errors of [`InvariantMeasure::mean_gaps`] in MCMC mode.
    pub fn mean_gaps_se(&self) -> Option<&[T]> {
        self.mean_gaps_se.as_deref()
    }

    fn require_exact(&self, what: &'static str) -> Result<T> {
        match self.log_norm {
            Some(z) if self.is_exact() => Ok(z),
            _ => Err(Error::Unavailable(what)),
        }
    }

    /// Every chamber in lexicographic order (exact mode only).
    pub fn chambers(&self) -> Result<impl Iterator<Item = Chamber<T>> + '_> {
        let log_norm = self.require_exact("chamber enumeration of an MCMC measure")?;
        let iter = enumerate_permutations_with_cap(self.n(), EXACT_ENUMERATION_CAP)?;
        Ok(iter.map(move |perm| {
            let lambda = self.lambda(&perm).expect("rates checked at construction");
            let log_weight = -lambda.iter().map(|l| l.ln()).sum::<T>();
            Chamber {
                theta: (log_weight - log_norm).exp(),
                perm,
                lambda,
                log_weight,
            }
        }))
    }

    /// The `k` most likely chambers, most likely first (ties by
    /// lexicographic order).
    pub fn top_chambers(&self, k: usize) -> Result<Vec<Chamber<T>>> {
        let mut best: Vec<Chamber<T>> = Vec::with_capacity(k + 1);
        for c in self.chambers()? {
            if best.len() == k && best.last().is_some_and(|b| c.log_weight <= b.log_weight) {
                continue;
            }
            let pos = best.partition_point(|b| b.log_weight >= c.log_weight);
            best.insert(pos, c);
            best.truncate(k);
        }
        Ok(best)
    }

    /// Stationary gap density `℘(z) = norm⁻¹ Σ_p exp(−⟨λ_p, z⟩)`.
    pub fn gap_density(&self, z: &[T]) -> Result<T> {
        Ok(self.log_gap_density(z)?.exp())
    }

    pub fn log_gap_density(&self, z: &[T]) -> Result<T> {
        let log_norm = self.require_exact("gap density of an MCMC measure")?;
        if z.len() != self.n() - 1 {
            return Err(Error::Dimension(format!(
                "gap vector has length {}, expected {}",
                z.len(),
                self.n() - 1
            )));
        }
        if let Some(x) = z.iter().find(|x| !(**x >= T::zero())) {
            return Err(Error::Domain(format!("gap density needs z >= 0, got {x}")));
        }
        let mut acc = LogSumExp::default();
        for c in self.chambers()? {
            let dot: T = c.lambda.iter().zip(z).map(|(&l, &x)| l * x).sum();
            acc.push(-dot);
        }
        Ok(acc.value() - log_norm)
    }

    fn table(&self) -> Result<&ChamberTable> {
        self.require_exact("stationary sampling of an MCMC measure")?;
        if self.n() > SAMPLER_CAP {
            return Err(Error::Capacity {
                n: self.n(),
                cap: SAMPLER_CAP,
            });
        }
        if let Some(t) = self.table.get() {
            return Ok(t);
        }
        let weights: Vec<f64> = self.chambers()?.map(|c| c.theta.as_f64()).collect();
        let index = WeightedIndex::new(weights)
            .map_err(|e| Error::Numerical(format!("chamber table: {e}")))?;
        Ok(self.table.get_or_init(|| ChamberTable { index }))
    }

    /// Draw `(p, Ξ)` from the stationary law: `p` with probability `θ_p`,
    /// then independent `Exp(λ_{p,k})` gaps.
    pub fn sample_stationary<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Permutation, Vec<T>)> {
        let table = self.table()?;
        let idx = table.index.sample(rng) as u64;
        let p = Permutation::from_lex_index(self.n(), idx)?;
        let lambda = self.lambda(&p)?;
        let gaps = lambda
            .iter()
            .map(|&l| {
                let e: f64 = Exp1.sample(rng);
                T::lit(e) / l
            })
            .collect();
        Ok((p, gaps))
    }
}

/// Checks shared by the exact and MCMC constructions.
fn precheck<T: Real>(params: &ModelParams<T>) -> Result<()> {
    params.check_structure()?;
    params.require_skew_symmetry()?;
    let margin = params.stability_margin();
    if !(margin < T::zero()) {
        return Err(Error::Stability(format!(
            "worst partial drift sum is {margin}, must be negative"
        )));
    }
    Ok(())
}

/// Exact chamber weights by enumerating all of `Σ_n` (default cap 11).
pub fn chamber_weights<T: Real>(params: &ModelParams<T>) -> Result<InvariantMeasure<T>> {
    chamber_weights_with_cap(params, EXACT_ENUMERATION_CAP)
}

pub fn chamber_weights_with_cap<T: Real>(
    params: &ModelParams<T>,
    cap: usize,
) -> Result<InvariantMeasure<T>> {
    precheck(params)?;
    if params.n > cap {
        return Err(Error::Capacity { n: params.n, cap });
    }
    let agg = exact::aggregate(params)?;
    Ok(InvariantMeasure {
        params: params.clone(),
        mode: MeasureMode::Exact {
            permutations: agg.count,
        },
        log_norm: Some(agg.log_norm),
        occupation: OccupationMatrix::new(agg.theta, None)?,
        mean_gaps: agg.mean_gaps,
        mean_gaps_se: None,
        table: OnceLock::new(),
    })
}

/// The measure's occupation matrix.
pub fn occupation_matrix<T: Real>(measure: &InvariantMeasure<T>) -> OccupationMatrix<T> {
    measure.occupation.clone()
}

/// `Σ_k θ_{k,i} g_k + γ_i` for every name; vanishes for the true occupation
/// times.
pub fn equilibrium_residual<T: Real>(
    params: &ModelParams<T>,
    theta: &OccupationMatrix<T>,
) -> Result<Vec<T>> {
    let n = params.n;
    if theta.n() != n {
        return Err(Error::Dimension(format!(
            "occupation matrix is {0}x{0}, model has n = {n}",
            theta.n()
        )));
    }
    Ok((0..n)
        .map(|i| {
            (0..n)
                .map(|k| theta.matrix()[(k, i)] * params.g_rank[k])
                .sum::<T>()
                + params.gamma_name[i]
        })
        .collect())
}

/// Stationary density of the gaps at `z`.
pub fn gap_density<T: Real>(measure: &InvariantMeasure<T>, z: &[T]) -> Result<T> {
    measure.gap_density(z)
}

/// One draw from the stationary law of `(𝔓, Ξ)`.
pub fn sample_stationary<T: Real, R: Rng + ?Sized>(
    measure: &InvariantMeasure<T>,
    rng: &mut R,
) -> Result<(Permutation, Vec<T>)> {
    measure.sample_stationary(rng)
}

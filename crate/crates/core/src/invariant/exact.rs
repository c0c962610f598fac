//! Deterministic parallel reduction over all chambers.
//!
//! `Σ_n` is cut into fixed-size lexicographic index ranges. Each range is
//! reduced to a partial sum held relative to its own running maximum log
//! weight, and partials are merged sequentially in range order, so the
//! result does not depend on how many worker threads ran.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::ranks::{permutation_chunks, LexCursor, Permutation};
use crate::scalar::Real;

const CHUNK: u64 = 1 << 15;

pub(super) struct Aggregate<T: Real> {
    pub log_norm: T,
    pub theta: DMatrix<T>,
    pub mean_gaps: Vec<T>,
    pub count: u64,
}

/// Weighted sums scaled by `exp(-max)`.
struct Partial<T> {
    max: T,
    sum: T,
    /// `θ` accumulator, rank-major `k * n + i`.
    theta: Vec<T>,
    gaps: Vec<T>,
    count: u64,
}

impl<T: Real> Partial<T> {
    fn empty(n: usize) -> Self {
        Self {
            max: T::neg_infinity(),
            sum: T::zero(),
            theta: vec![T::zero(); n * n],
            gaps: vec![T::zero(); n - 1],
            count: 0,
        }
    }

    fn rescale(&mut self, factor: T) {
        self.sum *= factor;
        self.theta.iter_mut().for_each(|x| *x *= factor);
        self.gaps.iter_mut().for_each(|x| *x *= factor);
    }

    fn merge(mut self, mut other: Self) -> Self {
        if other.count == 0 {
            return self;
        }
        if self.count == 0 {
            return other;
        }
        if other.max > self.max {
            self.rescale((self.max - other.max).exp());
            self.max = other.max;
        } else {
            other.rescale((other.max - self.max).exp());
        }
        self.sum += other.sum;
        self.theta
            .iter_mut()
            .zip(&other.theta)
            .for_each(|(a, b)| *a += *b);
        self.gaps.iter_mut().zip(&other.gaps).for_each(|(a, b)| *a += *b);
        self.count += other.count;
        self
    }
}

struct Rates<'a, T> {
    g: &'a [T],
    gamma: &'a [T],
    /// `4 / (σ_k² + σ_{k+1}²)`.
    scale: Vec<T>,
}

fn reduce_range<T: Real>(rates: &Rates<'_, T>, n: usize, range: std::ops::Range<u64>) -> Result<Partial<T>> {
    let m = n - 1;
    let mut acc = Partial::empty(n);
    let mut cursor = LexCursor::at(n, range.start);
    let mut partial = vec![T::zero(); m];
    let mut lam = vec![T::zero(); m];
    let mut cum_ln = vec![T::zero(); m];
    let mut from = 0;
    for _ in range {
        let v = cursor.current();
        for k in from..m {
            let prev = if k == 0 { T::zero() } else { partial[k - 1] };
            let s = prev + rates.g[k] + rates.gamma[v[k]];
            if s >= T::zero() {
                return Err(Error::Stability(format!(
                    "partial drift sum through rank {} is {s} for chamber {:?}",
                    k + 1,
                    Permutation::from_zero_based_unchecked(v)
                )));
            }
            partial[k] = s;
            lam[k] = -s * rates.scale[k];
            let prev_ln = if k == 0 { T::zero() } else { cum_ln[k - 1] };
            cum_ln[k] = prev_ln + lam[k].ln();
        }
        let lw = -cum_ln[m - 1];
        if lw > acc.max {
            if acc.count > 0 {
                acc.rescale((acc.max - lw).exp());
            }
            acc.max = lw;
        }
        let w = (lw - acc.max).exp();
        acc.sum += w;
        for (k, &name) in v.iter().enumerate() {
            acc.theta[k * n + name] += w;
        }
        for k in 0..m {
            acc.gaps[k] += w / lam[k];
        }
        acc.count += 1;
        from = cursor.advance().unwrap_or(0);
    }
    Ok(acc)
}

pub(super) fn aggregate<T: Real>(params: &ModelParams<T>) -> Result<Aggregate<T>> {
    let n = params.n;
    let s2 = params.sigma2();
    let four = T::lit(4.0);
    let rates = Rates {
        g: &params.g_rank,
        gamma: &params.gamma_name,
        scale: (0..n - 1).map(|k| four / (s2[k] + s2[k + 1])).collect(),
    };
    let chunks = permutation_chunks(n, CHUNK)?;
    let partials: Vec<Partial<T>> = chunks
        .into_par_iter()
        .map(|r| reduce_range(&rates, n, r))
        .collect::<Result<_>>()?;
    let total = partials
        .into_iter()
        .fold(Partial::empty(n), Partial::merge);
    let theta = DMatrix::from_fn(n, n, |k, i| total.theta[k * n + i] / total.sum);
    Ok(Aggregate {
        log_norm: total.max + total.sum.ln(),
        theta,
        mean_gaps: total.gaps.iter().map(|&x| x / total.sum).collect(),
        count: total.count,
    })
}

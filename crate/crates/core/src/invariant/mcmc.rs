//! Metropolis chain on `Σ_n` targeting `θ_p ∝ Π_k λ_{p,k}⁻¹`.
//!
//! A proposal swaps the names at two adjacent ranks `j, j+1`. Only the
//! partial drift sum through rank `j` changes, so the acceptance ratio is
//! `S_j / S_j'` and each step costs O(1). Occupation tallies are kept as
//! residence times per rank and are flushed only when an occupant changes
//! or a batch ends.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{precheck, InvariantMeasure, MeasureMode, OccupationMatrix};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::ranks::Permutation;
use crate::scalar::Real;

/// Default burn-in `10 n²`.
pub fn default_burn_in(n: usize) -> u64 {
    10 * (n as u64) * (n as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McmcConfig {
    /// Total chain length, burn-in included.
    pub iters: u64,
    pub burn_in: u64,
    pub seed: u64,
    /// Number of batches for batch-means standard errors.
    pub batches: usize,
}

impl McmcConfig {
    pub fn new(n: usize, iters: u64, seed: u64) -> Self {
        Self {
            iters,
            burn_in: default_burn_in(n),
            seed,
            batches: 50,
        }
    }
}

struct Chain<'a> {
    gamma: &'a [f64],
    scale: Vec<f64>,
    names: Vec<usize>,
    partial: Vec<f64>,
}

impl Chain<'_> {
    fn inv_lambda(&self, k: usize) -> f64 {
        1.0 / (-self.partial[k] * self.scale[k])
    }

    /// Propose swapping ranks `j, j+1`; returns whether it was accepted.
    fn step(&mut self, j: usize, u: f64) -> Result<bool> {
        let (a, b) = (self.names[j], self.names[j + 1]);
        let s = self.partial[j];
        let s_new = s - self.gamma[a] + self.gamma[b];
        if s_new >= 0.0 {
            let mut names = self.names.clone();
            names.swap(j, j + 1);
            return Err(Error::Stability(format!(
                "partial drift sum through rank {} is {s_new} for chamber {:?}",
                j + 1,
                Permutation::from_zero_based_unchecked(&names)
            )));
        }
        // θ_p'/θ_p = λ_j / λ_j' = S_j / S_j'
        if u < s / s_new {
            self.names.swap(j, j + 1);
            self.partial[j] = s_new;
            Ok(true)
        } else {
            Ok(false)
        }
    }
}

struct Tally {
    n: usize,
    /// Residence time of name `i` at rank `k`, index `k * n + i`.
    cells: Vec<u64>,
    rank_since: Vec<u64>,
    gaps: Vec<f64>,
    gap_since: Vec<u64>,
}

impl Tally {
    fn new(n: usize) -> Self {
        Self {
            n,
            cells: vec![0; n * n],
            rank_since: vec![0; n],
            gaps: vec![0.0; n - 1],
            gap_since: vec![0; n - 1],
        }
    }

    fn close_rank(&mut self, k: usize, name: usize, now: u64) {
        self.cells[k * self.n + name] += now - self.rank_since[k];
        self.rank_since[k] = now;
    }

    fn close_gap(&mut self, k: usize, inv_lambda: f64, now: u64) {
        self.gaps[k] += inv_lambda * (now - self.gap_since[k]) as f64;
        self.gap_since[k] = now;
    }

    fn flush(&mut self, chain: &Chain<'_>, now: u64) {
        for k in 0..self.n {
            self.close_rank(k, chain.names[k], now);
        }
        for k in 0..self.n - 1 {
            self.close_gap(k, chain.inv_lambda(k), now);
        }
    }

    fn reset(&mut self) {
        self.cells.iter_mut().for_each(|x| *x = 0);
        self.gaps.iter_mut().for_each(|x| *x = 0.0);
    }
}

/// MCMC estimate of the stationary chamber law.
pub fn chamber_weights_mcmc<T: Real>(
    params: &ModelParams<T>,
    iters: u64,
    burn_in: u64,
    seed: u64,
) -> Result<InvariantMeasure<T>> {
    chamber_weights_mcmc_with(
        params,
        &McmcConfig {
            iters,
            burn_in,
            seed,
            batches: 50,
        },
    )
}

pub fn chamber_weights_mcmc_with<T: Real>(
    params: &ModelParams<T>,
    cfg: &McmcConfig,
) -> Result<InvariantMeasure<T>> {
    precheck(params)?;
    if cfg.iters <= cfg.burn_in {
        return Err(Error::InvalidArgument(format!(
            "iters ({}) must exceed burn_in ({})",
            cfg.iters, cfg.burn_in
        )));
    }
    let n = params.n;
    let g: Vec<f64> = params.g_rank.iter().map(|x| x.as_f64()).collect();
    let gamma: Vec<f64> = params.gamma_name.iter().map(|x| x.as_f64()).collect();
    let s2: Vec<f64> = params.sigma2().iter().map(|x| x.as_f64()).collect();

    // start from the ordering by descending name drift, the heaviest chamber
    let mut names: Vec<usize> = (0..n).collect();
    names.sort_by(|&a, &b| gamma[b].total_cmp(&gamma[a]));
    let mut partial = vec![0.0; n - 1];
    let mut s = 0.0;
    for k in 0..n - 1 {
        s += g[k] + gamma[names[k]];
        partial[k] = s;
    }
    let mut chain = Chain {
        gamma: &gamma,
        scale: (0..n - 1).map(|k| 4.0 / (s2[k] + s2[k + 1])).collect(),
        names,
        partial,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.burn_in {
        let j = rng.random_range(0..n - 1);
        let u: f64 = rng.random();
        chain.step(j, u)?;
    }

    let counted = cfg.iters - cfg.burn_in;
    let batches = (cfg.batches.max(2) as u64).min(counted).max(1);
    let mut tally = Tally::new(n);
    let mut total_cells = vec![0u64; n * n];
    let mut total_gaps = vec![0.0; n - 1];
    let mut batch_theta: Vec<Vec<f64>> = Vec::with_capacity(batches as usize);
    let mut batch_gaps: Vec<Vec<f64>> = Vec::with_capacity(batches as usize);
    let mut accepted = 0u64;
    let mut t = 0u64;
    for b in 1..=batches {
        let end = counted * b / batches;
        let start = t;
        while t < end {
            let j = rng.random_range(0..n - 1);
            let u: f64 = rng.random();
            // each iteration counts the post-step state
            let (a, bname) = (chain.names[j], chain.names[j + 1]);
            let inv = chain.inv_lambda(j);
            if chain.step(j, u)? {
                accepted += 1;
                tally.close_rank(j, a, t);
                tally.close_rank(j + 1, bname, t);
                tally.close_gap(j, inv, t);
            }
            t += 1;
        }
        tally.flush(&chain, t);
        let len = (t - start) as f64;
        batch_theta.push(tally.cells.iter().map(|&c| c as f64 / len).collect());
        batch_gaps.push(tally.gaps.iter().map(|&x| x / len).collect());
        for (tot, &c) in total_cells.iter_mut().zip(&tally.cells) {
            *tot += c;
        }
        for (tot, &x) in total_gaps.iter_mut().zip(&tally.gaps) {
            *tot += x;
        }
        tally.reset();
    }

    let cf = counted as f64;
    let nb = batch_theta.len() as f64;
    let se_of = |vals: &mut dyn Iterator<Item = f64>| {
        let v: Vec<f64> = vals.collect();
        let m = v.iter().sum::<f64>() / nb;
        let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (nb - 1.0);
        (var / nb).sqrt()
    };
    let theta = DMatrix::from_fn(n, n, |k, i| T::lit(total_cells[k * n + i] as f64 / cf));
    let theta_se = DMatrix::from_fn(n, n, |k, i| {
        T::lit(se_of(&mut batch_theta.iter().map(|b| b[k * n + i])))
    });
    let mean_gaps = total_gaps.iter().map(|&x| T::lit(x / cf)).collect();
    let mean_gaps_se = (0..n - 1)
        .map(|k| T::lit(se_of(&mut batch_gaps.iter().map(|b| b[k]))))
        .collect();

    Ok(InvariantMeasure {
        params: params.clone(),
        mode: MeasureMode::Mcmc {
            iters: cfg.iters,
            burn_in: cfg.burn_in,
            seed: cfg.seed,
            acceptance_rate: accepted as f64 / cf,
        },
        log_norm: None,
        occupation: OccupationMatrix::new(theta, Some(theta_se))?,
        mean_gaps,
        mean_gaps_se: Some(mean_gaps_se),
        table: OnceLock::new(),
    })
}

//! Chamber weights in exact field arithmetic.
//!
//! With a rational scalar the weights `Π λ⁻¹`, their normalization and the
//! equilibrium residual are computed without rounding, independently of the
//! log-space floating-point reduction.

use crate::error::{Error, Result};
use crate::invariant::lambda_from_parts;
use crate::ranks::{enumerate_permutations_with_cap, Permutation};
use crate::scalar::Field;

/// Largest `n` accepted by the field-arithmetic route.
pub const FIELD_CAP: usize = 8;

/// Chamber probabilities and occupation matrix in a field `F`.
#[derive(Debug, Clone)]
pub struct FieldOccupation<F> {
    /// Chambers in lexicographic order.
    pub perms: Vec<Permutation>,
    /// `θ_p` aligned with `perms`.
    pub theta_p: Vec<F>,
    /// `θ_{k,i}` with `theta[k][i]`, both 0-based.
    pub theta: Vec<Vec<F>>,
}

/// Exact `θ_p` and `θ_{k,i}` from rank drifts, name drifts and rank variances.
pub fn exact_occupation_field<F: Field>(
    g_rank: &[F],
    gamma_name: &[F],
    sigma2: &[F],
) -> Result<FieldOccupation<F>> {
    let n = g_rank.len();
    if gamma_name.len() != n || sigma2.len() != n {
        return Err(Error::Dimension("drift and variance vectors differ in length".into()));
    }
    if n < 2 {
        return Err(Error::Dimension(format!("need n >= 2, got {n}")));
    }
    let mut perms = Vec::new();
    let mut weights = Vec::new();
    let mut norm = F::zero();
    for p in enumerate_permutations_with_cap(n, FIELD_CAP)? {
        let lambda = lambda_from_parts(g_rank, gamma_name, sigma2, &p)?;
        let prod = lambda.into_iter().fold(F::one(), |acc, l| acc * l);
        let w = F::one() / prod;
        norm = norm + w.clone();
        weights.push(w);
        perms.push(p);
    }
    let theta_p: Vec<F> = weights.into_iter().map(|w| w / norm.clone()).collect();
    let mut theta = vec![vec![F::zero(); n]; n];
    for (p, t) in perms.iter().zip(&theta_p) {
        for (k, &i) in p.names0().iter().enumerate() {
            theta[k][i] = theta[k][i].clone() + t.clone();
        }
    }
    Ok(FieldOccupation {
        perms,
        theta_p,
        theta,
    })
}

/// `Σ_k θ_{k,i} g_k + γ_i` in the field `F`.
pub fn equilibrium_residual_field<F: Field>(g_rank: &[F], gamma_name: &[F], theta: &[Vec<F>]) -> Vec<F> {
    let n = g_rank.len();
    (0..n)
        .map(|i| {
            (0..n).fold(gamma_name[i].clone(), |acc, k| {
                acc + theta[k][i].clone() * g_rank[k].clone()
            })
        })
        .collect()
}

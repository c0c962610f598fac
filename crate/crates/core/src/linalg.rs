//! Thin wrappers over `nalgebra` for the few dense decompositions the crate
//! needs. Decompositions run in `f64`; inputs and outputs stay generic.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub(crate) fn to_f64<T: Real>(m: &DMatrix<T>) -> DMatrix<f64> {
    m.map(|x| x.as_f64())
}

/// Smallest eigenvalue of the symmetric part `(M + Mᵀ)/2`.
pub fn min_symmetric_eigenvalue<T: Real>(m: &DMatrix<T>) -> f64 {
    let a = to_f64(m);
    let sym = (&a + a.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.min()
}

/// Solve `M x = b` by LU with partial pivoting; fails on a singular system.
pub fn solve<T: Real>(m: &DMatrix<T>, b: &[T]) -> Result<Vec<T>> {
    let a = to_f64(m);
    let rhs = DVector::from_iterator(b.len(), b.iter().map(|x| x.as_f64()));
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let lu = a.lu();
    let u_min = lu
        .u()
        .diagonal()
        .iter()
        .fold(f64::INFINITY, |acc, x| acc.min(x.abs()));
    if u_min <= 1e-14 * scale {
        return Err(Error::Numerical("singular linear system".into()));
    }
    let x = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular linear system".into()))?;
    Ok(x.iter().map(|&v| T::lit(v)).collect())
}

/// `M Mᵀ`.
pub fn gram<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    let n = m.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        (0..m.ncols()).fold(T::zero(), |acc, k| acc + m[(i, k)] * m[(j, k)])
    })
}

/// `xᵀ M x`.
pub fn quad_form<T: Real>(m: &DMatrix<T>, x: &[T]) -> T {
    let mut s = T::zero();
    for i in 0..x.len() {
        for j in 0..x.len() {
            s += x[i] * m[(i, j)] * x[j];
        }
    }
    s
}

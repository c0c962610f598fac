//! Small statistical helpers shared by the Monte Carlo estimators.

use crate::scalar::Real;

/// Sample mean and the standard error of the mean.
pub fn mean_se<T: Real>(xs: &[T]) -> (T, T) {
    let n = xs.len();
    if n == 0 {
        return (T::nan(), T::nan());
    }
    let nf = T::from_usize_lossy(n);
    let mean = xs.iter().copied().sum::<T>() / nf;
    if n == 1 {
        return (mean, T::nan());
    }
    let var = xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / (nf - T::one());
    (mean, (var / nf).sqrt())
}

/// Unbiased sample variance.
pub fn variance<T: Real>(xs: &[T]) -> T {
    let nf = T::from_usize_lossy(xs.len());
    let mean = xs.iter().copied().sum::<T>() / nf;
    xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / (nf - T::one())
}

/// Batch-means standard error of the mean of a correlated series using
/// `batches` equal consecutive batches (the tail that does not fill a batch
/// is dropped).
pub fn batch_means_se<T: Real>(xs: &[T], batches: usize) -> T {
    let b = batches.max(2);
    let size = xs.len() / b;
    if size == 0 {
        return T::nan();
    }
    let means: Vec<T> = xs
        .chunks_exact(size)
        .take(b)
        .map(|c| c.iter().copied().sum::<T>() / T::from_usize_lossy(size))
        .collect();
    mean_se(&means).1
}

/// Kolmogorov–Smirnov distance between a sample and a continuous CDF.
pub fn ks_distance<T: Real>(sample: &[T], cdf: impl Fn(T) -> T) -> T {
    let mut xs = sample.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite sample"));
    let n = T::from_usize_lossy(xs.len());
    let mut d = T::zero();
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        let lo = T::from_usize_lossy(i) / n;
        let hi = T::from_usize_lossy(i + 1) / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    d
}

/// Least-squares slope of `y` against `x`.
pub fn ols_slope<T: Real>(x: &[T], y: &[T]) -> T {
    let n = T::from_usize_lossy(x.len());
    let mx = x.iter().copied().sum::<T>() / n;
    let my = y.iter().copied().sum::<T>() / n;
    let sxy = x.iter().zip(y).map(|(&a, &b)| (a - mx) * (b - my)).sum::<T>();
    let sxx = x.iter().map(|&a| (a - mx) * (a - mx)).sum::<T>();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_se() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert!((variance(&[1.0f64, 2.0, 3.0, 4.0]) - 5.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn ks_of_uniform_grid() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        let d = ks_distance(&xs, |x| x);
        assert!((d - 0.005).abs() < 1e-12);
    }

    #[test]
    fn batch_means_of_constant_batches() {
        let xs: Vec<f64> = (0..100).map(|i| (i / 10) as f64).collect();
        let se = batch_means_se(&xs, 10);
        let (_, direct) = mean_se(&(0..10).map(|i| i as f64).collect::<Vec<_>>());
        assert!((se - direct).abs() < 1e-14);
    }

    #[test]
    fn slope_of_line() {
        let x = [1.0f64, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0];
        assert!((ols_slope(&x, &y) - 2.0).abs() < 1e-14);
    }
}

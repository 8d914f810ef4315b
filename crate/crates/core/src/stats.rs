//! Running moments, compensated sums and the replica scheduler.

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Welford accumulator for mean and variance.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MeanVar {
    count: u64,
    mean: f64,
    m2: f64,
}

impl MeanVar {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance (0 for fewer than two samples).
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for MeanVar {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = MeanVar::new();
        for x in iter {
            acc.push(x);
        }
        acc
    }
}

/// Sample variance with the standard error of that variance estimate,
/// from the fourth central moment: `Var(s²) ≈ (m4 − s⁴)/N`.
pub fn variance_with_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = compensated_sum(xs.iter().copied()) / n;
    let m2 = compensated_sum(xs.iter().map(|x| (x - mean).powi(2))) / n;
    let m4 = compensated_sum(xs.iter().map(|x| (x - mean).powi(4))) / n;
    let var = m2 * n / (n - 1.0);
    let se = ((m4 - m2 * m2).max(0.0) / n).sqrt();
    (var, se)
}

/// Standard error of a difference of two independent estimates.
pub fn combined_se(a: f64, b: f64) -> f64 {
    a.hypot(b)
}

/// Runs `f(replica)` for every replica index and returns the results in index
/// order. Parallel when the `parallel` feature is on; the output never depends
/// on the thread count.
pub fn map_replicas<T, F>(replicas: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..replicas).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..replicas).map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut v = vec![1.0];
        v.extend(std::iter::repeat(1e-16).take(10_000));
        let s = compensated_sum(v.iter().copied());
        assert!((s - (1.0 + 1e-12)).abs() < 1e-15);
    }

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 2.0, 4.0, 8.0, 16.0];
        let acc: MeanVar = xs.iter().copied().collect();
        assert!((acc.mean() - 6.2).abs() < 1e-12);
        let var = xs.iter().map(|x| (x - 6.2f64).powi(2)).sum::<f64>() / 4.0;
        assert!((acc.variance() - var).abs() < 1e-12);
        assert_eq!(acc.count(), 5);
    }

    #[test]
    fn replicas_come_back_in_order() {
        let out = map_replicas(100, |i| i * 3);
        assert_eq!(out, (0..100).map(|i| i * 3).collect::<Vec<_>>());
    }
}

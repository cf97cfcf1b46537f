//! Small statistics toolkit: interval estimates, streaming moments, and the
//! handful of hypothesis-test statistics the experiments report.

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959963984540054;
/// Two-sided 99.9% normal quantile.
pub const Z_999: f64 = 3.290526731491926;

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes == n { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// Dvoretzky-Kiefer-Wolfowitz band half-width at the given confidence.
pub fn dkw_epsilon(n: u64, confidence: f64) -> f64 {
    let alpha = 1.0 - confidence;
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

/// Two-proportion z statistic with pooled variance.
pub fn two_proportion_z(k1: u64, n1: u64, k2: u64, n2: u64) -> f64 {
    let (p1, p2) = (k1 as f64 / n1 as f64, k2 as f64 / n2 as f64);
    let pool = (k1 + k2) as f64 / (n1 + n2) as f64;
    let var = pool * (1.0 - pool) * (1.0 / n1 as f64 + 1.0 / n2 as f64);
    if var <= 0.0 {
        return 0.0;
    }
    (p1 - p2) / var.sqrt()
}

/// Welch z statistic for two independent sample means.
pub fn two_sample_z(mean1: f64, var1: f64, n1: u64, mean2: f64, var2: f64, n2: u64) -> f64 {
    let se = (var1 / n1 as f64 + var2 / n2 as f64).sqrt();
    if se == 0.0 {
        return 0.0;
    }
    (mean1 - mean2) / se
}

/// Least-squares line fit. Returns (slope, intercept).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2, "need at least two points for a line fit");
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Streaming mean and variance (Welford).
#[derive(Debug, Clone, Default)]
pub struct RunningMoments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningMoments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sample variance (n - 1 normalization).
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        self.m2 / (self.n - 1) as f64
    }

    /// Standard error of the mean for independent samples.
    pub fn stderr(&self) -> f64 {
        if self.n < 2 {
            return f64::INFINITY;
        }
        (self.variance() / self.n as f64).sqrt()
    }
}

/// Batch-means standard error for a correlated series: the stream is cut into
/// `n_batches` contiguous batches and the spread of batch averages estimates
/// the error of the overall time average.
#[derive(Debug, Clone)]
pub struct BatchMeans {
    batch_len: u64,
    n_batches: usize,
    current_sum: f64,
    current_n: u64,
    batches: Vec<f64>,
    overall: RunningMoments,
}

impl BatchMeans {
    pub fn new(expected_samples: u64, n_batches: usize) -> Self {
        let batch_len = (expected_samples / n_batches as u64).max(1);
        BatchMeans {
            batch_len,
            n_batches,
            current_sum: 0.0,
            current_n: 0,
            batches: Vec::with_capacity(n_batches + 1),
            overall: RunningMoments::new(),
        }
    }

    pub fn push(&mut self, x: f64) {
        self.overall.push(x);
        self.current_sum += x;
        self.current_n += 1;
        if self.current_n == self.batch_len {
            self.batches.push(self.current_sum / self.current_n as f64);
            self.current_sum = 0.0;
            self.current_n = 0;
        }
    }

    pub fn mean(&self) -> f64 {
        self.overall.mean()
    }

    /// Plain sample variance of the underlying series.
    pub fn series_variance(&self) -> f64 {
        self.overall.variance()
    }

    /// Standard error of the overall mean from the batch averages.
    pub fn stderr(&self) -> f64 {
        if self.batches.len() < 2 {
            return f64::INFINITY;
        }
        let mut m = RunningMoments::new();
        for &b in &self.batches {
            m.push(b);
        }
        (m.variance() / self.batches.len() as f64).sqrt()
    }

    /// Means of the first and second half of the completed batches.
    pub fn half_means(&self) -> Option<(f64, f64)> {
        if self.batches.len() < 4 {
            return None;
        }
        let mid = self.batches.len() / 2;
        let a = self.batches[..mid].iter().sum::<f64>() / mid as f64;
        let b = self.batches[mid..].iter().sum::<f64>() / (self.batches.len() - mid) as f64;
        Some((a, b))
    }

    pub fn n_batches_completed(&self) -> usize {
        self.batches.len()
    }

    pub fn expected_batches(&self) -> usize {
        self.n_batches
    }
}

/// Median of a slice (averages the central pair for even lengths).
pub fn median(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty());
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn wilson_contains_point_estimate() {
        let (lo, hi) = wilson_interval(40, 100, Z_95);
        assert!(lo < 0.4 && 0.4 < hi);
        assert!(hi - lo < 0.2);
        let (lo, hi) = wilson_interval(0, 50, Z_95);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.2);
    }

    #[test]
    fn dkw_band_matches_formula() {
        let eps = dkw_epsilon(100_000, 0.999);
        assert_relative_eq!(eps, (2000.0f64.ln() / 200_000.0).sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn welford_matches_direct_computation() {
        let xs = [1.0, 2.0, 4.0, 8.0, 16.0];
        let mut m = RunningMoments::new();
        for &x in &xs {
            m.push(x);
        }
        let mean = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 4.0;
        assert_relative_eq!(m.mean(), mean, max_relative = 1e-14);
        assert_relative_eq!(m.variance(), var, max_relative = 1e-14);
    }

    #[test]
    fn line_fit_recovers_exact_line() {
        let xs = [0.1, 0.2, 0.3, 0.5];
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x - 0.7).collect();
        let (s, i) = linear_fit(&xs, &ys);
        assert_relative_eq!(s, 2.5, max_relative = 1e-12);
        assert_relative_eq!(i, -0.7, max_relative = 1e-12);
    }

    #[test]
    fn median_handles_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
    }
}

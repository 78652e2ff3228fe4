//! Batch-means summaries for Monte Carlo output.
//!
//! Samples are split in their deterministic order into equal batches; the
//! spread of the per-batch statistic gives the standard error. Nonlinear
//! statistics (variance, covariance, ratios) get the full-data point estimate
//! with batch-based error bars.

pub const DEFAULT_BATCHES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
    pub n: usize,
    pub batches: usize,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Unbiased sample covariance of paired observations.
pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    if xs.len() < 2 {
        return 0.0;
    }
    let (mx, my) = (mean(xs), mean(ys));
    xs.iter()
        .zip(ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / (xs.len() - 1) as f64
}

/// Point estimate on the full data plus a batch-means standard error for an
/// arbitrary statistic. Requires at least two observations per batch.
pub fn batch_estimate<F: Fn(&[f64]) -> f64>(xs: &[f64], batches: usize, stat: F) -> Estimate {
    assert!(batches >= 2, "need at least two batches");
    let size = xs.len() / batches;
    assert!(size >= 1, "need at least {batches} samples, got {}", xs.len());
    let used = size * batches;
    let values: Vec<f64> = (0..batches)
        .map(|b| stat(&xs[b * size..(b + 1) * size]))
        .collect();
    let spread = variance(&values);
    Estimate {
        value: stat(&xs[..used]),
        se: (spread / batches as f64).sqrt(),
        n: used,
        batches,
    }
}

pub fn batch_mean(xs: &[f64], batches: usize) -> Estimate {
    batch_estimate(xs, batches, mean)
}

/// Paired-data version for statistics of (x, y) pairs such as covariance.
pub fn batch_pair_estimate<F: Fn(&[f64], &[f64]) -> f64>(
    xs: &[f64],
    ys: &[f64],
    batches: usize,
    stat: F,
) -> Estimate {
    assert_eq!(xs.len(), ys.len());
    assert!(batches >= 2);
    let size = xs.len() / batches;
    assert!(size >= 1, "need at least {batches} samples, got {}", xs.len());
    let used = size * batches;
    let values: Vec<f64> = (0..batches)
        .map(|b| stat(&xs[b * size..(b + 1) * size], &ys[b * size..(b + 1) * size]))
        .collect();
    let spread = variance(&values);
    Estimate {
        value: stat(&xs[..used], &ys[..used]),
        se: (spread / batches as f64).sqrt(),
        n: used,
        batches,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_data_has_zero_error() {
        let xs = vec![3.0; 100];
        let e = batch_mean(&xs, 20);
        assert_eq!(e.value, 3.0);
        assert_eq!(e.se, 0.0);
        assert_eq!(e.n, 100);
    }

    #[test]
    fn mean_se_shrinks_with_sample_size() {
        // Deterministic alternating data; se scales like 1/sqrt(n).
        let xs: Vec<f64> = (0..400).map(|i| (i % 7) as f64).collect();
        let small = batch_mean(&xs[..100], 20);
        let large = batch_mean(&xs, 20);
        assert!(large.se < small.se);
    }

    #[test]
    fn variance_and_covariance_basics() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert!((variance(&xs) - 5.0 / 3.0).abs() < 1e-12);
        let ys = [2.0, 4.0, 6.0, 8.0];
        assert!((covariance(&xs, &ys) - 10.0 / 3.0).abs() < 1e-12);
        // Cov(x, x) = Var(x).
        assert_eq!(covariance(&xs, &xs), variance(&xs));
    }

    #[test]
    fn pair_estimate_matches_direct_covariance() {
        let xs: Vec<f64> = (0..200).map(|i| (i as f64).sin()).collect();
        let ys: Vec<f64> = (0..200).map(|i| (i as f64).cos()).collect();
        let e = batch_pair_estimate(&xs, &ys, 20, covariance);
        assert!((e.value - covariance(&xs, &ys)).abs() < 1e-12);
        assert!(e.se > 0.0);
    }

    #[test]
    fn ragged_tail_is_dropped() {
        let xs: Vec<f64> = (0..103).map(|i| i as f64).collect();
        let e = batch_mean(&xs, 20);
        assert_eq!(e.n, 100);
        assert_eq!(e.value, mean(&xs[..100]));
    }
}

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

/// Mean, unbiased variance and standard error of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleSummary {
    pub replicas: usize,
    pub mean: f64,
    pub variance: f64,
    pub stderr: f64,
}

impl SampleSummary {
    pub fn of(samples: &[f64]) -> Self {
        let r = samples.len();
        let mean = samples.iter().sum::<f64>() / r as f64;
        let variance = if r > 1 {
            samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1) as f64
        } else {
            0.0
        };
        SampleSummary {
            replicas: r,
            mean,
            variance,
            stderr: (variance / r as f64).sqrt(),
        }
    }

    /// Standard error of the sample variance for normal data with variance
    /// `sigma2`: `sqrt(2 sigma2^2 / (R - 1))`.
    pub fn variance_stderr(&self, sigma2: f64) -> f64 {
        (2.0 * sigma2 * sigma2 / (self.replicas as f64 - 1.0)).sqrt()
    }
}

/// Mean squared deviation of `samples` from `reference`, with the standard
/// error of that estimate.
pub fn mse(samples: &[f64], reference: f64) -> (f64, f64) {
    let sq: Vec<f64> = samples.iter().map(|x| (x - reference).powi(2)).collect();
    let s = SampleSummary::of(&sq);
    (s.mean, s.stderr)
}

/// `(empirical - reference) / stderr`, taking `0` when both sides agree
/// exactly and the standard error vanishes.
pub fn zscore(empirical: f64, reference: f64, stderr: f64) -> f64 {
    let d = empirical - reference;
    if d == 0.0 {
        0.0
    } else {
        d / stderr
    }
}

/// One-sample Kolmogorov-Smirnov test of standardized samples against the
/// standard normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Standardizes with the sample mean and standard deviation, then compares
/// with the standard normal; the p-value uses the asymptotic Kolmogorov law.
pub fn ks_normal(samples: &[f64]) -> KsResult {
    let s = SampleSummary::of(samples);
    let sd = s.variance.sqrt();
    let mut z: Vec<f64> = samples.iter().map(|x| (x - s.mean) / sd).collect();
    z.sort_by(f64::total_cmp);
    let normal = Normal::standard();
    let n = z.len() as f64;
    let mut d: f64 = 0.0;
    for (k, &x) in z.iter().enumerate() {
        let c = normal.cdf(x);
        d = d.max((k as f64 + 1.0) / n - c).max(c - k as f64 / n);
    }
    KsResult {
        statistic: d,
        p_value: kolmogorov_survival(d * n.sqrt()),
    }
}

/// `P(K > x)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(x: f64) -> f64 {
    // The survival function is 1 to double precision below 0.2.
    if x < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn summary_of_small_sample() {
        let s = SampleSummary::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.variance - 5.0 / 3.0).abs() < 1e-15);
        assert!((s.stderr - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert_eq!(mse(&[1.0, 3.0], 2.0).0, 1.0);
        assert_eq!(zscore(1.0, 1.0, 0.0), 0.0);
    }

    #[test]
    fn kolmogorov_tail_values() {
        // Classical critical values: P(K > 1.358) = 0.05, P(K > 1.949) = 0.001.
        assert!((kolmogorov_survival(1.358) - 0.05).abs() < 5e-4);
        assert!((kolmogorov_survival(1.949) - 0.001).abs() < 5e-5);
        assert_eq!(kolmogorov_survival(0.0), 1.0);
    }

    #[test]
    fn ks_accepts_normal_and_rejects_uniform() {
        let mut rng = crate::sim::substream(17, 0);
        let normal: Vec<f64> = (0..5000).map(|_| StandardNormal.sample(&mut rng)).collect();
        assert!(ks_normal(&normal).p_value > 1e-3);
        let uniform: Vec<f64> = (0..5000).map(|_| rng.random::<f64>()).collect();
        assert!(ks_normal(&uniform).p_value < 1e-3);
    }
}

use serde::{Deserialize, Serialize};

/// Two-sided 95% normal quantile used for the reported confidence interval.
const Z95: f64 = 1.959_963_984_540_054;

/// Default number of standard errors every statistical assertion allows.
pub const DEFAULT_SIGMA_MULTIPLIER: f64 = 3.0;

/// Monte Carlo result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
    pub ci_low: f64,
    pub ci_high: f64,
    pub seed: u64,
}

impl Estimate {
    pub fn new(mean: f64, stderr: f64, samples: usize, seed: u64) -> Self {
        Self { mean, stderr, samples, ci_low: mean - Z95 * stderr, ci_high: mean + Z95 * stderr, seed }
    }

    /// A value known without sampling error.
    pub fn exact(value: f64) -> Self {
        Self::new(value, 0.0, 0, 0)
    }

    /// Sample mean and standard error of the mean. Summation runs in slice
    /// order so the result is reproducible bit for bit.
    pub fn from_samples(values: &[f64], seed: u64) -> Self {
        let n = values.len();
        if n == 0 {
            return Self::new(f64::NAN, f64::NAN, 0, seed);
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
            (ss / (n as f64 - 1.0) / n as f64).sqrt()
        } else {
            0.0
        };
        Self::new(mean, stderr, n, seed)
    }

    /// Square root of a second-moment estimate; the standard error follows
    /// from the delta method, `se(sqrt m) = se(m) / (2 sqrt m)`.
    pub fn sqrt(&self) -> Self {
        let m = self.mean.max(0.0);
        let root = m.sqrt();
        let se = if root > 0.0 { self.stderr / (2.0 * root) } else { 0.0 };
        Self::new(root, se, self.samples, self.seed)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::new(c * self.mean, c.abs() * self.stderr, self.samples, self.seed)
    }

    /// `|mean - target| <= k * stderr`, with a floor of a few ulps so that
    /// zero-variance estimates of exact targets pass.
    pub fn within(&self, target: f64, k: f64) -> bool {
        let slack = k * self.stderr + 1e-12 * target.abs().max(self.mean.abs()).max(1.0);
        (self.mean - target).abs() <= slack
    }
}

/// Combined standard error of independent estimates.
pub fn combined_stderr(parts: &[f64]) -> f64 {
    parts.iter().map(|s| s * s).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_moments() {
        let e = Estimate::from_samples(&[1.0, 2.0, 3.0, 4.0], 9);
        assert_eq!(e.mean, 2.5);
        // sample variance 5/3, se = sqrt(5/3 / 4)
        assert!((e.stderr - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert_eq!(e.seed, 9);
        assert!(e.ci_low < 2.5 && e.ci_high > 2.5);
    }

    #[test]
    fn constant_samples_have_zero_error() {
        let e = Estimate::from_samples(&[3.0; 50], 0);
        assert_eq!(e.stderr, 0.0);
        assert!(e.within(3.0, 3.0));
        assert!(!e.within(3.1, 3.0));
    }

    #[test]
    fn delta_method_root() {
        let e = Estimate::new(4.0, 0.4, 10, 0).sqrt();
        assert_eq!(e.mean, 2.0);
        assert!((e.stderr - 0.1).abs() < 1e-15);
    }
}

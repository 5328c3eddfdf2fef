//! Log-space factorials and Poisson weights.
//!
//! `ln n!` is accumulated as a compensated running sum of `ln k`, which is
//! exact to a few ulps for every `n` that fits in memory and never overflows.

/// Table of `ln n!` for `n = 0..=n_max`.
#[derive(Debug, Clone)]
pub struct LnFactorial {
    table: Vec<f64>,
}

impl LnFactorial {
    pub fn new(n_max: usize) -> Self {
        let mut table = Vec::with_capacity(n_max + 1);
        table.push(0.0);
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for k in 1..=n_max {
            // Neumaier summation
            let term = (k as f64).ln();
            let t = sum + term;
            if sum.abs() >= term.abs() {
                comp += (sum - t) + term;
            } else {
                comp += (term - t) + sum;
            }
            sum = t;
            table.push(sum + comp);
        }
        Self { table }
    }

    pub fn n_max(&self) -> usize {
        self.table.len() - 1
    }

    /// `ln n!`. Falls back to Stirling beyond the table.
    pub fn get(&self, n: u64) -> f64 {
        match self.table.get(n as usize) {
            Some(v) => *v,
            None => ln_factorial_stirling(n),
        }
    }

    /// `ln P(N = n)` for `N ~ Poisson(lambda)`.
    pub fn ln_poisson_pmf(&self, n: u64, lambda: f64) -> f64 {
        if lambda == 0.0 {
            return if n == 0 { 0.0 } else { f64::NEG_INFINITY };
        }
        -lambda + n as f64 * lambda.ln() - self.get(n)
    }
}

/// Stirling series for `ln n!` with terms through `1/(1260 n^5)`.
pub fn ln_factorial_stirling(n: u64) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let x = n as f64;
    let x2 = x * x;
    x * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI * x).ln() + 1.0 / (12.0 * x) - 1.0 / (360.0 * x * x2)
        + 1.0 / (1260.0 * x2 * x2 * x)
}

/// Lower bound `ln n! >= n ln n - n + 1` (valid for `n >= 1`), from comparing
/// the sum of `ln k` with the integral of `ln x` over `[1, n]`.
pub fn ln_factorial_integral_bound(n: u64) -> f64 {
    let x = n as f64;
    x * x.ln() - x + 1.0
}

/// `ln^+ x = max(ln x, 0)`, with `ln^+ x = 0` for `x <= 1`.
pub fn ln_plus(x: f64) -> f64 {
    if x > 1.0 {
        x.ln()
    } else {
        0.0
    }
}

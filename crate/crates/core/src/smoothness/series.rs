//! Exact Poisson series `sum_n phi(n)^2 w(n) P(N = n)` with a convergence
//! verdict from dyadic partial sums.
//!
//! Decision rule. Let `S(m)` be the partial sum up to index `m` and
//! `D_k = S(2^k) - S(2^{k-1})` the dyadic block increments. With the last
//! three increments `D_{K-2}, D_{K-1}, D_K`:
//! * finite if `D_K` is below `1e-15 S` (the tail has vanished to working
//!   precision), or if they are strictly decreasing and the least-squares
//!   slope of `ln D_k` against `ln k` over the last (up to six) blocks is
//!   below `DECAY_THRESHOLD` by more than two standard errors, i.e. the
//!   blocks are summable in `k`. The threshold sits below -1 with a fixed
//!   margin because `sum 1/(n ln n)` has local slope `-1 - 1/(2k)`, which a
//!   purely statistical margin would let through;
//! * divergent if they are nondecreasing and the least-squares slope of
//!   `ln D_k` against `ln 2^k` over the last (up to six) blocks exceeds 0 by
//!   more than two standard errors of the fit;
//! * inconclusive otherwise.

use serde::{Deserialize, Serialize};

use crate::parallel::map_indexed;
use crate::special::LnFactorial;

/// Largest decay exponent (in `ln k`) accepted as summable.
pub const DECAY_THRESHOLD: f64 = -1.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Finite,
    Divergent,
    Inconclusive,
}

/// Slope of `ln D_k` against `ln m_k` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub exponent: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesScan {
    /// `S(m)` at the requested truncation.
    pub partial: f64,
    /// `(m, S(m))` at `m = 1, 2, 4, ...` and the final truncation.
    pub trace: Vec<(u64, f64)>,
    /// Fit against `ln m`; positive means the increments grow.
    pub growth: Option<GrowthFit>,
    /// Fit against `ln k` for `m = 2^k`; below -1 means summable blocks.
    pub decay: Option<GrowthFit>,
    pub status: Status,
}

/// Cumulative sums of nonnegative `terms[0..=m]`, with the verdict.
pub fn scan_series(terms: &[f64]) -> SeriesScan {
    let mut trace = Vec::new();
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    let mut next = 1u64;
    for (n, &t) in terms.iter().enumerate() {
        // Neumaier summation
        let s = sum + t;
        if sum.abs() >= t.abs() {
            comp += (sum - s) + t;
        } else {
            comp += (t - s) + sum;
        }
        sum = s;
        if n as u64 == next {
            trace.push((next, sum + comp));
            next *= 2;
        }
    }
    let partial = sum + comp;
    let last = terms.len().saturating_sub(1) as u64;
    if trace.last().map(|(m, _)| *m) != Some(last) {
        trace.push((last, partial));
    }
    let dyadic: Vec<(u64, f64)> = trace.iter().copied().filter(|(m, _)| m.is_power_of_two()).collect();
    let increments: Vec<(u64, f64)> = dyadic.windows(2).map(|w| (w[1].0, w[1].1 - w[0].1)).collect();
    let growth = fit_log_log(&increments, |m| (m as f64).ln());
    let decay = fit_log_log(&increments, |m| (m.trailing_zeros() as f64).ln());
    let status = decide(&increments, growth, decay, partial);
    SeriesScan { partial, trace, growth, decay, status }
}

fn fit_log_log(increments: &[(u64, f64)], abscissa: impl Fn(u64) -> f64) -> Option<GrowthFit> {
    let pts: Vec<(f64, f64)> = increments
        .iter()
        .rev()
        .take(6)
        .filter(|(m, d)| *d > 0.0 && *m >= 4)
        .map(|&(m, d)| (abscissa(m), d.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let resid: f64 = pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
    let stderr = (resid / (n - 2.0) / sxx).sqrt();
    Some(GrowthFit { exponent: slope, stderr })
}

fn decide(increments: &[(u64, f64)], growth: Option<GrowthFit>, decay: Option<GrowthFit>, partial: f64) -> Status {
    if increments.len() < 3 {
        return Status::Inconclusive;
    }
    let d: Vec<f64> = increments[increments.len() - 3..].iter().map(|p| p.1).collect();
    if d[2] <= 1e-15 * partial.abs() {
        return Status::Finite;
    }
    if d[0] > d[1] && d[1] > d[2] {
        if let Some(g) = decay {
            if g.exponent + 2.0 * g.stderr < DECAY_THRESHOLD {
                return Status::Finite;
            }
        }
    }
    if d[0] <= d[1] && d[1] <= d[2] {
        if let Some(g) = growth {
            if g.exponent - 2.0 * g.stderr > 0.0 {
                return Status::Divergent;
            }
        }
    }
    Status::Inconclusive
}

/// Terms `exp(ln_phi_sq(n) + theta ln(n + 1)) P(N = n)` for `N ~ Poisson(lambda)`,
/// `n = 0..=m`. `ln_phi_sq` returns `ln phi(n)^2` (`-inf` for a zero).
pub fn poisson_series_terms<F>(lambda: f64, theta: f64, m: u64, ln_phi_sq: F) -> Vec<f64>
where
    F: Fn(u64) -> f64 + Sync + Send,
{
    let table = LnFactorial::new(m as usize);
    map_indexed(m as usize + 1, |n| {
        let n = n as u64;
        let lp = ln_phi_sq(n);
        if lp == f64::NEG_INFINITY {
            return 0.0;
        }
        (lp + theta * ((n + 1) as f64).ln() + table.ln_poisson_pmf(n, lambda)).exp()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_profile_gives_mean_of_n_plus_one() {
        let terms = poisson_series_terms(2.0, 1.0, 200, |_| 0.0);
        let s = scan_series(&terms);
        assert!((s.partial - 3.0).abs() < 1e-12);
        assert_eq!(s.status, Status::Finite);
    }

    #[test]
    fn single_term() {
        let terms = poisson_series_terms(2.0, 0.7, 64, |n| if n == 0 { 0.0 } else { f64::NEG_INFINITY });
        let s = scan_series(&terms);
        assert_eq!(s.partial, (-2.0f64).exp());
        assert_eq!(s.status, Status::Finite);
    }

    #[test]
    fn polynomial_growth_is_divergent() {
        let terms: Vec<f64> = (0..=4096u64).map(|n| n as f64).collect();
        let s = scan_series(&terms);
        assert_eq!(s.status, Status::Divergent);
        let g = s.growth.unwrap();
        assert!((g.exponent - 2.0).abs() < 0.05, "{g:?}");
    }

    #[test]
    fn harmonic_increments_approach_ln2_from_below() {
        let terms: Vec<f64> = (0..=1u64 << 16).map(|n| if n == 0 { 0.0 } else { 1.0 / n as f64 }).collect();
        assert_eq!(scan_series(&terms).status, Status::Divergent);
    }

    #[test]
    fn log_divergence_is_undecided() {
        let terms: Vec<f64> =
            (0..=1u64 << 18).map(|n| if n < 2 { 0.0 } else { 1.0 / (n as f64 * (n as f64).ln()) }).collect();
        assert_eq!(scan_series(&terms).status, Status::Inconclusive);
    }

    #[test]
    fn log_squared_decay_is_finite() {
        let terms: Vec<f64> =
            (0..=1u64 << 20).map(|n| if n < 2 { 0.0 } else { 1.0 / (n as f64 * (n as f64).ln().powi(2)) }).collect();
        let s = scan_series(&terms);
        assert_eq!(s.status, Status::Finite, "{:?}", s.decay);
    }

    #[test]
    fn log_power_one_and_a_half_is_finite() {
        let terms: Vec<f64> =
            (0..=1u64 << 20).map(|n| if n < 2 { 0.0 } else { 1.0 / (n as f64 * (n as f64).ln().powf(1.5)) }).collect();
        let s = scan_series(&terms);
        assert_eq!(s.status, Status::Finite, "{:?}", s.decay);
    }

    #[test]
    fn trace_is_dyadic_plus_final() {
        let terms = vec![1.0; 11];
        let s = scan_series(&terms);
        let ms: Vec<u64> = s.trace.iter().map(|t| t.0).collect();
        assert_eq!(ms, vec![1, 2, 4, 8, 10]);
        assert_eq!(s.trace[3].1, 9.0);
    }
}

//! The Young pair `Phi(x) = (x + 1) ln(x + 1) - x`, `Phi*(x) = e^x - x - 1`,
//! the `L2 log+ L2` moment, and the counterexample family
//! `f(n) = sqrt(e^lambda n! / (lambda^n n^2 ln^a n))` (`f(0) = f(1) = 0`)
//! that lies in `D_{1,2}` but not in `L2 log+ L2`.
//!
//! Ratios `n! / lambda^n` are only ever formed in log space.

use serde::{Deserialize, Serialize};

use crate::dsl::{Functional, PathFunctional};
use crate::error::{Error, Result};
use crate::estimate::{combined_stderr, Estimate};
use crate::model::{BoxSet, JumpModel};
use crate::parallel::{map_indexed, try_map_indexed};
use crate::rng::SeedSpec;
use crate::simulate::sample_path;
use crate::smoothness::{scan_series, SeriesScan, Status};
use crate::special::{ln_factorial_integral_bound, ln_plus, LnFactorial};

/// `Phi(x) = int_0^x ln(1 + y) dy`.
pub fn young_phi(x: f64) -> f64 {
    (x + 1.0) * x.ln_1p() - x
}

/// `Phi*(y) = e^y - y - 1`.
pub fn young_phi_star(y: f64) -> f64 {
    y.exp_m1() - y
}

/// `phi(y) = ln(1 + y)`, the derivative of `Phi`.
pub fn young_density(y: f64) -> f64 {
    y.ln_1p()
}

/// `(x y, Phi(x) + Phi*(y))`.
pub fn young_check(x: f64, y: f64) -> Result<(f64, f64)> {
    if !(x >= 0.0 && y >= 0.0) {
        return Err(Error::InvalidArgument(format!("Young inequality needs x, y >= 0, got ({x}, {y})")));
    }
    Ok((x * y, young_phi(x) + young_phi_star(y)))
}

/// `E[Phi*(N)]` for `N ~ Poisson(lambda)` and the looser published form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiStarMoment {
    /// `e^{(e - 1) lambda} - lambda - 1`.
    pub exact: f64,
    /// `e^{(e - 1) lambda} - lambda`.
    pub bound: f64,
}

pub fn phi_star_moment(lambda: f64) -> Result<PhiStarMoment> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    let grow = ((std::f64::consts::E - 1.0) * lambda).exp_m1();
    Ok(PhiStarMoment { exact: grow - lambda, bound: grow - lambda + 1.0 })
}

fn check_family(lambda: f64, a: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    if !(a > 1.0 && a <= 2.0) {
        return Err(Error::InvalidArgument(format!("exponent a must lie in (1, 2], got {a}")));
    }
    Ok(())
}

/// `ln f(n)^2`, `-inf` for `n < 2`.
pub fn counterexample_ln_f_sq(n: u64, lambda: f64, a: f64, table: &LnFactorial) -> f64 {
    if n < 2 {
        return f64::NEG_INFINITY;
    }
    let ln_n = (n as f64).ln();
    lambda + table.get(n) - n as f64 * lambda.ln() - 2.0 * ln_n - a * ln_n.ln()
}

/// `f(n)`.
pub fn counterexample_f(n: u64, lambda: f64, a: f64) -> Result<f64> {
    check_family(lambda, a)?;
    let table = LnFactorial::new(n.min(1 << 20) as usize);
    Ok((0.5 * counterexample_ln_f_sq(n, lambda, a, &table)).exp())
}

/// Monte Carlo `E[Y^2 ln+ Y^2]`.
pub fn l2log_norm(model: &JumpModel, f: &dyn PathFunctional, samples: usize, seed: u64) -> Result<Estimate> {
    model.ensure_in_scope()?;
    let root = SeedSpec::new(seed, 0);
    let values = try_map_indexed(samples, |i| -> Result<f64> {
        let y = f.eval(&sample_path(model, root.child(i as u64)))?;
        let y2 = y * y;
        Ok(y2 * ln_plus(y2))
    })?;
    Ok(Estimate::from_samples(&values, seed))
}

fn l2log_terms(lambda: f64, m: u64, ln_f_sq: impl Fn(u64) -> f64 + Sync + Send, table: &LnFactorial) -> Vec<f64> {
    map_indexed(m as usize + 1, |n| {
        let lf = ln_f_sq(n as u64);
        if lf == f64::NEG_INFINITY {
            return 0.0;
        }
        (lf + table.ln_poisson_pmf(n as u64, lambda)).exp() * lf.max(0.0)
    })
}

/// Exact `sum_{n <= m} phi(n)^2 ln+ phi(n)^2 P(N(A) = n)` for `Y = phi(N(A))`.
pub fn l2log_series(model: &JumpModel, f: &Functional, a: &BoxSet, m: u64) -> Result<SeriesScan> {
    model.ensure_in_scope()?;
    let phi = f.count_profile(a)?;
    let values = try_map_indexed(m as usize + 1, |n| phi(n as u64))?;
    let table = LnFactorial::new(m as usize);
    let ln_sq = |n: u64| {
        let v = values[n as usize];
        if v == 0.0 {
            f64::NEG_INFINITY
        } else {
            2.0 * v.abs().ln()
        }
    };
    Ok(scan_series(&l2log_terms(model.expected_count(a), m, ln_sq, &table)))
}

/// Per-term comparison showing that `E[f(N)^2 ln+ f(N)^2]` diverges.
///
/// With `ln n! >= n ln n - n + 1`, each term is at least
/// `L_n = (lambda + n ln n - n + 1 - n ln lambda - 2 ln n - a ln ln n) / (n^2 ln^a n)`,
/// and `L_n / h_n -> 1` for `h_n = 1 / (n ln^{a-1} n)`. Since `a - 1 <= 1`,
/// `sum h_n` diverges by the integral test, so any range on which
/// `L_n >= c h_n` holds for all `n >= n0` certifies divergence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceCertificate {
    pub lambda: f64,
    pub a: f64,
    /// Constant `c` in `L_n >= c h_n`.
    pub constant: f64,
    /// First index from which the comparison holds throughout the scan.
    pub start: u64,
    pub checked_to: u64,
    /// `min L_n / h_n` over `[start, checked_to]`.
    pub min_ratio: f64,
    /// Every exact term is at least its lower bound `L_n` on the range.
    pub terms_dominate: bool,
    /// `sum_{start}^{checked_to} c h_n`.
    pub harmonic_partial: f64,
    pub certified: bool,
}

/// Exact partial sums of the `L2 log+ L2` series of the counterexample and
/// its divergence certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleSeries {
    pub scan: SeriesScan,
    pub certificate: DivergenceCertificate,
}

pub fn counterexample_l2log(lambda: f64, a: f64, m: u64) -> Result<CounterexampleSeries> {
    check_family(lambda, a)?;
    if m < 16 {
        return Err(Error::InvalidArgument(format!("truncation {m} is too short to certify anything")));
    }
    let table = LnFactorial::new(m as usize);
    let terms = l2log_terms(lambda, m, |n| counterexample_ln_f_sq(n, lambda, a, &table), &table);
    let mut scan = scan_series(&terms);
    let constant = 0.5;
    let rows = map_indexed(m as usize + 1, |n| {
        if n < 3 {
            return (f64::NAN, true);
        }
        let n = n as u64;
        let (nf, ln_n) = (n as f64, (n as f64).ln());
        let lower_num = lambda + ln_factorial_integral_bound(n) - nf * lambda.ln() - 2.0 * ln_n - a * ln_n.ln();
        let denom = nf * nf * ln_n.powf(a);
        let lower = lower_num.max(0.0) / denom;
        let ratio = lower_num / (nf * ln_n);
        (ratio, terms[n as usize] >= lower * (1.0 - 1e-12))
    });
    // smallest start after which the ratio never drops below the constant
    let mut start = m;
    while start > 3 && rows[start as usize - 1].0 >= constant {
        start -= 1;
    }
    let range = start as usize..=m as usize;
    let min_ratio = rows[range.clone()].iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let terms_dominate = rows[range.clone()].iter().all(|r| r.1);
    let harmonic_partial: f64 = range
        .map(|n| {
            let ln_n = (n as f64).ln();
            constant / (n as f64 * ln_n.powf(a - 1.0))
        })
        .sum();
    let certified = a - 1.0 <= 1.0 && terms_dominate && min_ratio >= constant && start < m / 2;
    if certified {
        scan.status = Status::Divergent;
    }
    Ok(CounterexampleSeries {
        scan,
        certificate: DivergenceCertificate {
            lambda,
            a,
            constant,
            start,
            checked_to: m,
            min_ratio,
            terms_dominate,
            harmonic_partial,
            certified,
        },
    })
}

/// Terms of `E[N(A) f(N(A))^2] = sum_{n >= 2} 1 / (n ln^a n)` up to `m`,
/// evaluated through the log-space formula.
pub fn counterexample_d12_terms(lambda: f64, a: f64, m: u64) -> Result<Vec<f64>> {
    check_family(lambda, a)?;
    let table = LnFactorial::new(m as usize);
    Ok(map_indexed(m as usize + 1, |n| {
        let lf = counterexample_ln_f_sq(n as u64, lambda, a, &table);
        if lf == f64::NEG_INFINITY {
            0.0
        } else {
            (lf + (n as f64).ln() + table.ln_poisson_pmf(n as u64, lambda)).exp()
        }
    }))
}

/// Both sides of `E[Y^2 N(A)] <= 1 + E[Y^2 ln+ Y^2] + e^{(e-1) lambda} - lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InclusionReport {
    /// `E[Y^2 N(A)]`.
    pub lhs: Estimate,
    /// `E[Phi(Y^2)] + E[Phi*(N(A))]`, the middle of the chain.
    pub young: Estimate,
    /// `1 + E[Y^2 ln+ Y^2] + e^{(e-1) lambda} - lambda`.
    pub bound: Estimate,
    pub pass: bool,
}

pub fn inclusion_check(
    model: &JumpModel,
    f: &dyn PathFunctional,
    a: &BoxSet,
    samples: usize,
    seed: u64,
    sigma_multiplier: f64,
) -> Result<InclusionReport> {
    let pairs = crate::smoothness::sample_pairs(model, f, a, samples, seed)?;
    let lambda = model.expected_count(a);
    let star = phi_star_moment(lambda)?;
    let col = |g: &dyn Fn(f64, u64) -> f64| {
        let v: Vec<f64> = pairs.iter().map(|&(y, n)| g(y, n)).collect();
        Estimate::from_samples(&v, seed)
    };
    let lhs = col(&|y, n| y * y * n as f64);
    let phi = col(&|y, _| young_phi(y * y));
    let l2log = col(&|y, _| y * y * ln_plus(y * y));
    let young = Estimate::new(phi.mean + star.exact, phi.stderr, samples, seed);
    let bound = Estimate::new(1.0 + l2log.mean + star.bound, l2log.stderr, samples, seed);
    let slack = sigma_multiplier * combined_stderr(&[lhs.stderr, bound.stderr]);
    Ok(InclusionReport { lhs, young, bound, pass: lhs.mean <= bound.mean + slack })
}

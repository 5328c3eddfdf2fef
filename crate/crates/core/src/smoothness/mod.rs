//! Weighted norms, the derivative sandwich, the norm equivalence, the
//! K-functional surrogate and the interpolation norm, plus a finite/divergent
//! classifier.
//!
//! All Monte Carlo estimators in this module draw path `i` from stream
//! `SeedSpec::new(seed, 0).child(i)`, so estimators called with the same seed
//! see the same paths (common random numbers).

mod quadrature;
mod series;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use quadrature::{
    closed_form_theta_integral, theta_integral_quadrature, LogGrid, Quadrature, TAIL_WARNING_FRACTION,
};
pub use series::{poisson_series_terms, scan_series, GrowthFit, SeriesScan, Status};

use crate::dsl::{EvalError, Functional, PathFunctional};
use crate::error::{Error, Result};
use crate::estimate::{combined_stderr, Estimate};
use crate::malliavin::derivative_norm_sq;
use crate::model::{BoxSet, JumpModel};
use crate::parallel::try_map_indexed;
use crate::rng::SeedSpec;
use crate::simulate::{sample_path, JumpPath};

/// Default truncation index for exact series.
pub const DEFAULT_TRUNCATION: u64 = 1 << 20;

/// `(Y, N(A))` on paths `0..samples`.
pub fn sample_pairs(
    model: &JumpModel,
    f: &dyn PathFunctional,
    a: &BoxSet,
    samples: usize,
    seed: u64,
) -> Result<Vec<(f64, u64)>> {
    model.ensure_in_scope()?;
    let root = SeedSpec::new(seed, 0);
    try_map_indexed(samples, |i| -> Result<(f64, u64)> {
        let path = sample_path(model, root.child(i as u64));
        Ok((f.eval(&path)?, path.count_in(a) as u64))
    })
}

fn moment(pairs: &[(f64, u64)], seed: u64, w: impl Fn(f64, u64) -> f64) -> Estimate {
    let v: Vec<f64> = pairs.iter().map(|&(y, n)| w(y, n)).collect();
    Estimate::from_samples(&v, seed)
}

fn check_unit(theta: f64, closed_right: bool) -> Result<()> {
    let ok = theta >= 0.0 && (theta < 1.0 || (closed_right && theta == 1.0));
    if !ok {
        return Err(Error::InvalidArgument(format!("theta = {theta} is outside its range")));
    }
    Ok(())
}

/// `E[Y^2 (N(A) + 1)^theta]`.
pub fn weighted_norm_sq(
    model: &JumpModel,
    f: &dyn PathFunctional,
    a: &BoxSet,
    theta: f64,
    samples: usize,
    seed: u64,
) -> Result<Estimate> {
    check_unit(theta, true)?;
    let pairs = sample_pairs(model, f, a, samples, seed)?;
    Ok(moment(&pairs, seed, |y, n| y * y * ((n + 1) as f64).powf(theta)))
}

/// `||Y sqrt(N(A) + 1)^theta||_{L2}`.
pub fn weighted_norm(
    model: &JumpModel,
    f: &dyn PathFunctional,
    a: &BoxSet,
    theta: f64,
    samples: usize,
    seed: u64,
) -> Result<Estimate> {
    Ok(weighted_norm_sq(model, f, a, theta, samples, seed)?.sqrt())
}

/// `sum_{n <= m} phi(n)^2 (n + 1)^theta P(N(A) = n)` for `Y = phi(N(A))`.
pub fn exact_series_norm(model: &JumpModel, f: &Functional, a: &BoxSet, theta: f64, m: u64) -> Result<SeriesScan> {
    check_unit(theta, true)?;
    model.ensure_in_scope()?;
    let phi = f.count_profile(a)?;
    let values = try_map_indexed(m as usize + 1, |n| phi(n as u64))?;
    let terms = poisson_series_terms(model.expected_count(a), theta, m, |n| ln_sq(values[n as usize]));
    Ok(scan_series(&terms))
}

fn ln_sq(v: f64) -> f64 {
    if v == 0.0 {
        f64::NEG_INFINITY
    } else {
        2.0 * v.abs().ln()
    }
}

/// Estimates behind `|a - b| <= d <= a + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    /// `||Y sqrt(N(A))||`.
    pub a: Estimate,
    /// `||Y|| sqrt(E N(A))`.
    pub b: Estimate,
    /// `||D Y 1_A||`.
    pub d: Estimate,
    /// Combined standard error of the three.
    pub sigma: f64,
    pub lower_holds: bool,
    /// Only asserted when `Y` is certified F_A-measurable.
    pub upper_holds: Option<bool>,
}

impl SandwichReport {
    pub fn pass(&self) -> bool {
        self.lower_holds && self.upper_holds.unwrap_or(true)
    }
}

/// The two-sided derivative bound. `certified` says whether the functional
/// is F_A-measurable, which the upper inequality needs.
pub fn sandwich_check(
    model: &JumpModel,
    f: &dyn PathFunctional,
    a: &BoxSet,
    certified: bool,
    samples: usize,
    seed: u64,
    sigma_multiplier: f64,
) -> Result<SandwichReport> {
    let pairs = sample_pairs(model, f, a, samples, seed)?;
    let lambda = model.expected_count(a);
    let an = moment(&pairs, seed, |y, n| y * y * n as f64).sqrt();
    let bn = moment(&pairs, seed, |y, _| y * y).sqrt().scale(lambda.sqrt());
    let d = if model.m_measure(a)? > 0.0 {
        derivative_norm_sq(model, f, a, samples, seed)?.sqrt()
    } else {
        Estimate::exact(0.0)
    };
    let sigma = combined_stderr(&[an.stderr, bn.stderr, d.stderr]);
    let slack = sigma_multiplier * sigma + 1e-12 * (an.mean + bn.mean).max(1.0);
    Ok(SandwichReport {
        a: an,
        b: bn,
        d,
        sigma,
        lower_holds: (an.mean - bn.mean).abs() <= d.mean + slack,
        upper_holds: certified.then_some(d.mean <= an.mean + bn.mean + slack),
    })
}

/// Statistic compared against a two-sided band `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandReport {
    pub value: Estimate,
    pub lower: f64,
    pub upper: f64,
    pub pass: bool,
}

impl BandReport {
    fn new(value: Estimate, lower: f64, upper: f64, sigma_multiplier: f64) -> Self {
        let slack = sigma_multiplier * value.stderr;
        let pass = value.mean >= lower - slack && value.mean <= upper + slack;
        Self { value, lower, upper, pass }
    }
}

/// `sqrt(2) (sqrt(E N(A)) + 1)`.
pub fn equivalence_constant(model: &JumpModel, a: &BoxSet) -> f64 {
    std::f64::consts::SQRT_2 * (model.expected_count(a).sqrt() + 1.0)
}

fn ratio(num: Estimate, den: Estimate) -> Estimate {
    let r = num.mean / den.mean;
    let rel = |e: &Estimate| {
        if e.mean != 0.0 {
            e.stderr / e.mean.abs()
        } else {
            0.0
        }
    };
    let se = r.abs() * (rel(&num).powi(2) + rel(&den).powi(2)).sqrt();
    Estimate::new(r, se, num.samples, num.seed)
}

/// `(||Y||^2 + ||DY||^2)^{1/2}`, the `D_{1,2}` norm, for an F_A-measurable `Y`
/// (whose derivative vanishes off `A`).
fn d12_norm(
    model: &JumpModel,
    f: &dyn PathFunctional,
    a: &BoxSet,
    pairs: &[(f64, u64)],
    samples: usize,
    seed: u64,
) -> Result<Estimate> {
    let y2 = moment(pairs, seed, |y, _| y * y);
    let dy2 =
        if model.m_measure(a)? > 0.0 { derivative_norm_sq(model, f, a, samples, seed)? } else { Estimate::exact(0.0) };
    let sum = Estimate::new(y2.mean + dy2.mean, combined_stderr(&[y2.stderr, dy2.stderr]), samples, seed);
    Ok(sum.sqrt())
}

/// `||Y||_{D_{1,2}} / ||Y sqrt(N(A) + 1)||` against `[1/c, c]`.
pub fn equivalence_ratio(
    model: &JumpModel,
    f: &Functional,
    a: &BoxSet,
    samples: usize,
    seed: u64,
    sigma_multiplier: f64,
) -> Result<BandReport> {
    f.measurability(a).into_result()?;
    let pairs = sample_pairs(model, f, a, samples, seed)?;
    let num = d12_norm(model, f, a, &pairs, samples, seed)?;
    let den = moment(&pairs, seed, |y, n| y * y * (n + 1) as f64).sqrt();
    let c = equivalence_constant(model, a);
    Ok(BandReport::new(ratio(num, den), 1.0 / c, c, sigma_multiplier))
}

/// `||Y min{1, s sqrt(N(A) + 1)}||`.
pub fn k_surrogate(
    model: &JumpModel,
    f: &dyn PathFunctional,
    a: &BoxSet,
    s: f64,
    samples: usize,
    seed: u64,
) -> Result<Estimate> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidArgument(format!("scale s must be positive, got {s}")));
    }
    let pairs = sample_pairs(model, f, a, samples, seed)?;
    Ok(surrogate_from_pairs(&pairs, s, seed))
}

fn surrogate_from_pairs(pairs: &[(f64, u64)], s: f64, seed: u64) -> Estimate {
    moment(pairs, seed, |y, n| {
        let w = (s * ((n + 1) as f64).sqrt()).min(1.0);
        y * y * w * w
    })
    .sqrt()
}

/// `||Y_0|| + s ||Y_1||_{D_{1,2}}` for `Y_0 = Y 1{sqrt(N(A) + 1) > 1/s}` and
/// `Y_1 = Y - Y_0`, an explicit split bounding the K-functional from above.
pub fn k_upper(model: &JumpModel, f: &Functional, a: &BoxSet, s: f64, samples: usize, seed: u64) -> Result<Estimate> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidArgument(format!("scale s must be positive, got {s}")));
    }
    f.measurability(a).into_result()?;
    let high = |path: &JumpPath| ((path.count_in(a) + 1) as f64).sqrt() > 1.0 / s;
    let y1 = |path: &JumpPath| -> std::result::Result<f64, EvalError> {
        if high(path) {
            Ok(0.0)
        } else {
            f.evaluate(path)
        }
    };
    let pairs = sample_pairs(model, f, a, samples, seed)?;
    let y0 = moment(&pairs, seed, |y, n| if ((n + 1) as f64).sqrt() > 1.0 / s { y * y } else { 0.0 }).sqrt();
    let y1_pairs = sample_pairs(model, &y1, a, samples, seed)?;
    let y1_norm = d12_norm(model, &y1, a, &y1_pairs, samples, seed)?;
    let mean = y0.mean + s * y1_norm.mean;
    let se = combined_stderr(&[y0.stderr, s * y1_norm.stderr]);
    Ok(Estimate::new(mean, se, samples, seed))
}

/// Interpolation norm estimate with its quadrature diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpolationEstimate {
    pub norm: Estimate,
    /// Quadrature error bound carried to the norm.
    pub quadrature_error: f64,
    /// Largest share of any per-path integral that came from the tails.
    pub tail_fraction: f64,
    /// Grid narrower than `[1e-3, 1e3]` or tails above the warning share.
    pub tail_warning: bool,
}

/// `[int_0^inf s^{-2 theta} surrogate(s)^2 ds/s]^{1/2}`.
///
/// The squared surrogate is a path average of `Y^2 min{1, s^2 (N + 1)}`,
/// so the s-integral is applied per path (the quadrature is linear) and
/// cached by `N`.
pub fn interpolation_norm(
    model: &JumpModel,
    f: &dyn PathFunctional,
    a: &BoxSet,
    theta: f64,
    samples: usize,
    seed: u64,
    grid: &LogGrid,
) -> Result<InterpolationEstimate> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidArgument(format!("theta must lie in (0, 1), got {theta}")));
    }
    let pairs = sample_pairs(model, f, a, samples, seed)?;
    let mut cache: BTreeMap<u64, Quadrature> = BTreeMap::new();
    for &(_, n) in &pairs {
        if let std::collections::btree_map::Entry::Vacant(e) = cache.entry(n) {
            e.insert(theta_integral_quadrature(((n + 1) as f64).sqrt(), theta, grid)?);
        }
    }
    let sq = moment(&pairs, seed, |y, n| y * y * cache[&n].value);
    let err_sq = pairs.iter().map(|&(y, n)| y * y * cache[&n].error).sum::<f64>() / pairs.len().max(1) as f64;
    let norm = sq.sqrt();
    let quadrature_error = if norm.mean > 0.0 { err_sq / (2.0 * norm.mean) } else { err_sq.sqrt() };
    let tail_fraction = cache.values().map(Quadrature::tail_fraction).fold(0.0, f64::max);
    Ok(InterpolationEstimate {
        norm,
        quadrature_error,
        tail_fraction,
        tail_warning: !grid.is_wide() || tail_fraction > TAIL_WARNING_FRACTION,
    })
}

/// `interpolation_norm / weighted_norm` against `[1/C, C]` with
/// `C = sqrt(2) (sqrt(E N(A)) + 1) / sqrt(theta (1 - theta))`.
#[allow(clippy::too_many_arguments)]
pub fn interpolation_band(
    model: &JumpModel,
    f: &dyn PathFunctional,
    a: &BoxSet,
    theta: f64,
    samples: usize,
    seed: u64,
    grid: &LogGrid,
    sigma_multiplier: f64,
) -> Result<BandReport> {
    let i = interpolation_norm(model, f, a, theta, samples, seed, grid)?;
    let w = weighted_norm(model, f, a, theta, samples, seed)?;
    let c = equivalence_constant(model, a) / (theta * (1.0 - theta)).sqrt();
    let mut r = ratio(i.norm, w);
    if w.mean > 0.0 {
        r.stderr += i.quadrature_error / w.mean;
    }
    Ok(BandReport::new(r, 1.0 / c, c, sigma_multiplier))
}

/// Both sides of `||Y||_theta^2 = E[Y^2 (N(A) + 1)^theta] / (2 theta (1 - theta))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FubiniReport {
    pub interpolation_sq: f64,
    pub weighted_sq_scaled: f64,
    pub abs_diff: f64,
    /// Quadrature error on the squared norm plus `1e-12` relative slack.
    /// Both sides use the same paths, so sampling noise cancels.
    pub tolerance: f64,
    pub pass: bool,
    pub quadrature: InterpolationEstimate,
}

pub fn fubini_check(
    model: &JumpModel,
    f: &dyn PathFunctional,
    a: &BoxSet,
    theta: f64,
    samples: usize,
    seed: u64,
    grid: &LogGrid,
) -> Result<FubiniReport> {
    let i = interpolation_norm(model, f, a, theta, samples, seed, grid)?;
    let w = weighted_norm_sq(model, f, a, theta, samples, seed)?;
    let lhs = i.norm.mean * i.norm.mean;
    let rhs = w.mean / (2.0 * theta * (1.0 - theta));
    let abs_diff = (lhs - rhs).abs();
    let tolerance = 2.0 * i.norm.mean * i.quadrature_error + 1e-12 * lhs.max(rhs);
    Ok(FubiniReport {
        interpolation_sq: lhs,
        weighted_sq_scaled: rhs,
        abs_diff,
        tolerance,
        pass: abs_diff <= tolerance,
        quadrature: i,
    })
}

/// Inputs for [`classify`].
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothnessQuery {
    pub a: BoxSet,
    /// In `(0, 1]`; `1` means `D_{1,2}`.
    pub theta: f64,
    pub samples: usize,
    pub seed: u64,
    /// Series truncation in exact mode; in Monte Carlo mode, the level `m`
    /// whose last doubling is checked.
    pub truncation: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    ExactSeries,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub status: Status,
    pub mode: Mode,
    /// `||Y sqrt(N(A) + 1)^theta||`; exact in series mode.
    pub weighted_norm: Estimate,
    pub growth: Option<GrowthFit>,
    pub decay: Option<GrowthFit>,
    pub trace: Vec<(u64, f64)>,
}

/// Whether `Y` lies in the `theta`-interpolation space (or `D_{1,2}` for
/// `theta = 1`), i.e. whether `E[Y^2 N(A)^theta]` is finite.
pub fn classify(model: &JumpModel, f: &Functional, q: &SmoothnessQuery) -> Result<Verdict> {
    if !(q.theta > 0.0 && q.theta <= 1.0) {
        return Err(Error::InvalidArgument(format!("theta must lie in (0, 1], got {}", q.theta)));
    }
    f.measurability(&q.a).into_result()?;
    if f.count_profile(&q.a).is_ok() {
        let scan = exact_series_norm(model, f, &q.a, q.theta, q.truncation)?;
        return Ok(verdict_from_scan(scan));
    }
    classify_by_sampling(model, f, q)
}

/// Exact-mode classification for `Y = phi(N(A))` given `ln phi(n)^2`
/// directly, for profiles the expression language cannot write.
pub fn classify_profile<F>(lambda: f64, theta: f64, m: u64, ln_phi_sq: F) -> Result<Verdict>
where
    F: Fn(u64) -> f64 + Sync + Send,
{
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidArgument(format!("theta must lie in (0, 1], got {theta}")));
    }
    Ok(verdict_from_scan(scan_series(&poisson_series_terms(lambda, theta, m, ln_phi_sq))))
}

fn verdict_from_scan(scan: SeriesScan) -> Verdict {
    Verdict {
        status: scan.status,
        mode: Mode::ExactSeries,
        weighted_norm: Estimate::exact(scan.partial.sqrt()),
        growth: scan.growth,
        decay: scan.decay,
        trace: scan.trace,
    }
}

fn classify_by_sampling(model: &JumpModel, f: &Functional, q: &SmoothnessQuery) -> Result<Verdict> {
    let pairs = sample_pairs(model, f, &q.a, q.samples, q.seed)?;
    let m = q.truncation.max(2);
    let weight = |y: f64, n: u64| y * y * (n as f64).powf(q.theta);
    let top = moment(&pairs, q.seed, |y, n| if n > m / 2 { weight(y, n) } else { 0.0 });
    let mut trace = Vec::new();
    let mut level = 1u64;
    while level <= m {
        let t =
            pairs.iter().filter(|p| p.1 <= level).map(|&(y, n)| weight(y, n)).sum::<f64>() / pairs.len().max(1) as f64;
        trace.push((level, t));
        level *= 2;
    }
    let still_growing = top.mean > 3.0 * top.stderr || pairs.iter().any(|p| p.1 > m);
    Ok(Verdict {
        status: if still_growing { Status::Inconclusive } else { Status::Finite },
        mode: Mode::MonteCarlo,
        weighted_norm: moment(&pairs, q.seed, |y, n| y * y * ((n + 1) as f64).powf(q.theta)).sqrt(),
        growth: None,
        decay: None,
        trace,
    })
}

//! The derivative `D_{t,x}` on the pure-jump space.
//!
//! For a functional `F` of the jump measure, `D_{t,x} F` is the add-one-jump
//! quotient `(F(X + x 1_[t, inf)) - F(X)) / x`. On step-function chaos it is
//! the shift `sum_n n I_{n-1}(f~_n(., (t, x)))`; the two agree pathwise.

use serde::{Deserialize, Serialize};

use crate::chaos::CoefficientGrid;
use crate::dsl::{EvalError, Lipschitz, PathFunctional};
use crate::error::{Error, Result};
use crate::estimate::Estimate;
use crate::model::{BoxSet, JumpModel, PointMeasure};
use crate::parallel::try_map_indexed;
use crate::rng::{Purpose, SeedSpec};
use crate::simulate::{sample_path, sample_with, JumpPath};

/// Argument `(t, x)` of `D_{t,x}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivativePoint {
    pub t: f64,
    pub x: f64,
}

impl DerivativePoint {
    pub fn new(t: f64, x: f64) -> Result<Self> {
        if x == 0.0 || !x.is_finite() {
            return Err(Error::ZeroJump);
        }
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::InvalidArgument(format!("derivative time {t} must be finite and nonnegative")));
        }
        Ok(Self { t, x })
    }

    fn shifted(&self, path: &JumpPath) -> JumpPath {
        path.add_jump(self.t, self.x).expect("point validated on construction")
    }
}

/// `(F(X + x 1_[t, inf)) - F(X)) / x`.
pub fn derivative_quotient(f: &dyn PathFunctional, path: &JumpPath, p: DerivativePoint) -> Result<f64> {
    let plus = f.eval(&p.shifted(path))?;
    let base = f.eval(path)?;
    Ok((plus - base) / p.x)
}

/// `sum_n n I_{n-1}(f~_n(., (t, x)))` on one path. Points outside every cell
/// give zero.
pub fn derivative_chaos(model: &JumpModel, grid: &CoefficientGrid, path: &JumpPath, p: DerivativePoint) -> Result<f64> {
    if !grid.is_symmetric() {
        return Err(Error::NotSymmetric);
    }
    model.ensure_in_scope()?;
    let part = grid.partition();
    let Some(cell) = part.cell_of(p.t, p.x) else {
        return Ok(0.0);
    };
    Ok(grid.shifted_eval(cell, &part.m_values(model, path)))
}

/// `||D Y 1_A||^2_{L2(m x P)}`, estimated by drawing `(t, x)` from `m`
/// restricted to `A` and an independent path per sample, weighted by `m(A)`.
pub fn derivative_norm_sq(
    model: &JumpModel,
    f: &dyn PathFunctional,
    a: &BoxSet,
    samples: usize,
    seed: u64,
) -> Result<Estimate> {
    let mass = model.m_measure(a)?;
    if mass <= 0.0 {
        return Err(Error::InvalidArgument("derivative norm needs m(A) > 0".into()));
    }
    let root = SeedSpec::new(seed, 0);
    let values = try_map_indexed(samples, |i| -> Result<f64> {
        let s = root.child(i as u64);
        let path = sample_path(model, s);
        let (t, x) = model.sample_point(a, PointMeasure::Chaos, &mut s.rng(Purpose::Point)).expect("m(A) > 0");
        let q = derivative_quotient(f, &path, DerivativePoint::new(t, x)?)?;
        Ok(mass * q * q)
    })?;
    Ok(Estimate::from_samples(&values, seed))
}

/// `||D Y 1_A||`, the square root of [`derivative_norm_sq`] with a
/// delta-method standard error.
pub fn derivative_norm(
    model: &JumpModel,
    f: &dyn PathFunctional,
    a: &BoxSet,
    samples: usize,
    seed: u64,
) -> Result<Estimate> {
    Ok(derivative_norm_sq(model, f, a, samples, seed)?.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeckeReport {
    /// `int_A E[F(X + x 1_[t, inf))] dt nu(dx)`.
    pub lhs: Estimate,
    /// `E[N(A) F(X)]`.
    pub rhs: Estimate,
    /// Evaluations of `F` that came out negative.
    pub negative_evaluations: usize,
}

impl MeckeReport {
    pub fn agrees(&self, sigma_multiplier: f64) -> bool {
        let se = crate::estimate::combined_stderr(&[self.lhs.stderr, self.rhs.stderr]);
        let scale = self.lhs.mean.abs().max(self.rhs.mean.abs()).max(1.0);
        (self.lhs.mean - self.rhs.mean).abs() <= sigma_multiplier * se + 1e-12 * scale
    }
}

/// Both sides of the Mecke formula for a nonnegative `F`. The two sides use
/// the same base paths.
pub fn mecke_check(
    model: &JumpModel,
    f: &dyn PathFunctional,
    a: &BoxSet,
    samples: usize,
    seed: u64,
) -> Result<MeckeReport> {
    model.ensure_in_scope()?;
    let lambda = model.expected_count(a);
    let root = SeedSpec::new(seed, 0);
    let rows = try_map_indexed(samples, |i| -> Result<(f64, f64, usize)> {
        let s = root.child(i as u64);
        let path = sample_path(model, s);
        let base = f.eval(&path)?;
        let mut negative = usize::from(base < 0.0);
        let lhs = match model.sample_point(a, PointMeasure::Intensity, &mut s.rng(Purpose::Point)) {
            Some((t, x)) => {
                let v = f.eval(&path.add_jump(t, x)?)?;
                negative += usize::from(v < 0.0);
                lambda * v
            }
            None => 0.0,
        };
        Ok((lhs, path.count_in(a) as f64 * base, negative))
    })?;
    let lhs: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let rhs: Vec<f64> = rows.iter().map(|r| r.1).collect();
    Ok(MeckeReport {
        lhs: Estimate::from_samples(&lhs, seed),
        rhs: Estimate::from_samples(&rhs, seed),
        negative_evaluations: rows.iter().map(|r| r.2).sum(),
    })
}

/// Relative tolerance for the pathwise identities.
pub const IDENTITY_TOLERANCE: f64 = 1e-12;

/// One pathwise identity evaluated at a point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub check: String,
    pub lhs: f64,
    pub rhs: f64,
    pub abs_diff: f64,
    /// Absolute tolerance: `IDENTITY_TOLERANCE` times the magnitude of the
    /// terms that were subtracted.
    pub tolerance: f64,
    pub pass: bool,
}

impl IdentityCheck {
    fn new(check: &str, lhs: f64, rhs: f64, magnitude: f64) -> Self {
        let abs_diff = (lhs - rhs).abs();
        let tolerance = IDENTITY_TOLERANCE * magnitude.max(lhs.abs()).max(rhs.abs()).max(f64::MIN_POSITIVE);
        Self { check: check.to_string(), lhs, rhs, abs_diff, tolerance, pass: abs_diff <= tolerance }
    }

    /// `|lhs - rhs|` divided by the magnitude scale; zero when both vanish.
    pub fn relative_error(&self) -> f64 {
        if self.abs_diff == 0.0 {
            0.0
        } else {
            self.abs_diff * IDENTITY_TOLERANCE / self.tolerance
        }
    }
}

/// `D(YZ) = Y DZ + Z DY + x DY DZ`, all derivatives as quotients.
pub fn product_rule_check(
    f: &dyn PathFunctional,
    g: &dyn PathFunctional,
    path: &JumpPath,
    p: DerivativePoint,
) -> Result<IdentityCheck> {
    let shifted = p.shifted(path);
    let (y, z) = (f.eval(path)?, g.eval(path)?);
    let (y1, z1) = (f.eval(&shifted)?, g.eval(&shifted)?);
    let lhs = (y1 * z1 - y * z) / p.x;
    let (dy, dz) = ((y1 - y) / p.x, (z1 - z) / p.x);
    let rhs = y * dz + z * dy + p.x * dy * dz;
    let magnitude =
        (y1 * z1).abs().max((y * z).abs()) / p.x.abs() + (y * dz).abs() + (z * dy).abs() + (p.x * dy * dz).abs();
    Ok(IdentityCheck::new("product_rule", lhs, rhs, magnitude))
}

/// `D g(Y) = (g(Y + x DY) - g(Y)) / x` for a Lipschitz primitive `g`.
pub fn chain_rule_check(
    g: Lipschitz,
    f: &dyn PathFunctional,
    path: &JumpPath,
    p: DerivativePoint,
) -> Result<IdentityCheck> {
    let composed = |q: &JumpPath| -> std::result::Result<f64, EvalError> { f.eval(q).map(|v| g.apply(v)) };
    let lhs = derivative_quotient(&composed, path, p)?;
    let y = f.eval(path)?;
    let dy = derivative_quotient(f, path, p)?;
    let moved = y + p.x * dy;
    let rhs = (g.apply(moved) - g.apply(y)) / p.x;
    let y1 = f.eval(&p.shifted(path))?;
    // g is 1-Lipschitz, so rounding in Y + x DY moves g by at most |Y| + |Y'| ulps
    let magnitude = (g.apply(y1).abs() + g.apply(y).abs() + y.abs() + y1.abs()) / p.x.abs();
    Ok(IdentityCheck::new("chain_rule", lhs, rhs, magnitude))
}

/// `E[Y | F_A]` on a grid: keep only tensor entries over cells inside `A`.
/// Every cell must lie inside `A` or be disjoint from it.
pub fn conditional_projection(grid: &CoefficientGrid, a: &BoxSet) -> Result<CoefficientGrid> {
    let mut keep = Vec::with_capacity(grid.partition().len());
    for (i, cell) in grid.partition().cells().iter().enumerate() {
        if cell.is_subset_of(a) {
            keep.push(true);
        } else if cell.is_disjoint(a) {
            keep.push(false);
        } else {
            return Err(Error::StraddlingCell { cell: i });
        }
    }
    Ok(grid.retain_cells(&keep))
}

/// Monte Carlo `E[Y | F_A]` at `path`: the jumps of `path` inside `A` are
/// kept and the rest is redrawn `resamples` times.
pub fn conditional_mc(
    model: &JumpModel,
    f: &dyn PathFunctional,
    a: &BoxSet,
    path: &JumpPath,
    resamples: usize,
    seed: u64,
) -> Result<Estimate> {
    model.ensure_in_scope()?;
    let outside = a.complement(model.horizon())?;
    let kept = path.restrict(a);
    let root = SeedSpec::new(seed, 0);
    let values = try_map_indexed(resamples, |i| -> Result<f64> {
        let mut rng = root.child(i as u64).rng(Purpose::Complement);
        let fresh = sample_with(model, &mut rng).restrict(&outside);
        Ok(f.eval(&kept.merge(&fresh))?)
    })?;
    Ok(Estimate::from_samples(&values, seed))
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;
    use std::sync::Arc;

    use super::*;
    use crate::chaos::{chaos_eval, Partition};
    use crate::dsl::Functional;
    use crate::model::NuComponent;
    use crate::simulate::Jump;

    fn model() -> JumpModel {
        JumpModel::new(0.0, 1.0, vec![NuComponent::atom(1.0, 2.0).unwrap()]).unwrap()
    }

    fn a() -> BoxSet {
        BoxSet::rect(0.0, 1.0, 0.5, 1.5).unwrap()
    }

    fn compile(src: &str, m: &JumpModel) -> Functional {
        let mut boxes = BTreeMap::new();
        boxes.insert("A".to_string(), a());
        boxes.insert("B".to_string(), BoxSet::rect(0.0, 1.0, 2.0, 3.0).unwrap());
        Functional::compile(src, &boxes, m).unwrap()
    }

    fn path(n: usize) -> JumpPath {
        JumpPath::from_jumps((0..n).map(|i| Jump { t: 0.1 + 0.2 * i as f64, x: 1.0 }).collect()).unwrap()
    }

    #[test]
    fn point_rejects_zero_size() {
        assert_eq!(DerivativePoint::new(0.5, 0.0), Err(Error::ZeroJump));
    }

    #[test]
    fn quotient_examples() {
        let m = model();
        let count = compile("count(A)", &m);
        let p = path(2);
        assert_eq!(derivative_quotient(&count, &p, DerivativePoint::new(0.3, 1.0).unwrap()).unwrap(), 1.0);
        assert_eq!(derivative_quotient(&count, &p, DerivativePoint::new(0.3, 5.0).unwrap()).unwrap(), 0.0);
        let xt = compile("XT", &m);
        for x in [-2.0, 0.25, 4.0] {
            let q = derivative_quotient(&xt, &p, DerivativePoint::new(0.7, x).unwrap()).unwrap();
            assert!((q - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn chaos_derivative_examples() {
        let m = model();
        let b1 = BoxSet::rect(0.0, 0.5, 0.5, 1.5).unwrap();
        let b2 = BoxSet::rect(0.5, 1.0, 0.5, 1.5).unwrap();
        let part = Arc::new(Partition::new(&m, vec![b1.clone(), b2.clone()]).unwrap());
        let p = JumpPath::from_jumps(vec![Jump { t: 0.7, x: 1.0 }, Jump { t: 0.8, x: 1.0 }]).unwrap();
        let pt = DerivativePoint::new(0.2, 1.0).unwrap();

        let mut f1 = CoefficientGrid::zeros(part.clone(), 1).unwrap();
        f1.set(&[0], 1.0).unwrap();
        f1.set(&[1], 1.0).unwrap();
        assert_eq!(derivative_chaos(&m, &f1, &p, pt).unwrap(), 1.0);

        let mut f0 = CoefficientGrid::zeros(part.clone(), 2).unwrap();
        f0.set(&[], 3.0).unwrap();
        assert_eq!(derivative_chaos(&m, &f0, &p, pt).unwrap(), 0.0);

        let mut f2 = CoefficientGrid::zeros(part, 2).unwrap();
        f2.set(&[0, 1], 1.0).unwrap();
        assert_eq!(derivative_chaos(&m, &f2, &p, pt), Err(Error::NotSymmetric));
        let s = f2.symmetrize();
        let m_b2 = p.sum_in(&b2) - m.compensator(&b2);
        assert_eq!(derivative_chaos(&m, &s, &p, pt).unwrap(), m_b2);
        // outside every cell
        assert_eq!(derivative_chaos(&m, &s, &p, DerivativePoint::new(0.2, 7.0).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn chaos_and_quotient_agree() {
        let m = JumpModel::new(0.0, 1.0, vec![NuComponent::uniform(0.5, 1.5, 2.0).unwrap()]).unwrap();
        let cells: Vec<BoxSet> = (0..3)
            .flat_map(|i| {
                let t0 = i as f64 / 3.0;
                [
                    BoxSet::rect(t0, t0 + 1.0 / 3.0, 0.5, 1.0).unwrap(),
                    BoxSet::rect(t0, t0 + 1.0 / 3.0, 1.0, 1.5).unwrap(),
                ]
            })
            .collect();
        let part = Arc::new(Partition::new(&m, cells).unwrap());
        let mut g = CoefficientGrid::zeros(part, 3).unwrap();
        g.set(&[], 0.3).unwrap();
        g.set(&[2], -1.0).unwrap();
        g.set(&[0, 3], 2.0).unwrap();
        g.set(&[1, 4, 5], 0.7).unwrap();
        g.set(&[5, 2], -0.4).unwrap();
        let g = g.symmetrize();
        let induced = |q: &JumpPath| -> std::result::Result<f64, EvalError> { Ok(chaos_eval(&m, q, &g)) };
        for s in 0..40u64 {
            let seed = SeedSpec::new(17, s);
            let p = sample_path(&m, seed);
            let (t, x) = m
                .sample_point(
                    &BoxSet::time_strip(0.0, 1.0).unwrap(),
                    PointMeasure::Chaos,
                    &mut seed.rng(Purpose::Point),
                )
                .unwrap();
            let pt = DerivativePoint::new(t, x).unwrap();
            let c = derivative_chaos(&m, &g, &p, pt).unwrap();
            let q = derivative_quotient(&induced, &p, pt).unwrap();
            assert!((c - q).abs() <= 1e-10 * c.abs().max(1.0), "{c} vs {q}");
        }
    }

    #[test]
    fn product_rule_on_counts() {
        let m = model();
        let count = compile("count(A)", &m);
        let pt = DerivativePoint::new(0.3, 1.0).unwrap();
        for n in 0..5 {
            let r = product_rule_check(&count, &count, &path(n), pt).unwrap();
            assert_eq!(r.lhs, (2 * n + 1) as f64);
            assert!(r.pass);
        }
        let off = DerivativePoint::new(0.3, 9.0).unwrap();
        let r = product_rule_check(&count, &count, &path(3), off).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
    }

    #[test]
    fn chain_rule_regions() {
        let m = model();
        let count = compile("count(A)", &m);
        let pt = DerivativePoint::new(0.3, 1.0).unwrap();
        let band = Lipschitz::Clamp { lo: -10.0, hi: 10.0 };
        let r = chain_rule_check(band, &count, &path(2), pt).unwrap();
        assert_eq!((r.lhs, r.rhs), (1.0, 1.0));
        let flat = Lipschitz::Clamp { lo: -1.0, hi: 1.0 };
        let r = chain_rule_check(flat, &count, &path(4), pt).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
        let straddle = Lipschitz::Min(2.5);
        let r = chain_rule_check(straddle, &count, &path(2), DerivativePoint::new(0.3, 1.2).unwrap()).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn projection_examples() {
        let m = model();
        let inside = BoxSet::rect(0.0, 0.5, 0.5, 1.5).unwrap();
        let outside = BoxSet::rect(0.5, 1.0, 0.5, 1.5).unwrap();
        let part = Arc::new(Partition::new(&m, vec![inside.clone(), outside.clone()]).unwrap());
        let mut g = CoefficientGrid::zeros(part, 2).unwrap();
        g.set(&[], 1.0).unwrap();
        g.set(&[0], 2.0).unwrap();
        g.set(&[1], 3.0).unwrap();
        g.set(&[0, 1], 4.0).unwrap();
        let g = g.symmetrize();
        assert_eq!(conditional_projection(&g, &a()).unwrap(), g);
        let p = conditional_projection(&g, &inside).unwrap();
        assert_eq!(p.get(&[1]), 0.0);
        assert_eq!(p.get(&[0, 1]), 0.0);
        assert_eq!(p.get(&[0]), 2.0);
        assert_eq!(conditional_projection(&p, &inside).unwrap(), p);
        let only_f1 = conditional_projection(&g, &BoxSet::rect(0.0, 1.0, 5.0, 6.0).unwrap()).unwrap();
        assert_eq!(only_f1.norm_sq(), 1.0);
        let straddle = BoxSet::rect(0.0, 0.25, 0.5, 1.5).unwrap();
        assert_eq!(conditional_projection(&g, &straddle), Err(Error::StraddlingCell { cell: 0 }));
        assert!(p.norm_sq() <= g.norm_sq());
    }

    #[test]
    fn conditional_mc_of_measurable_functional_is_exact() {
        let m = model();
        let f = compile("pow(count(A), 2) + 1", &m);
        let p = path(3);
        let e = conditional_mc(&m, &f, &a(), &p, 50, 9).unwrap();
        assert_eq!(e.mean, 10.0);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn derivative_norm_of_constant_is_zero() {
        let m = model();
        let c = compile("3", &m);
        let e = derivative_norm_sq(&m, &c, &a(), 100, 1).unwrap();
        assert_eq!(e.mean, 0.0);
        assert!(derivative_norm_sq(&m, &c, &BoxSet::rect(0.0, 1.0, 4.0, 5.0).unwrap(), 10, 1).is_err());
    }
}

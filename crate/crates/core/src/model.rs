//! Compound Poisson model, box sets and their exact measures.
//!
//! The jump measure `nu` is a finite mixture of atoms and uniform pieces, so
//! `nu`, `dt x nu` and `m(dt, dx) = dt x^2 nu(dx)` all have closed forms on
//! half-open rectangles.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-open interval `[lo, hi)`. Endpoints may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn is_empty(&self) -> bool {
        self.lo >= self.hi || self.lo.is_nan() || self.hi.is_nan()
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v < self.hi
    }

    pub fn intersect(&self, other: &Interval) -> Interval {
        Interval::new(self.lo.max(other.lo), self.hi.min(other.hi))
    }

    pub fn len(&self) -> f64 {
        (self.hi - self.lo).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NuKind {
    Atom { at: f64 },
    Uniform { lo: f64, hi: f64 },
}

/// One weighted piece of the jump measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuComponent {
    #[serde(flatten)]
    pub kind: NuKind,
    pub mass: f64,
}

impl NuComponent {
    pub fn atom(at: f64, mass: f64) -> Result<Self> {
        let c = Self { kind: NuKind::Atom { at }, mass };
        c.validate()?;
        Ok(c)
    }

    pub fn uniform(lo: f64, hi: f64, mass: f64) -> Result<Self> {
        let c = Self { kind: NuKind::Uniform { lo, hi }, mass };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(Error::InvalidModel(format!("component mass must be finite and positive, got {}", self.mass)));
        }
        match self.kind {
            NuKind::Atom { at } => {
                if !at.is_finite() || at == 0.0 {
                    return Err(Error::InvalidModel(format!("atom location must be finite and nonzero, got {at}")));
                }
            }
            NuKind::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::InvalidModel(format!("uniform piece needs finite lo < hi, got [{lo}, {hi}]")));
                }
                if lo <= 0.0 && 0.0 <= hi {
                    return Err(Error::InvalidModel(format!(
                        "uniform piece [{lo}, {hi}] charges a neighbourhood of 0"
                    )));
                }
            }
        }
        Ok(())
    }

    /// `int_I x^k nu_c(dx)` for `k = 0, 1, 2`.
    fn moment(&self, interval: &Interval, k: i32) -> f64 {
        match self.kind {
            NuKind::Atom { at } => {
                if interval.contains(at) {
                    self.mass * at.powi(k)
                } else {
                    0.0
                }
            }
            NuKind::Uniform { lo, hi } => {
                let ov = interval.intersect(&Interval::new(lo, hi));
                if ov.is_empty() {
                    return 0.0;
                }
                let density = self.mass / (hi - lo);
                let (a, b) = (ov.lo, ov.hi);
                match k {
                    0 => density * (b - a),
                    1 => density * (b * b - a * a) / 2.0,
                    _ => density * (b * b * b - a * a * a) / 3.0,
                }
            }
        }
    }
}

/// Half-open rectangle `[t0, t1) x ([x0, x1) \ {0})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub time: Interval,
    pub space: Interval,
}

impl Rect {
    pub fn new(t0: f64, t1: f64, x0: f64, x1: f64) -> Result<Self> {
        let r = Self { time: Interval::new(t0, t1), space: Interval::new(x0, x1) };
        r.validate()?;
        Ok(r)
    }

    fn validate(&self) -> Result<()> {
        let Interval { lo: t0, hi: t1 } = self.time;
        let Interval { lo: x0, hi: x1 } = self.space;
        if !(t0.is_finite() && t1.is_finite() && 0.0 <= t0 && t0 < t1) {
            return Err(Error::InvalidBox(format!("time side [{t0}, {t1}) must satisfy 0 <= t0 < t1 < inf")));
        }
        if x0.is_nan() || x1.is_nan() || x0 >= x1 {
            return Err(Error::InvalidBox(format!("space side [{x0}, {x1}) must satisfy x0 < x1")));
        }
        if x0 < 0.0 && 0.0 < x1 {
            return Err(Error::InvalidBox(format!("space side [{x0}, {x1}) straddles 0; split it at 0")));
        }
        Ok(())
    }

    pub fn contains(&self, t: f64, x: f64) -> bool {
        x != 0.0 && self.time.contains(t) && self.space.contains(x)
    }

    pub fn intersect(&self, other: &Rect) -> Option<Rect> {
        let time = self.time.intersect(&other.time);
        let space = self.space.intersect(&other.space);
        if time.is_empty() || space.is_empty() {
            None
        } else {
            Some(Rect { time, space })
        }
    }
}

/// Disjoint union of half-open rectangles in `[0, inf) x R_0`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BoxSet {
    rects: Vec<Rect>,
}

impl BoxSet {
    pub fn new(rects: Vec<Rect>) -> Result<Self> {
        for r in &rects {
            r.validate()?;
        }
        for i in 0..rects.len() {
            for j in (i + 1)..rects.len() {
                if rects[i].intersect(&rects[j]).is_some() {
                    return Err(Error::InvalidBox(format!("rectangles {i} and {j} overlap")));
                }
            }
        }
        Ok(Self { rects })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Single rectangle `[t0, t1) x [x0, x1)`.
    pub fn rect(t0: f64, t1: f64, x0: f64, x1: f64) -> Result<Self> {
        Ok(Self { rects: vec![Rect::new(t0, t1, x0, x1)?] })
    }

    /// `[t0, t1) x R_0`, split at 0.
    pub fn time_strip(t0: f64, t1: f64) -> Result<Self> {
        Self::new(vec![Rect::new(t0, t1, f64::NEG_INFINITY, 0.0)?, Rect::new(t0, t1, 0.0, f64::INFINITY)?])
    }

    pub fn rects(&self) -> &[Rect] {
        &self.rects
    }

    pub fn is_empty(&self) -> bool {
        self.rects.is_empty()
    }

    pub fn contains(&self, t: f64, x: f64) -> bool {
        self.rects.iter().any(|r| r.contains(t, x))
    }

    pub fn intersect(&self, other: &BoxSet) -> BoxSet {
        let rects = self.rects.iter().flat_map(|a| other.rects.iter().filter_map(move |b| a.intersect(b))).collect();
        BoxSet { rects }
    }

    pub fn is_disjoint(&self, other: &BoxSet) -> bool {
        self.intersect(other).is_empty()
    }

    /// Union of two disjoint sets.
    pub fn union(&self, other: &BoxSet) -> Result<BoxSet> {
        let mut rects = self.rects.clone();
        rects.extend_from_slice(&other.rects);
        BoxSet::new(rects)
    }

    /// Exact containment test: every elementary cell of `self`, cut along all
    /// breakpoints of both sets, lies in some rectangle of `other`.
    pub fn is_subset_of(&self, other: &BoxSet) -> bool {
        self.rects.iter().all(|r| {
            let (ts, xs) = breakpoints(std::slice::from_ref(r), &other.rects, r);
            let inside = cells(&ts, &xs).all(|(t, x)| other.contains(t, x));
            inside
        })
    }

    /// `([0, horizon) x R_0) \ self`.
    pub fn complement(&self, horizon: f64) -> Result<BoxSet> {
        let full = BoxSet::time_strip(0.0, horizon)?;
        let mut rects = Vec::new();
        for strip in &full.rects {
            let (ts, xs) = breakpoints(std::slice::from_ref(strip), &self.rects, strip);
            for w in ts.windows(2) {
                for v in xs.windows(2) {
                    let cell = Rect { time: Interval::new(w[0], w[1]), space: Interval::new(v[0], v[1]) };
                    let (t, x) = representative(&cell);
                    if !self.contains(t, x) {
                        rects.push(cell);
                    }
                }
            }
        }
        Ok(BoxSet { rects: merge_space_runs(rects) })
    }
}

fn breakpoints(base: &[Rect], others: &[Rect], clip: &Rect) -> (Vec<f64>, Vec<f64>) {
    let mut ts = Vec::new();
    let mut xs = Vec::new();
    for r in base.iter().chain(others) {
        for t in [r.time.lo, r.time.hi] {
            if clip.time.lo <= t && t <= clip.time.hi {
                ts.push(t);
            }
        }
        for x in [r.space.lo, r.space.hi] {
            if clip.space.lo <= x && x <= clip.space.hi {
                xs.push(x);
            }
        }
    }
    ts.push(clip.time.lo);
    ts.push(clip.time.hi);
    xs.push(clip.space.lo);
    xs.push(clip.space.hi);
    if clip.space.lo < 0.0 && 0.0 < clip.space.hi {
        xs.push(0.0);
    }
    for v in [&mut ts, &mut xs] {
        v.sort_by(f64::total_cmp);
        v.dedup();
    }
    (ts, xs)
}

fn cells<'a>(ts: &'a [f64], xs: &'a [f64]) -> impl Iterator<Item = (f64, f64)> + 'a {
    ts.windows(2).flat_map(move |w| {
        xs.windows(2)
            .map(move |v| representative(&Rect { time: Interval::new(w[0], w[1]), space: Interval::new(v[0], v[1]) }))
    })
}

fn representative(r: &Rect) -> (f64, f64) {
    let mid = |i: &Interval| match (i.lo.is_finite(), i.hi.is_finite()) {
        (true, true) => 0.5 * (i.lo + i.hi),
        (false, true) => i.hi - 1.0,
        (true, false) => i.lo + 1.0,
        (false, false) => 1.0,
    };
    (mid(&r.time), mid(&r.space))
}

/// Merge vertically adjacent cells in the same time strip.
fn merge_space_runs(mut rects: Vec<Rect>) -> Vec<Rect> {
    rects.sort_by(|a, b| {
        a.time.lo.total_cmp(&b.time.lo).then(a.time.hi.total_cmp(&b.time.hi)).then(a.space.lo.total_cmp(&b.space.lo))
    });
    let mut out: Vec<Rect> = Vec::with_capacity(rects.len());
    for r in rects {
        if let Some(last) = out.last_mut() {
            // never merge across 0
            if last.time == r.time && last.space.hi == r.space.lo && r.space.lo != 0.0 {
                last.space.hi = r.space.hi;
                continue;
            }
        }
        out.push(r);
    }
    out
}

/// Which base measure a point sampler draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointMeasure {
    /// `dt x nu`, the intensity of the jump measure.
    Intensity,
    /// `m(dt, dx) = dt x^2 nu(dx)`.
    Chaos,
}

/// Compound Poisson process with drift on `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpModel {
    drift: f64,
    horizon: f64,
    sigma: f64,
    components: Vec<NuComponent>,
}

impl JumpModel {
    pub fn new(drift: f64, horizon: f64, components: Vec<NuComponent>) -> Result<Self> {
        Self::with_sigma(drift, horizon, 0.0, components)
    }

    /// Constructor that carries the Gaussian coefficient. Only `sigma = 0`
    /// passes [`JumpModel::ensure_in_scope`]; the measure routines refuse
    /// anything else.
    pub fn with_sigma(drift: f64, horizon: f64, sigma: f64, components: Vec<NuComponent>) -> Result<Self> {
        if !drift.is_finite() {
            return Err(Error::InvalidModel(format!("drift must be finite, got {drift}")));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidModel(format!("horizon must be finite and positive, got {horizon}")));
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::InvalidModel(format!("sigma must be finite and nonnegative, got {sigma}")));
        }
        if components.is_empty() {
            return Err(Error::InvalidModel("jump measure needs at least one component".into()));
        }
        for c in &components {
            c.validate()?;
        }
        Ok(Self { drift, horizon, sigma, components })
    }

    pub fn drift(&self) -> f64 {
        self.drift
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn components(&self) -> &[NuComponent] {
        &self.components
    }

    /// `nu(R)`.
    pub fn total_mass(&self) -> f64 {
        self.components.iter().map(|c| c.mass).sum()
    }

    /// Expected number of jumps on `[0, T)`.
    pub fn total_intensity(&self) -> f64 {
        self.total_mass() * self.horizon
    }

    pub fn ensure_in_scope(&self) -> Result<()> {
        if self.sigma != 0.0 {
            return Err(Error::OutOfScope(format!(
                "Brownian coefficient sigma = {} is not supported; only pure-jump models (sigma = 0)",
                self.sigma
            )));
        }
        Ok(())
    }

    /// Rejects rectangles that leave `[0, T]` in time.
    pub fn check_box(&self, set: &BoxSet) -> Result<()> {
        for r in set.rects() {
            if r.time.hi > self.horizon {
                return Err(Error::InvalidBox(format!(
                    "time side [{}, {}) exceeds the horizon T = {}",
                    r.time.lo, r.time.hi, self.horizon
                )));
            }
        }
        Ok(())
    }

    /// `nu(interval \ {0})`.
    pub fn nu_measure(&self, interval: &Interval) -> f64 {
        self.components.iter().map(|c| c.moment(interval, 0)).sum()
    }

    /// `int_interval x nu(dx)`.
    pub fn nu_first_moment(&self, interval: &Interval) -> f64 {
        self.components.iter().map(|c| c.moment(interval, 1)).sum()
    }

    /// `int_interval x^2 nu(dx)`.
    pub fn nu_second_moment(&self, interval: &Interval) -> f64 {
        self.components.iter().map(|c| c.moment(interval, 2)).sum()
    }

    fn time_len(&self, r: &Rect) -> f64 {
        r.time.intersect(&Interval::new(0.0, self.horizon)).len()
    }

    /// `E N(A) = (dt x nu)(A)`; time sides are clipped to `[0, T]`.
    pub fn expected_count(&self, set: &BoxSet) -> f64 {
        set.rects().iter().map(|r| self.time_len(r) * self.nu_measure(&r.space)).sum()
    }

    /// `m(A) = int_A x^2 dt nu(dx)`.
    pub fn m_measure(&self, set: &BoxSet) -> Result<f64> {
        self.ensure_in_scope()?;
        Ok(set.rects().iter().map(|r| self.time_len(r) * self.nu_second_moment(&r.space)).sum())
    }

    /// `int_A x dt nu(dx)`, the compensator of `sum of jumps in A`.
    pub fn compensator(&self, set: &BoxSet) -> f64 {
        set.rects().iter().map(|r| self.time_len(r) * self.nu_first_moment(&r.space)).sum()
    }

    /// Draw one point from the restriction of `measure` to `set`, normalized.
    /// Returns `None` when the restricted measure is zero.
    pub fn sample_point<R: Rng + ?Sized>(
        &self,
        set: &BoxSet,
        measure: PointMeasure,
        rng: &mut R,
    ) -> Option<(f64, f64)> {
        let order = match measure {
            PointMeasure::Intensity => 0,
            PointMeasure::Chaos => 2,
        };
        let mut pieces = Vec::new();
        let mut total = 0.0;
        for r in set.rects() {
            let tl = self.time_len(r);
            if tl <= 0.0 {
                continue;
            }
            for c in &self.components {
                let w = tl * c.moment(&r.space, order);
                if w > 0.0 {
                    total += w;
                    pieces.push((total, r, c));
                }
            }
        }
        if pieces.is_empty() {
            return None;
        }
        let u = rng.random::<f64>() * total;
        let idx = pieces.iter().position(|(cum, _, _)| u < *cum).unwrap_or(pieces.len() - 1);
        let (_, r, c) = pieces[idx];
        let time = r.time.intersect(&Interval::new(0.0, self.horizon));
        let t = time.lo + rng.random::<f64>() * time.len();
        let x = match c.kind {
            NuKind::Atom { at } => at,
            NuKind::Uniform { lo, hi } => {
                let ov = r.space.intersect(&Interval::new(lo, hi));
                let v = rng.random::<f64>();
                match measure {
                    PointMeasure::Intensity => ov.lo + v * ov.len(),
                    // inverse CDF of density proportional to x^2 on [a, b)
                    PointMeasure::Chaos => {
                        let (a3, b3) = (ov.lo.powi(3), ov.hi.powi(3));
                        (a3 + v * (b3 - a3)).cbrt()
                    }
                }
            }
        };
        // guard the half-open upper ends against rounding
        let t = if t >= time.hi { time.lo } else { t };
        Some((t, x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atom_model(at: f64, mass: f64, horizon: f64) -> JumpModel {
        JumpModel::new(0.0, horizon, vec![NuComponent::atom(at, mass).unwrap()]).unwrap()
    }

    #[test]
    fn nu_measure_examples() {
        let m = atom_model(1.0, 2.0, 1.0);
        assert_eq!(m.nu_measure(&Interval::new(0.5, 1.5)), 2.0);
        assert_eq!(m.nu_measure(&Interval::new(2.0, 3.0)), 0.0);
        let u = JumpModel::new(0.0, 1.0, vec![NuComponent::uniform(1.0, 3.0, 4.0).unwrap()]).unwrap();
        assert_eq!(u.nu_measure(&Interval::new(2.0, 3.0)), 2.0);
    }

    #[test]
    fn expected_count_examples() {
        let m = atom_model(1.0, 2.0, 1.0);
        assert_eq!(m.expected_count(&BoxSet::rect(0.0, 1.0, 0.5, 1.5).unwrap()), 2.0);
        assert_eq!(m.expected_count(&BoxSet::empty()), 0.0);
        let u = JumpModel::new(0.0, 1.0, vec![NuComponent::uniform(1.0, 3.0, 4.0).unwrap()]).unwrap();
        assert_eq!(u.expected_count(&BoxSet::rect(0.0, 0.5, 2.0, 3.0).unwrap()), 1.0);
    }

    #[test]
    fn m_measure_examples() {
        let m = atom_model(1.0, 2.0, 3.0);
        assert_eq!(m.m_measure(&BoxSet::rect(0.0, 3.0, 0.5, 1.5).unwrap()).unwrap(), 6.0);
        let neg = atom_model(-2.0, 1.0, 1.0);
        assert_eq!(neg.m_measure(&BoxSet::rect(0.0, 1.0, -3.0, -1.0).unwrap()).unwrap(), 4.0);
        let u = JumpModel::new(0.0, 1.0, vec![NuComponent::uniform(1.0, 3.0, 3.0).unwrap()]).unwrap();
        let v = u.m_measure(&BoxSet::rect(0.0, 1.0, 1.0, 3.0).unwrap()).unwrap();
        assert!((v - 13.0).abs() < 1e-12);
    }

    #[test]
    fn sigma_is_out_of_scope() {
        let m = JumpModel::with_sigma(0.0, 1.0, 0.1, vec![NuComponent::atom(1.0, 1.0).unwrap()]).unwrap();
        assert!(matches!(m.m_measure(&BoxSet::empty()), Err(Error::OutOfScope(_))));
    }

    #[test]
    fn invalid_components_rejected() {
        assert!(NuComponent::atom(0.0, 1.0).is_err());
        assert!(NuComponent::atom(1.0, 0.0).is_err());
        assert!(NuComponent::uniform(-1.0, 1.0, 1.0).is_err());
        assert!(NuComponent::uniform(0.0, 1.0, 1.0).is_err());
        assert!(NuComponent::uniform(2.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn boxes_reject_overlap_and_zero_straddle() {
        assert!(Rect::new(0.0, 1.0, -1.0, 1.0).is_err());
        assert!(Rect::new(1.0, 1.0, 1.0, 2.0).is_err());
        let a = Rect::new(0.0, 1.0, 0.5, 1.5).unwrap();
        let b = Rect::new(0.5, 2.0, 1.0, 2.0).unwrap();
        assert!(BoxSet::new(vec![a, b]).is_err());
        assert!(BoxSet::new(vec![a, Rect::new(1.0, 2.0, 0.5, 1.5).unwrap()]).is_ok());
    }

    #[test]
    fn subset_and_complement() {
        let a = BoxSet::rect(0.0, 1.0, 0.5, 1.5).unwrap();
        let inner = BoxSet::rect(0.2, 0.4, 0.9, 1.1).unwrap();
        assert!(inner.is_subset_of(&a));
        assert!(!a.is_subset_of(&inner));
        // covered by two pieces
        let split =
            BoxSet::new(vec![Rect::new(0.0, 0.5, 0.5, 1.5).unwrap(), Rect::new(0.5, 1.0, 0.5, 1.5).unwrap()]).unwrap();
        assert!(a.is_subset_of(&split));

        let comp = a.complement(1.0).unwrap();
        assert!(comp.is_disjoint(&a));
        assert!(!comp.contains(0.5, 1.0));
        assert!(comp.contains(0.5, 2.0));
        assert!(comp.contains(0.5, -1.0));
        let m = atom_model(1.0, 2.0, 1.0);
        let full = BoxSet::time_strip(0.0, 1.0).unwrap();
        assert!((m.expected_count(&comp) + m.expected_count(&a) - m.expected_count(&full)).abs() < 1e-12);
        assert!(full.is_subset_of(&a.union(&comp).unwrap()));
    }

    #[test]
    fn point_sampler_stays_inside() {
        use crate::rng::{Purpose, SeedSpec};
        let m = JumpModel::new(
            0.0,
            2.0,
            vec![NuComponent::uniform(1.0, 3.0, 1.0).unwrap(), NuComponent::atom(-0.5, 2.0).unwrap()],
        )
        .unwrap();
        let a =
            BoxSet::new(vec![Rect::new(0.0, 1.0, 1.5, 2.5).unwrap(), Rect::new(1.0, 2.0, -1.0, 0.0).unwrap()]).unwrap();
        let mut rng = SeedSpec::new(1, 0).rng(Purpose::Point);
        for measure in [PointMeasure::Intensity, PointMeasure::Chaos] {
            for _ in 0..2000 {
                let (t, x) = m.sample_point(&a, measure, &mut rng).unwrap();
                assert!(a.contains(t, x), "({t}, {x})");
            }
        }
        assert!(m
            .sample_point(&BoxSet::rect(0.0, 1.0, 5.0, 6.0).unwrap(), PointMeasure::Intensity, &mut rng)
            .is_none());
    }
}

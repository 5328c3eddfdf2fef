//! Sampling the Poisson random measure on `[0, T) x R_0`.
//!
//! A path is drawn as "total count, then points": `K ~ Poisson(nu(R) T)`,
//! then `K` i.i.d. points with uniform time and size drawn from `nu / nu(R)`.

use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BoxSet, JumpModel, NuKind};
use crate::rng::{Purpose, SeedSpec};

/// One atom `(t, x)` of the jump measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub t: f64,
    pub x: f64,
}

fn jump_order(a: &Jump, b: &Jump) -> std::cmp::Ordering {
    a.t.total_cmp(&b.t).then(a.x.total_cmp(&b.x))
}

/// A realization of the jump measure, sorted by `(t, x)`.
///
/// The jump list is shared behind an `Arc`, so clones are cheap and
/// [`JumpPath::add_jump`] never touches the original.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpPath {
    jumps: Arc<[Jump]>,
    origin: Option<SeedSpec>,
}

impl JumpPath {
    pub fn empty() -> Self {
        Self { jumps: Arc::from(Vec::new()), origin: None }
    }

    /// Build from an arbitrary list; sorts into canonical order so that any
    /// permutation of the input yields the same path.
    pub fn from_jumps(mut jumps: Vec<Jump>) -> Result<Self> {
        if jumps.iter().any(|j| j.x == 0.0 || !j.x.is_finite()) {
            return Err(Error::ZeroJump);
        }
        if jumps.iter().any(|j| !(j.t.is_finite() && j.t >= 0.0)) {
            return Err(Error::InvalidArgument("jump times must be finite and nonnegative".into()));
        }
        jumps.sort_by(jump_order);
        Ok(Self { jumps: Arc::from(jumps), origin: None })
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    pub fn origin(&self) -> Option<SeedSpec> {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.jumps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jumps.is_empty()
    }

    /// `N(A)` on this path.
    pub fn count_in(&self, set: &BoxSet) -> usize {
        self.jumps.iter().filter(|j| set.contains(j.t, j.x)).count()
    }

    /// `sum of x` over jumps in `set`.
    pub fn sum_in(&self, set: &BoxSet) -> f64 {
        self.jumps.iter().filter(|j| set.contains(j.t, j.x)).map(|j| j.x).sum()
    }

    /// `X_T = beta T + sum of all jumps`.
    pub fn terminal_value(&self, model: &JumpModel) -> f64 {
        model.drift() * model.horizon() + self.jumps.iter().map(|j| j.x).sum::<f64>()
    }

    /// The path `X + x 1_[t, inf)`: one more jump at `(t, x)`.
    pub fn add_jump(&self, t: f64, x: f64) -> Result<Self> {
        if x == 0.0 || !x.is_finite() {
            return Err(Error::ZeroJump);
        }
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::InvalidArgument(format!("jump time {t} must be finite and nonnegative")));
        }
        let new = Jump { t, x };
        let pos = self.jumps.partition_point(|j| jump_order(j, &new).is_lt());
        let mut jumps = Vec::with_capacity(self.jumps.len() + 1);
        jumps.extend_from_slice(&self.jumps[..pos]);
        jumps.push(new);
        jumps.extend_from_slice(&self.jumps[pos..]);
        Ok(Self { jumps: Arc::from(jumps), origin: self.origin })
    }

    /// Jumps inside `set` only.
    pub fn restrict(&self, set: &BoxSet) -> Self {
        let jumps: Vec<Jump> = self.jumps.iter().copied().filter(|j| set.contains(j.t, j.x)).collect();
        Self { jumps: Arc::from(jumps), origin: self.origin }
    }

    /// Union of the jumps of two paths.
    pub fn merge(&self, other: &JumpPath) -> Self {
        let mut jumps: Vec<Jump> = self.jumps.iter().chain(other.jumps.iter()).copied().collect();
        jumps.sort_by(jump_order);
        Self { jumps: Arc::from(jumps), origin: self.origin }
    }
}

/// Draw one path of the model's jump measure on `[0, T)`.
pub fn sample_path(model: &JumpModel, seed: SeedSpec) -> JumpPath {
    let mut rng = seed.rng(Purpose::Path);
    let mut path = sample_with(model, &mut rng);
    path.origin = Some(seed);
    path
}

pub(crate) fn sample_with<R: Rng + ?Sized>(model: &JumpModel, rng: &mut R) -> JumpPath {
    let intensity = model.total_intensity();
    let count = match Poisson::new(intensity) {
        Ok(p) => p.sample(rng) as usize,
        Err(_) => 0,
    };
    let total = model.total_mass();
    let horizon = model.horizon();
    let mut jumps = Vec::with_capacity(count);
    for _ in 0..count {
        let t = rng.random::<f64>() * horizon;
        let mut u = rng.random::<f64>() * total;
        let mut chosen = model.components().last().copied();
        for c in model.components() {
            if u < c.mass {
                chosen = Some(*c);
                break;
            }
            u -= c.mass;
        }
        let x = match chosen.map(|c| c.kind) {
            Some(NuKind::Atom { at }) => at,
            Some(NuKind::Uniform { lo, hi }) => lo + rng.random::<f64>() * (hi - lo),
            None => unreachable!("models have at least one component"),
        };
        jumps.push(Jump { t, x });
    }
    jumps.sort_by(jump_order);
    JumpPath { jumps: Arc::from(jumps), origin: None }
}

/// Write paths as `stream,t,x` records, one per jump.
pub fn write_path_dump<W: Write>(paths: &[JumpPath], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::InvalidArgument(format!("path dump: {e}"));
    w.write_record(["stream", "t", "x"]).map_err(io)?;
    for (i, p) in paths.iter().enumerate() {
        let stream = p.origin.map(|s| s.stream).unwrap_or(i as u64);
        for j in p.jumps() {
            w.serialize((stream, j.t, j.x)).map_err(io)?;
        }
    }
    w.flush().map_err(|e| Error::InvalidArgument(format!("path dump: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NuComponent;

    fn model() -> JumpModel {
        JumpModel::new(0.0, 1.0, vec![NuComponent::atom(1.0, 2.0).unwrap()]).unwrap()
    }

    #[test]
    fn count_in_examples() {
        let p = JumpPath::from_jumps(vec![Jump { t: 0.5, x: 1.0 }, Jump { t: 0.7, x: 1.0 }]).unwrap();
        let a = BoxSet::rect(0.0, 1.0, 0.5, 1.5).unwrap();
        assert_eq!(p.count_in(&a), 2);
        assert_eq!(p.count_in(&BoxSet::empty()), 0);
    }

    #[test]
    fn add_jump_is_persistent() {
        let p = JumpPath::empty();
        let q = p.add_jump(0.3, 2.0).unwrap();
        assert!(p.is_empty());
        assert_eq!(q.jumps(), &[Jump { t: 0.3, x: 2.0 }]);
        assert_eq!(p.add_jump(0.3, 0.0), Err(Error::ZeroJump));
    }

    #[test]
    fn add_jump_shifts_terminal_value_and_count() {
        let m = model();
        let p = sample_path(&m, SeedSpec::new(3, 1));
        let a = BoxSet::rect(0.0, 1.0, 0.5, 1.5).unwrap();
        let q = p.add_jump(0.25, 1.0).unwrap();
        assert_eq!(q.count_in(&a), p.count_in(&a) + 1);
        assert_eq!(q.terminal_value(&m), p.terminal_value(&m) + 1.0);
        assert!(q.jumps().windows(2).all(|w| w[0].t <= w[1].t));
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = model();
        assert_eq!(sample_path(&m, SeedSpec::new(11, 5)), sample_path(&m, SeedSpec::new(11, 5)));
        assert_ne!(sample_path(&m, SeedSpec::new(11, 5)).jumps(), sample_path(&m, SeedSpec::new(11, 6)).jumps());
    }

    #[test]
    fn sampled_points_are_valid() {
        let m = JumpModel::new(
            0.0,
            2.0,
            vec![NuComponent::uniform(-2.0, -1.0, 1.5).unwrap(), NuComponent::atom(0.5, 1.0).unwrap()],
        )
        .unwrap();
        for s in 0..200 {
            let p = sample_path(&m, SeedSpec::new(0, s));
            assert!(p.jumps().iter().all(|j| j.x != 0.0 && (0.0..2.0).contains(&j.t)));
            assert!(p.jumps().windows(2).all(|w| w[0].t <= w[1].t));
        }
    }

    #[test]
    fn dump_format() {
        let p = JumpPath::from_jumps(vec![Jump { t: 0.5, x: 1.0 }]).unwrap();
        let mut buf = Vec::new();
        write_path_dump(&[p], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "stream,t,x\n0,0.5,1.0\n");
    }
}

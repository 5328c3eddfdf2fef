//! Step-function chaos on a finite partition.
//!
//! `M(B) = sum of jump sizes in B - int_B x dt nu(dx)` is the compensated
//! random measure with `E M(B1) M(B2) = m(B1 n B2)`. A coefficient of order
//! `n` is a tensor over `n`-tuples of partition cells, and its multiple
//! integral is the sum over tuples of pairwise distinct cells of
//! `coefficient * M(cell_1) ... M(cell_n)`. Tuples that repeat a cell are
//! ignored: the elementary integral is only defined for disjoint boxes.

use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dsl::{EvalError, PathFunctional};
use crate::error::{Error, Result};
use crate::estimate::Estimate;
use crate::model::{BoxSet, JumpModel};
use crate::parallel::map_indexed;
use crate::rng::SeedSpec;
use crate::simulate::{sample_path, JumpPath};

/// Largest chaos order the enumeration supports.
pub const MAX_ORDER: usize = 4;

/// Default truncation order for grids.
pub const DEFAULT_ORDER: usize = 3;

/// Pairwise disjoint cells with their `m`-masses.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    cells: Vec<BoxSet>,
    masses: Vec<f64>,
}

impl Partition {
    pub fn new(model: &JumpModel, cells: Vec<BoxSet>) -> Result<Self> {
        model.ensure_in_scope()?;
        for i in 0..cells.len() {
            for j in (i + 1)..cells.len() {
                if !cells[i].is_disjoint(&cells[j]) {
                    return Err(Error::RepeatedCell(i, j));
                }
            }
        }
        let masses = cells.iter().map(|c| model.m_measure(c)).collect::<Result<Vec<_>>>()?;
        Ok(Self { cells, masses })
    }

    pub fn cells(&self) -> &[BoxSet] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// `m(cell)` per cell.
    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Cells with zero `m`-mass.
    pub fn is_null(&self, cell: usize) -> bool {
        self.masses[cell] == 0.0
    }

    pub fn cell_of(&self, t: f64, x: f64) -> Option<usize> {
        self.cells.iter().position(|c| c.contains(t, x))
    }

    /// `M(cell)` for every cell on one path.
    pub fn m_values(&self, model: &JumpModel, path: &JumpPath) -> Vec<f64> {
        self.cells.iter().map(|c| path.sum_in(c) - model.compensator(c)).collect()
    }
}

/// `M(B)` on one path.
pub fn eval_m(model: &JumpModel, path: &JumpPath, set: &BoxSet) -> Result<f64> {
    model.ensure_in_scope()?;
    Ok(path.sum_in(set) - model.compensator(set))
}

/// `I_n(c 1_{B_1} x ... x 1_{B_n}) = c M(B_1) ... M(B_n)` for disjoint cells.
pub fn multiple_integral(model: &JumpModel, path: &JumpPath, cells: &[&BoxSet], coefficient: f64) -> Result<f64> {
    for i in 0..cells.len() {
        for j in (i + 1)..cells.len() {
            if !cells[i].is_disjoint(cells[j]) {
                return Err(Error::RepeatedCell(i, j));
            }
        }
    }
    let mut v = coefficient;
    for c in cells {
        v *= eval_m(model, path, c)?;
    }
    Ok(v)
}

/// Calls `f(tuple, flat_index)` for every tuple in `0..k` of length `n` whose
/// entries are pairwise distinct. Flat indices are row-major.
pub(crate) fn for_each_distinct_tuple(k: usize, n: usize, mut f: impl FnMut(&[usize], usize)) {
    let mut idx = vec![0usize; n];
    let total = k.checked_pow(n as u32).unwrap_or(0);
    for flat in 0..total {
        let mut rem = flat;
        for slot in idx.iter_mut().rev() {
            *slot = rem % k;
            rem /= k;
        }
        let distinct = (0..n).all(|i| (i + 1..n).all(|j| idx[i] != idx[j]));
        if distinct {
            f(&idx, flat);
        }
    }
}

fn flat_index(k: usize, idx: &[usize]) -> usize {
    idx.iter().fold(0, |acc, &i| acc * k + i)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Chaos coefficients `f_0, ..., f_{n_max}` as step functions on a partition.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientGrid {
    partition: Arc<Partition>,
    tensors: Vec<Vec<f64>>,
    symmetric: bool,
}

impl CoefficientGrid {
    pub fn zeros(partition: Arc<Partition>, n_max: usize) -> Result<Self> {
        if n_max > MAX_ORDER {
            return Err(Error::InvalidArgument(format!(
                "chaos order {n_max} exceeds the supported maximum {MAX_ORDER}"
            )));
        }
        let k = partition.len();
        let tensors = (0..=n_max).map(|n| vec![0.0; k.pow(n as u32)]).collect();
        Ok(Self { partition, tensors, symmetric: true })
    }

    pub fn partition(&self) -> &Arc<Partition> {
        &self.partition
    }

    pub fn n_max(&self) -> usize {
        self.tensors.len() - 1
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn get(&self, cells: &[usize]) -> f64 {
        match self.tensors.get(cells.len()) {
            Some(t) => t[flat_index(self.partition.len(), cells)],
            None => 0.0,
        }
    }

    /// Set one entry. Clears the symmetry flag unless the entry is
    /// permutation-invariant by itself (orders 0 and 1).
    pub fn set(&mut self, cells: &[usize], value: f64) -> Result<()> {
        let k = self.partition.len();
        if cells.iter().any(|&c| c >= k) {
            return Err(Error::InvalidArgument(format!("cell index out of range (partition has {k} cells)")));
        }
        let n = cells.len();
        let t = self
            .tensors
            .get_mut(n)
            .ok_or_else(|| Error::InvalidArgument(format!("order {n} exceeds the grid's n_max")))?;
        t[flat_index(k, cells)] = value;
        if n >= 2 {
            self.symmetric = false;
        }
        Ok(())
    }

    /// Average every tensor over index permutations.
    pub fn symmetrize(&self) -> CoefficientGrid {
        if self.symmetric {
            return self.clone();
        }
        let k = self.partition.len();
        let tensors = self
            .tensors
            .iter()
            .enumerate()
            .map(|(n, t)| {
                if n < 2 {
                    return t.clone();
                }
                let perms = permutations(n);
                let mut out = vec![0.0; t.len()];
                let mut idx = vec![0usize; n];
                let mut permuted = vec![0usize; n];
                for (flat, slot) in out.iter_mut().enumerate() {
                    let mut rem = flat;
                    for s in idx.iter_mut().rev() {
                        *s = rem % k;
                        rem /= k;
                    }
                    let mut acc = 0.0;
                    for p in &perms {
                        for (dst, &src) in permuted.iter_mut().zip(p) {
                            *dst = idx[src];
                        }
                        acc += t[flat_index(k, &permuted)];
                    }
                    *slot = acc / perms.len() as f64;
                }
                out
            })
            .collect();
        CoefficientGrid { partition: self.partition.clone(), tensors, symmetric: true }
    }

    /// `sum_n I_n(f_n)` on one path, with precomputed `M(cell)` values.
    pub fn eval_with_m(&self, m: &[f64]) -> f64 {
        let k = self.partition.len();
        let mut total = self.tensors[0][0];
        for (n, t) in self.tensors.iter().enumerate().skip(1) {
            let mut s = 0.0;
            for_each_distinct_tuple(k, n, |idx, flat| {
                let c = t[flat];
                if c != 0.0 {
                    s += c * idx.iter().map(|&i| m[i]).product::<f64>();
                }
            });
            total += s;
        }
        total
    }

    /// `sum_n n! ||f~_n||^2_{L2(m^n)}`, the squared `L2(P)` norm.
    pub fn norm_sq(&self) -> f64 {
        (0..=self.n_max()).map(|n| grid_inner_product(self, n, self, n).unwrap_or(0.0)).sum()
    }

    /// Same step function on a finer partition. `parent[j]` is the index of
    /// the old cell that new cell `j` lies in. Tuples whose cells share a
    /// parent were diagonal before and stay zero.
    pub fn refine(&self, finer: Arc<Partition>, parent: &[usize]) -> Result<CoefficientGrid> {
        if parent.len() != finer.len() || parent.iter().any(|&p| p >= self.partition.len()) {
            return Err(Error::InvalidArgument("refinement map does not match the partitions".into()));
        }
        let mut out = CoefficientGrid::zeros(finer, self.n_max())?;
        out.tensors[0][0] = self.tensors[0][0];
        let k = out.partition.len();
        for n in 1..=self.n_max() {
            let mut parents = vec![0usize; n];
            for_each_distinct_tuple(k, n, |idx, flat| {
                for (p, &i) in parents.iter_mut().zip(idx) {
                    *p = parent[i];
                }
                let distinct = (0..n).all(|a| (a + 1..n).all(|b| parents[a] != parents[b]));
                if distinct {
                    out.tensors[n][flat] = self.get(&parents);
                }
            });
        }
        out.symmetric = self.symmetric;
        Ok(out)
    }

    /// Zero every entry whose index tuple uses a cell with `keep[cell] == false`.
    pub(crate) fn retain_cells(&self, keep: &[bool]) -> CoefficientGrid {
        let k = self.partition.len();
        let mut out = self.clone();
        for (n, t) in out.tensors.iter_mut().enumerate().skip(1) {
            let mut idx = vec![0usize; n];
            for (flat, v) in t.iter_mut().enumerate() {
                let mut rem = flat;
                for s in idx.iter_mut().rev() {
                    *s = rem % k;
                    rem /= k;
                }
                if idx.iter().any(|&i| !keep[i]) {
                    *v = 0.0;
                }
            }
        }
        out
    }

    /// `sum_n n I_{n-1}(f_n(., cell))` from precomputed `M` values, skipping
    /// tuples that contain `cell`. Assumes symmetric tensors.
    pub(crate) fn shifted_eval(&self, cell: usize, m: &[f64]) -> f64 {
        let k = self.partition.len();
        let mut total = 0.0;
        let mut full = Vec::with_capacity(self.n_max());
        for (n, t) in self.tensors.iter().enumerate().skip(1) {
            let mut s = 0.0;
            for_each_distinct_tuple(k, n - 1, |idx, _| {
                if idx.contains(&cell) {
                    return;
                }
                full.clear();
                full.extend_from_slice(idx);
                full.push(cell);
                let c = t[flat_index(k, &full)];
                if c != 0.0 {
                    s += c * idx.iter().map(|&i| m[i]).product::<f64>();
                }
            });
            total += n as f64 * s;
        }
        total
    }

    /// Write the nonzero entries as `order,cells,value` records, cells
    /// separated by spaces.
    pub fn write_records<W: Write>(&self, out: W) -> Result<()> {
        let io = |e: csv::Error| Error::InvalidArgument(format!("grid records: {e}"));
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["order", "cells", "value"]).map_err(io)?;
        let k = self.partition.len();
        for (n, t) in self.tensors.iter().enumerate() {
            for (flat, &v) in t.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                let mut idx = vec![0usize; n];
                let mut rem = flat;
                for s in idx.iter_mut().rev() {
                    *s = rem % k;
                    rem /= k;
                }
                let cells = idx.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ");
                w.serialize((n, cells, v)).map_err(io)?;
            }
        }
        w.flush().map_err(|e| Error::InvalidArgument(format!("grid records: {e}")))
    }

    pub fn read_records<R: Read>(partition: Arc<Partition>, n_max: usize, input: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            order: usize,
            cells: String,
            value: f64,
        }
        let mut grid = CoefficientGrid::zeros(partition, n_max)?;
        let mut r = csv::Reader::from_reader(input);
        for row in r.deserialize::<Row>() {
            let row = row.map_err(|e| Error::InvalidArgument(format!("grid records: {e}")))?;
            let cells = row
                .cells
                .split_whitespace()
                .map(|s| s.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::InvalidArgument(format!("grid records: bad cell index: {e}")))?;
            if cells.len() != row.order {
                return Err(Error::InvalidArgument(format!(
                    "grid records: order {} with {} cell indices",
                    row.order,
                    cells.len()
                )));
            }
            grid.set(&cells, row.value)?;
        }
        Ok(grid)
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// `sum_n I_n(f_n)` on one path.
pub fn chaos_eval(model: &JumpModel, path: &JumpPath, grid: &CoefficientGrid) -> f64 {
    grid.eval_with_m(&grid.partition.m_values(model, path))
}

/// `E[I_n(f) I_k(g)]`: zero for `n != k`, else `n! (f~, g~)_{L2(m^n)}`.
pub fn grid_inner_product(f: &CoefficientGrid, n: usize, g: &CoefficientGrid, k: usize) -> Result<f64> {
    if !Arc::ptr_eq(&f.partition, &g.partition) && f.partition != g.partition {
        return Err(Error::PartitionMismatch);
    }
    if n != k || n > f.n_max() || n > g.n_max() {
        return Ok(0.0);
    }
    if n == 0 {
        return Ok(f.tensors[0][0] * g.tensors[0][0]);
    }
    let (fs, gs) = (f.symmetrize(), g.symmetrize());
    let masses = f.partition.masses();
    let mut s = 0.0;
    for_each_distinct_tuple(f.partition.len(), n, |idx, flat| {
        let w: f64 = idx.iter().map(|&i| masses[i]).product();
        s += fs.tensors[n][flat] * gs.tensors[n][flat] * w;
    });
    Ok(factorial(n) * s)
}

/// The chaos sum as a path functional.
pub struct GridFunctional<'a> {
    pub model: &'a JumpModel,
    pub grid: &'a CoefficientGrid,
}

impl PathFunctional for GridFunctional<'_> {
    fn eval(&self, path: &JumpPath) -> std::result::Result<f64, EvalError> {
        Ok(chaos_eval(self.model, path, self.grid))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsometryReport {
    /// Monte Carlo `E[Y^2]`.
    pub mc: Estimate,
    /// `sum_n n! ||f~_n||^2`.
    pub exact: f64,
}

/// Compare `E[(sum I_n(f_n))^2]` by simulation with the isometry.
pub fn isometry_check(model: &JumpModel, grid: &CoefficientGrid, samples: usize, seed: u64) -> Result<IsometryReport> {
    model.ensure_in_scope()?;
    let root = SeedSpec::new(seed, 0);
    let values = map_indexed(samples, |i| {
        let path = sample_path(model, root.child(i as u64));
        chaos_eval(model, &path, grid).powi(2)
    });
    Ok(IsometryReport { mc: Estimate::from_samples(&values, seed), exact: grid.norm_sq() })
}

/// Monte Carlo `E[prod_i M(B_i)]`, one draw per stream.
pub fn moment_of_m(model: &JumpModel, sets: &[&BoxSet], samples: usize, seed: u64) -> Result<Estimate> {
    model.ensure_in_scope()?;
    let root = SeedSpec::new(seed, 0);
    let values = map_indexed(samples, |i| {
        let path = sample_path(model, root.child(i as u64));
        sets.iter().map(|b| path.sum_in(b) - model.compensator(b)).product::<f64>()
    });
    Ok(Estimate::from_samples(&values, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NuComponent;
    use crate::simulate::Jump;

    fn model() -> JumpModel {
        JumpModel::new(0.0, 1.0, vec![NuComponent::atom(1.0, 2.0).unwrap()]).unwrap()
    }

    fn path(n: usize) -> JumpPath {
        JumpPath::from_jumps((0..n).map(|i| Jump { t: 0.1 + 0.2 * i as f64, x: 1.0 }).collect()).unwrap()
    }

    fn unit_box() -> BoxSet {
        BoxSet::rect(0.0, 1.0, 0.5, 1.5).unwrap()
    }

    #[test]
    fn eval_m_examples() {
        let m = model();
        let b = unit_box();
        assert_eq!(eval_m(&m, &path(2), &b).unwrap(), 0.0);
        assert_eq!(eval_m(&m, &path(3), &b).unwrap(), 1.0);
    }

    #[test]
    fn multiple_integral_examples() {
        let m = model();
        let b1 = BoxSet::rect(0.0, 0.5, 0.5, 1.5).unwrap();
        let b2 = BoxSet::rect(0.5, 1.0, 0.5, 1.5).unwrap();
        // M(b1) = 3 - 1 = 2, M(b2) = 0 - 1 = -1
        let p = JumpPath::from_jumps(vec![Jump { t: 0.1, x: 1.0 }, Jump { t: 0.2, x: 1.0 }, Jump { t: 0.3, x: 1.0 }])
            .unwrap();
        assert_eq!(eval_m(&m, &p, &b1).unwrap(), 2.0);
        assert_eq!(eval_m(&m, &p, &b2).unwrap(), -1.0);
        assert_eq!(multiple_integral(&m, &p, &[&b1, &b2], 1.0).unwrap(), -2.0);
        assert_eq!(multiple_integral(&m, &p, &[], 3.5).unwrap(), 3.5);
        assert_eq!(multiple_integral(&m, &path(2), &[&unit_box()], 7.0).unwrap(), 0.0);
        assert_eq!(multiple_integral(&m, &p, &[&b1, &b1], 1.0), Err(Error::RepeatedCell(0, 1)));
    }

    #[test]
    fn first_chaos_of_inverse_size_is_centered_count() {
        let m = model();
        let part = Arc::new(Partition::new(&m, vec![unit_box()]).unwrap());
        let mut g = CoefficientGrid::zeros(part, 1).unwrap();
        g.set(&[0], 1.0).unwrap(); // h = 1/x on the atom at 1
        for n in 0..6 {
            assert_eq!(chaos_eval(&m, &path(n), &g), n as f64 - 2.0);
        }
        let c = CoefficientGrid::zeros(g.partition().clone(), 2).unwrap();
        let mut c = c;
        c.set(&[], 4.25).unwrap();
        assert_eq!(chaos_eval(&m, &path(3), &c), 4.25);
    }

    #[test]
    fn symmetrize_examples() {
        let m = model();
        let part = Arc::new(
            Partition::new(
                &m,
                vec![BoxSet::rect(0.0, 0.5, 0.5, 1.5).unwrap(), BoxSet::rect(0.5, 1.0, 0.5, 1.5).unwrap()],
            )
            .unwrap(),
        );
        let mut g = CoefficientGrid::zeros(part, 2).unwrap();
        g.set(&[0, 1], 2.0).unwrap();
        assert!(!g.is_symmetric());
        let s = g.symmetrize();
        assert_eq!(s.get(&[0, 1]), 1.0);
        assert_eq!(s.get(&[1, 0]), 1.0);
        assert_eq!(s.symmetrize(), s);
        let p = path(4);
        assert!((chaos_eval(&m, &p, &g) - chaos_eval(&m, &p, &s)).abs() < 1e-12);
    }

    #[test]
    fn inner_product_examples() {
        let m = model();
        let part = Arc::new(Partition::new(&m, vec![unit_box()]).unwrap());
        let mut h = CoefficientGrid::zeros(part.clone(), 1).unwrap();
        h.set(&[0], 1.0).unwrap();
        assert_eq!(grid_inner_product(&h, 1, &h, 1).unwrap(), 2.0);
        assert_eq!(grid_inner_product(&h, 1, &h, 0).unwrap(), 0.0);
        let mut h3 = h.clone();
        h3.set(&[0], 3.0).unwrap();
        assert_eq!(grid_inner_product(&h3, 1, &h, 1).unwrap(), 6.0);
        let other = Arc::new(Partition::new(&m, vec![BoxSet::rect(0.0, 0.5, 0.5, 1.5).unwrap()]).unwrap());
        let g = CoefficientGrid::zeros(other, 1).unwrap();
        assert_eq!(grid_inner_product(&h, 1, &g, 1), Err(Error::PartitionMismatch));
    }

    #[test]
    fn refinement_keeps_the_chaos_sum() {
        let m = model();
        let coarse = Arc::new(
            Partition::new(
                &m,
                vec![BoxSet::rect(0.0, 0.5, 0.5, 1.5).unwrap(), BoxSet::rect(0.5, 1.0, 0.5, 1.5).unwrap()],
            )
            .unwrap(),
        );
        let fine = Arc::new(
            Partition::new(
                &m,
                vec![
                    BoxSet::rect(0.0, 0.25, 0.5, 1.5).unwrap(),
                    BoxSet::rect(0.25, 0.5, 0.5, 1.5).unwrap(),
                    BoxSet::rect(0.5, 1.0, 0.5, 1.5).unwrap(),
                ],
            )
            .unwrap(),
        );
        let mut g = CoefficientGrid::zeros(coarse, 2).unwrap();
        g.set(&[], 0.5).unwrap();
        g.set(&[0], 1.5).unwrap();
        g.set(&[1], -0.5).unwrap();
        g.set(&[0, 1], 2.0).unwrap();
        g.set(&[0, 0], 9.0).unwrap(); // diagonal: ignored on both grids
        let r = g.refine(fine, &[0, 0, 1]).unwrap();
        for s in 0..50 {
            let p = sample_path(&m, SeedSpec::new(5, s));
            let (a, b) = (chaos_eval(&m, &p, &g), chaos_eval(&m, &p, &r));
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn records_round_trip() {
        let m = model();
        let part = Arc::new(
            Partition::new(
                &m,
                vec![BoxSet::rect(0.0, 0.5, 0.5, 1.5).unwrap(), BoxSet::rect(0.5, 1.0, 0.5, 1.5).unwrap()],
            )
            .unwrap(),
        );
        let mut g = CoefficientGrid::zeros(part.clone(), 2).unwrap();
        g.set(&[], 1.0).unwrap();
        g.set(&[1], 0.25).unwrap();
        g.set(&[1, 0], -3.0).unwrap();
        let mut buf = Vec::new();
        g.write_records(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text, "order,cells,value\n0,,1.0\n1,1,0.25\n2,1 0,-3.0\n");
        let back = CoefficientGrid::read_records(part, 2, buf.as_slice()).unwrap();
        assert_eq!(back.get(&[1, 0]), -3.0);
        assert_eq!(back.get(&[1]), 0.25);
    }
}

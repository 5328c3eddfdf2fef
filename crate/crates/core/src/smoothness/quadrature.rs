//! Quadrature of `int_0^inf s^{-2 theta} min{1, s^2 c^2} ds / s`.
//!
//! In `u = ln s` the integrand is `exp(-2 theta u) min{1, c^2 exp(2u)}`,
//! two exponentials joined at the kink `u* = -ln c`. The grid is cut at the
//! kink, each cell gets 3-point Gauss-Legendre, and the parts outside the
//! grid are added in closed form (they are pure power laws in `s`).

use crate::error::{Error, Result};

/// Tail share of the total above which the grid is reported as too narrow.
pub const TAIL_WARNING_FRACTION: f64 = 0.1;

/// Log-spaced nodes, stored as `ln s`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogGrid {
    nodes: Vec<f64>,
}

impl LogGrid {
    pub fn new(lo: f64, hi: f64, points: usize) -> Result<Self> {
        if !(lo > 0.0 && hi > lo && hi.is_finite()) || points < 2 {
            return Err(Error::InvalidArgument(format!(
                "log grid needs 0 < lo < hi and at least two points, got [{lo}, {hi}] with {points}"
            )));
        }
        let (a, b) = (lo.ln(), hi.ln());
        let step = (b - a) / (points - 1) as f64;
        let nodes = (0..points).map(|i| if i + 1 == points { b } else { a + step * i as f64 }).collect();
        Ok(Self { nodes })
    }

    /// 512 points on `[1e-3, 1e3]`.
    pub fn standard() -> Self {
        Self::new(1e-3, 1e3, 512).expect("valid constants")
    }

    pub fn lo(&self) -> f64 {
        self.nodes[0].exp()
    }

    pub fn hi(&self) -> f64 {
        self.nodes[self.nodes.len() - 1].exp()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Grid points `s_i`.
    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().map(|u| u.exp())
    }

    /// Whether the grid spans at least `[1e-3, 1e3]`.
    pub fn is_wide(&self) -> bool {
        self.lo() <= 1e-3 * (1.0 + 1e-12) && self.hi() >= 1e3 * (1.0 - 1e-12)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    /// Grid part plus both tails.
    pub value: f64,
    /// `|Gauss3 - Gauss2|` summed over cells.
    pub error: f64,
    /// Closed-form part outside the grid.
    pub tail: f64,
}

impl Quadrature {
    pub fn tail_fraction(&self) -> f64 {
        if self.value > 0.0 {
            self.tail / self.value
        } else {
            0.0
        }
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidArgument(format!("theta must lie in (0, 1), got {theta}")));
    }
    Ok(())
}

/// `c^{2 theta} / (2 theta (1 - theta))`.
pub fn closed_form_theta_integral(c: f64, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!("scale c must be positive, got {c}")));
    }
    Ok(c.powf(2.0 * theta) / (2.0 * theta * (1.0 - theta)))
}

const GL3_NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
const GL3_WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
const GL2_NODE: f64 = 0.577_350_269_189_625_8;

/// Numerical value of the integral on `grid` with analytic tails.
pub fn theta_integral_quadrature(c: f64, theta: f64, grid: &LogGrid) -> Result<Quadrature> {
    check_theta(theta)?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!("scale c must be positive, got {c}")));
    }
    let kink = -c.ln();
    let c2 = c * c;
    let g = |u: f64| (-2.0 * theta * u).exp() * (c2 * (2.0 * u).exp()).min(1.0);

    let mut nodes = grid.nodes.clone();
    let (u0, u1) = (nodes[0], nodes[nodes.len() - 1]);
    if u0 < kink && kink < u1 {
        let pos = nodes.partition_point(|&u| u < kink);
        if nodes[pos] != kink {
            nodes.insert(pos, kink);
        }
    }

    let mut inner = 0.0;
    let mut error = 0.0;
    for w in nodes.windows(2) {
        let (mid, half) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
        let g3: f64 = GL3_NODES.iter().zip(GL3_WEIGHTS).map(|(x, wt)| wt * g(mid + half * x)).sum::<f64>() * half;
        let g2 = (g(mid - half * GL2_NODE) + g(mid + half * GL2_NODE)) * half;
        inner += g3;
        error += (g3 - g2).abs();
    }

    let rise = 2.0 - 2.0 * theta;
    let fall = 2.0 * theta;
    // int_{-inf}^{u} c^2 e^{rise v} dv and int_u^{inf} e^{-fall v} dv
    let below = |u: f64| c2 * (rise * u).exp() / rise;
    let above = |u: f64| (-fall * u).exp() / fall;
    let lower = if u0 <= kink { below(u0) } else { below(kink) + above(kink) - above(u0) };
    let upper = if u1 >= kink { above(u1) } else { below(kink) - below(u1) + above(kink) };
    let tail = lower + upper;
    Ok(Quadrature { value: inner + tail, error, tail })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_examples() {
        assert_eq!(closed_form_theta_integral(1.0, 0.5).unwrap(), 2.0);
        assert!((closed_form_theta_integral(2.0, 0.5).unwrap() - 4.0).abs() < 1e-15);
        assert!(closed_form_theta_integral(1.0, 1.0).is_err());
        assert!(closed_form_theta_integral(1.0, 0.0).is_err());
    }

    #[test]
    fn quadrature_matches_closed_form_on_dense_grid() {
        let grid = LogGrid::new(1e-3, 1e3, 10_000).unwrap();
        for theta in [0.25, 0.5, 0.75] {
            for c in [0.5, 1.0, 2.0] {
                let q = theta_integral_quadrature(c, theta, &grid).unwrap();
                let exact = closed_form_theta_integral(c, theta).unwrap();
                assert!(((q.value - exact) / exact).abs() <= 1e-6, "theta={theta} c={c}: {} vs {exact}", q.value);
            }
        }
    }

    #[test]
    fn standard_grid_is_accurate_with_small_error_estimate() {
        let grid = LogGrid::standard();
        assert!(grid.is_wide());
        for c in [1.0, 3.0_f64.sqrt(), 30.0] {
            let q = theta_integral_quadrature(c, 0.3, &grid).unwrap();
            let exact = closed_form_theta_integral(c, 0.3).unwrap();
            assert!((q.value - exact).abs() <= 1e-9 * exact);
            assert!(q.error < 1e-6 * exact);
            assert!(q.tail_fraction() < TAIL_WARNING_FRACTION);
        }
    }

    #[test]
    fn kink_outside_the_grid_is_handled_by_the_tails() {
        let grid = LogGrid::new(1.0, 10.0, 64).unwrap();
        for c in [1e-3, 1e3] {
            let q = theta_integral_quadrature(c, 0.5, &grid).unwrap();
            let exact = closed_form_theta_integral(c, 0.5).unwrap();
            assert!((q.value - exact).abs() <= 1e-9 * exact);
        }
        let narrow = theta_integral_quadrature(1.0, 0.5, &grid).unwrap();
        assert!(narrow.tail_fraction() > TAIL_WARNING_FRACTION);
    }
}

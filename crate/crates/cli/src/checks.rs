//! Executes one [`CheckSpec`] against the core estimators.

use std::collections::BTreeMap;

use jumpsmooth::chaos::{isometry_check, moment_of_m};
use jumpsmooth::dsl::{Functional, Lipschitz};
use jumpsmooth::malliavin::{
    chain_rule_check, derivative_norm, mecke_check, product_rule_check, DerivativePoint, IdentityCheck,
    IDENTITY_TOLERANCE,
};
use jumpsmooth::model::PointMeasure;
use jumpsmooth::orlicz::{counterexample_l2log, counterexample_ln_f_sq, inclusion_check, l2log_norm, phi_star_moment};
use jumpsmooth::parallel::try_map_indexed;
use jumpsmooth::rng::Purpose;
use jumpsmooth::smoothness::{
    classify, classify_profile, closed_form_theta_integral, equivalence_ratio, fubini_check, interpolation_band,
    k_surrogate, k_upper, sandwich_check, theta_integral_quadrature, weighted_norm, LogGrid, SmoothnessQuery, Status,
};
use jumpsmooth::special::LnFactorial;
use jumpsmooth::{sample_path, BoxSet, Estimate, JumpPath, SeedSpec};

use crate::config::{CheckKind, CheckSpec, Experiment};
use crate::report::{Record, Table};

/// Range of the `s` grid used by interpolation checks.
const GRID_RANGE: (f64, f64) = (1e-3, 1e3);

/// Maps applied by `chain_rule` checks.
pub const CHAIN_RULE_MAPS: [Lipschitz; 4] =
    [Lipschitz::Clamp { lo: -1.0, hi: 1.0 }, Lipschitz::Min(0.5), Lipschitz::Max(-0.5), Lipschitz::Abs];

pub struct Outcome {
    pub record: Record,
    pub tables: Vec<Table>,
}

struct Partial {
    value: Option<f64>,
    stderr: Option<f64>,
    bound: Option<f64>,
    pass: bool,
    status: Option<Status>,
    details: BTreeMap<String, f64>,
    tables: Vec<Table>,
}

impl Partial {
    fn new(value: f64, stderr: Option<f64>, bound: Option<f64>, pass: bool) -> Self {
        Self { value: Some(value), stderr, bound, pass, status: None, details: BTreeMap::new(), tables: Vec::new() }
    }

    fn estimate(e: Estimate, bound: Option<f64>, pass: bool) -> Self {
        Self::new(e.mean, Some(e.stderr), bound, pass)
    }

    fn detail(mut self, key: &str, v: f64) -> Self {
        self.details.insert(key.to_string(), v);
        self
    }
}

type Run<T> = jumpsmooth::Result<T>;

pub fn run_check(exp: &Experiment, spec: &CheckSpec) -> Outcome {
    let base = Record {
        check: spec.name.clone(),
        kind: spec.kind_name.clone(),
        inputs_digest: spec.inputs_digest(),
        value: None,
        stderr: None,
        bound: None,
        pass: false,
        status: None,
        details: BTreeMap::new(),
        error: None,
    };
    match execute(exp, spec) {
        Ok(p) => Outcome {
            record: Record {
                value: p.value,
                stderr: p.stderr,
                bound: p.bound,
                pass: p.pass,
                status: p.status,
                details: p.details,
                ..base
            },
            tables: p.tables,
        },
        Err(e) => Outcome { record: Record { error: Some(e.to_string()), ..base }, tables: Vec::new() },
    }
}

fn execute(exp: &Experiment, spec: &CheckSpec) -> Run<Partial> {
    let model = &exp.model;
    let (n, seed, k) = (spec.samples, spec.seed, spec.sigma_multiplier);
    let f = |name: &str| -> &Functional { &exp.functionals[name] };
    let b = |name: &str| -> &BoxSet { &exp.boxes[name] };
    let grid = |points: usize| LogGrid::new(GRID_RANGE.0, GRID_RANGE.1, points);
    Ok(match &spec.kind {
        CheckKind::Isometry { grid, .. } => {
            let r = isometry_check(model, grid, n, seed)?;
            Partial::estimate(r.mc, Some(r.exact), r.mc.within(r.exact, k))
        }
        CheckKind::Moment { sets, target } => {
            let sets: Vec<&BoxSet> = sets.iter().map(|s| b(s)).collect();
            let e = moment_of_m(model, &sets, n, seed)?;
            Partial::estimate(e, Some(*target), e.within(*target, k))
        }
        CheckKind::Mecke { f: name, set, expect } => {
            let r = mecke_check(model, f(name), b(set), n, seed)?;
            let hits = expect.is_none_or(|t| r.lhs.within(t, k) && r.rhs.within(t, k));
            Partial::estimate(r.lhs, Some(r.rhs.mean), r.agrees(k) && hits)
                .detail("rhs_stderr", r.rhs.stderr)
                .detail("negative_evaluations", r.negative_evaluations as f64)
        }
        CheckKind::Sandwich { f: name, set, certified, expect } => {
            let r = sandwich_check(model, f(name), b(set), *certified, n, seed, k)?;
            let hits = expect.is_none_or(|[a, bb, d]| r.a.within(a, k) && r.b.within(bb, k) && r.d.within(d, k));
            Partial::estimate(r.d, Some(r.a.mean + r.b.mean), r.pass() && hits)
                .detail("a", r.a.mean)
                .detail("a_stderr", r.a.stderr)
                .detail("b", r.b.mean)
                .detail("b_stderr", r.b.stderr)
                .detail("lower", (r.a.mean - r.b.mean).abs())
                .detail("sigma", r.sigma)
                .detail("upper_asserted", if *certified { 1.0 } else { 0.0 })
        }
        CheckKind::DerivativeNorm { f: name, set, expect } => {
            let e = derivative_norm(model, f(name), b(set), n, seed)?;
            Partial::estimate(e, *expect, expect.is_none_or(|t| e.within(t, k)))
        }
        CheckKind::EquivalenceRatio { f: name, set } => {
            let r = equivalence_ratio(model, f(name), b(set), n, seed, k)?;
            Partial::estimate(r.value, Some(r.upper), r.pass).detail("lower", r.lower)
        }
        CheckKind::ThetaIntegral { c, theta, grid_points, tolerance } => {
            let q = theta_integral_quadrature(*c, *theta, &grid(*grid_points)?)?;
            let exact = closed_form_theta_integral(*c, *theta)?;
            let rel = (q.value - exact).abs() / exact;
            Partial::new(q.value, None, Some(exact), rel <= *tolerance)
                .detail("relative_error", rel)
                .detail("quadrature_error", q.error)
                .detail("tail_fraction", q.tail_fraction())
        }
        CheckKind::InterpolationBand { f: name, set, theta, grid_points } => {
            let r = interpolation_band(model, f(name), b(set), *theta, n, seed, &grid(*grid_points)?, k)?;
            Partial::estimate(r.value, Some(r.upper), r.pass).detail("lower", r.lower)
        }
        CheckKind::Fubini { f: name, set, theta, grid_points } => {
            let r = fubini_check(model, f(name), b(set), *theta, n, seed, &grid(*grid_points)?)?;
            // The value is squared, so its stderr is 2 ||Y|| se(||Y||).
            let sq_stderr = 2.0 * r.quadrature.norm.mean * r.quadrature.norm.stderr;
            Partial::new(r.interpolation_sq, Some(sq_stderr), Some(r.weighted_sq_scaled), r.pass)
                .detail("abs_diff", r.abs_diff)
                .detail("tolerance", r.tolerance)
                .detail("tail_fraction", r.quadrature.tail_fraction)
        }
        CheckKind::Surrogate { f: name, set, scales, certified } => {
            surrogate(exp, spec, f(name), b(set), scales, *certified)?
        }
        CheckKind::Classify { f: name, set, theta, truncation, expect } => {
            let q = SmoothnessQuery { a: b(set).clone(), theta: *theta, samples: n, seed, truncation: *truncation };
            let v = classify(model, f(name), &q)?;
            let mut p = Partial::estimate(v.weighted_norm, None, v.status == *expect);
            p.status = Some(v.status);
            if let Some(g) = v.growth {
                p = p.detail("growth_exponent", g.exponent).detail("growth_stderr", g.stderr);
            }
            if let Some(d) = v.decay {
                p = p.detail("decay_exponent", d.exponent).detail("decay_stderr", d.stderr);
            }
            p.tables.push(trace_table("trace", &v.trace));
            p
        }
        CheckKind::PhiStarMoment { lambda, expect, tolerance } => {
            let m = phi_star_moment(*lambda)?;
            let hits = expect.is_none_or(|t| (m.exact - t).abs() <= *tolerance);
            Partial::new(m.exact, None, Some(m.bound), m.exact <= m.bound && hits)
        }
        CheckKind::Counterexample { lambda, a, truncation } => {
            let table = LnFactorial::new(*truncation as usize);
            let v = classify_profile(*lambda, 1.0, *truncation, |i| counterexample_ln_f_sq(i, *lambda, *a, &table))?;
            let l2 = counterexample_l2log(*lambda, *a, *truncation)?;
            let cert = &l2.certificate;
            let mut p =
                Partial::new(v.weighted_norm.mean.powi(2), None, None, v.status == Status::Finite && cert.certified)
                    .detail("l2log_partial_sum", l2.scan.partial)
                    .detail("certificate_constant", cert.constant)
                    .detail("certificate_min_ratio", cert.min_ratio)
                    .detail("certificate_start", cert.start as f64)
                    .detail("certificate_checked_to", cert.checked_to as f64)
                    .detail("certified", if cert.certified { 1.0 } else { 0.0 });
            if let Some(d) = v.decay {
                p = p.detail("decay_exponent", d.exponent).detail("decay_stderr", d.stderr);
            }
            p.status = Some(v.status);
            p.tables.push(trace_table("d12_trace", &v.trace));
            p.tables.push(trace_table("l2log_trace", &l2.scan.trace));
            p
        }
        CheckKind::L2log { f: name, expect } => {
            let e = l2log_norm(model, f(name), n, seed)?;
            Partial::estimate(e, *expect, expect.is_none_or(|t| e.within(t, k)))
        }
        CheckKind::Inclusion { f: name, set } => {
            let r = inclusion_check(model, f(name), b(set), n, seed, k)?;
            Partial::estimate(r.lhs, Some(r.bound.mean), r.pass)
                .detail("bound_stderr", r.bound.stderr)
                .detail("young", r.young.mean)
                .detail("young_stderr", r.young.stderr)
        }
        CheckKind::ProductRule { f: name, g, set, cases } => {
            let (f1, f2) = (f(name), f(g));
            identities(exp, b(set), *cases, seed, |path, p| Ok(vec![product_rule_check(f1, f2, path, p)?]))?
        }
        CheckKind::ChainRule { f: name, set, cases } => {
            let f1 = f(name);
            identities(exp, b(set), *cases, seed, |path, p| {
                CHAIN_RULE_MAPS.iter().map(|&g| chain_rule_check(g, f1, path, p)).collect()
            })?
        }
    })
}

fn trace_table(name: &str, trace: &[(u64, f64)]) -> Table {
    Table {
        name: name.to_string(),
        columns: vec!["m".into(), "partial_sum".into()],
        rows: trace.iter().map(|&(m, s)| vec![m as f64, s]).collect(),
    }
}

fn surrogate(
    exp: &Experiment,
    spec: &CheckSpec,
    f: &Functional,
    set: &BoxSet,
    scales: &[f64],
    certified: bool,
) -> Run<Partial> {
    let (n, seed) = (spec.samples, spec.seed);
    let plain = weighted_norm(&exp.model, f, set, 0.0, n, seed)?;
    let full = weighted_norm(&exp.model, f, set, 1.0, n, seed)?;
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for &s in scales {
        let sur = k_surrogate(&exp.model, f, set, s, n, seed)?;
        let branch = plain.mean.min(s * full.mean);
        if branch > 0.0 {
            worst = worst.max(sur.mean / branch);
        }
        let mut row = vec![s, sur.mean, sur.stderr, branch];
        if certified {
            let up = k_upper(&exp.model, f, set, s, n, seed)?;
            row.extend([up.mean, up.stderr]);
        }
        rows.push(row);
    }
    let mut columns: Vec<String> = ["s", "surrogate", "surrogate_stderr", "branch_bound"].map(String::from).into();
    if certified {
        columns.extend(["k_upper", "k_upper_stderr"].map(String::from));
    }
    let mut p = Partial::new(worst, None, Some(1.0), worst <= 1.0 + 1e-12);
    p.tables.push(Table { name: "surrogate".into(), columns, rows });
    Ok(p)
}

/// Pathwise identities on `cases` random (path, point) pairs, points drawn
/// from the intensity restricted to `set`.
fn identities<F>(exp: &Experiment, set: &BoxSet, cases: u64, seed: u64, check: F) -> Run<Partial>
where
    F: Fn(&JumpPath, DerivativePoint) -> Run<Vec<IdentityCheck>> + Sync,
{
    let root = SeedSpec::new(seed, 0);
    let results = try_map_indexed(cases as usize, |i| -> Run<Vec<IdentityCheck>> {
        let s = root.child(i as u64);
        let path = sample_path(&exp.model, s);
        let (t, x) = exp
            .model
            .sample_point(set, PointMeasure::Intensity, &mut s.rng(Purpose::Point))
            .ok_or_else(|| jumpsmooth::Error::InvalidArgument("box carries no jump intensity".into()))?;
        check(&path, DerivativePoint::new(t, x)?)
    })?;
    let all: Vec<&IdentityCheck> = results.iter().flatten().collect();
    let worst = all.iter().map(|c| c.relative_error()).fold(0.0, f64::max);
    let failures = all.iter().filter(|c| !c.pass).count();
    Ok(Partial::new(worst, None, Some(IDENTITY_TOLERANCE), failures == 0)
        .detail("evaluations", all.len() as f64)
        .detail("failures", failures as f64))
}

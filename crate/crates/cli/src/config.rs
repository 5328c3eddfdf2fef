//! Experiment config: TOML text in, validated [`Experiment`] out.
//!
//! Static validation never samples. Every problem found is collected into a
//! [`Diagnostic`] so one pass reports all of them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Range;
use std::path::PathBuf;
use std::sync::Arc;

use jumpsmooth::chaos::{CoefficientGrid, Partition, MAX_ORDER};
use jumpsmooth::dsl::Functional;
use jumpsmooth::smoothness::{Status, DEFAULT_TRUNCATION};
use jumpsmooth::{BoxSet, JumpModel, NuComponent, Rect};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use toml::Spanned;

pub const DEFAULT_SAMPLES: u64 = 100_000;
pub const DEFAULT_SIGMA_MULTIPLIER: f64 = 3.0;
pub const DEFAULT_GRID_POINTS: usize = 512;
pub const DEFAULT_CASES: u64 = 1000;
/// Level whose last doubling is checked when `classify` samples.
pub const DEFAULT_MC_TRUNCATION: u64 = 64;

/// One problem found while loading a config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    /// Dotted path of the offending field, e.g. `checks[2].box`.
    pub field: String,
    /// 1-based line in the config text, when known.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    run: RawRun,
    model: RawModel,
    #[serde(default)]
    boxes: BTreeMap<String, Spanned<Vec<[f64; 4]>>>,
    #[serde(default)]
    functionals: BTreeMap<String, Spanned<String>>,
    #[serde(default)]
    checks: Vec<RawCheck>,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    seed: u64,
    samples: Option<Spanned<i64>>,
    sigma_multiplier: Option<Spanned<f64>>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    #[serde(default)]
    drift: f64,
    horizon: f64,
    #[serde(default)]
    sigma: f64,
    nu: Vec<RawNu>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawNu {
    Atom { at: f64, mass: f64 },
    Uniform { lo: f64, hi: f64, mass: f64 },
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<String>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawTerm {
    cells: Vec<String>,
    value: f64,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawCheck {
    name: Spanned<String>,
    kind: Spanned<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    functional: Option<Spanned<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    other: Option<Spanned<String>>,
    #[serde(rename = "box", skip_serializing_if = "Option::is_none")]
    set: Option<Spanned<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    boxes: Option<Spanned<Vec<String>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    partition: Option<Spanned<Vec<String>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    terms: Option<Spanned<Vec<RawTerm>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    samples: Option<Spanned<i64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma_multiplier: Option<Spanned<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    theta: Option<Spanned<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c: Option<Spanned<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda: Option<Spanned<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    a: Option<Spanned<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    s: Option<Spanned<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    truncation: Option<Spanned<i64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid_points: Option<Spanned<i64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cases: Option<Spanned<i64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tolerance: Option<Spanned<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    expect: Option<Spanned<toml::Value>>,
}

impl RawCheck {
    /// Optional fields that were given, with their spans.
    fn present(&self) -> Vec<(&'static str, Range<usize>)> {
        let mut out = Vec::new();
        macro_rules! field {
            ($($f:ident => $n:literal),*) => {
                $(if let Some(v) = &self.$f { out.push(($n, v.span())); })*
            };
        }
        field!(functional => "functional", other => "other", set => "box", boxes => "boxes",
            partition => "partition", terms => "terms", samples => "samples",
            sigma_multiplier => "sigma_multiplier", theta => "theta", c => "c", lambda => "lambda", a => "a",
            s => "s", truncation => "truncation", grid_points => "grid_points", cases => "cases",
            tolerance => "tolerance", expect => "expect");
        out
    }
}

/// What a check computes, with names already resolved.
#[derive(Debug, Clone)]
pub enum CheckKind {
    Isometry { grid: CoefficientGrid, cells: Vec<String> },
    Moment { sets: Vec<String>, target: f64 },
    Mecke { f: String, set: String, expect: Option<f64> },
    Sandwich { f: String, set: String, certified: bool, expect: Option<[f64; 3]> },
    DerivativeNorm { f: String, set: String, expect: Option<f64> },
    EquivalenceRatio { f: String, set: String },
    ThetaIntegral { c: f64, theta: f64, grid_points: usize, tolerance: f64 },
    InterpolationBand { f: String, set: String, theta: f64, grid_points: usize },
    Fubini { f: String, set: String, theta: f64, grid_points: usize },
    Surrogate { f: String, set: String, scales: Vec<f64>, certified: bool },
    Classify { f: String, set: String, theta: f64, truncation: u64, expect: Status },
    PhiStarMoment { lambda: f64, expect: Option<f64>, tolerance: f64 },
    Counterexample { lambda: f64, a: f64, truncation: u64 },
    L2log { f: String, expect: Option<f64> },
    Inclusion { f: String, set: String },
    ProductRule { f: String, g: String, set: String, cases: u64 },
    ChainRule { f: String, set: String, cases: u64 },
}

pub const KINDS: [&str; 17] = [
    "isometry",
    "moment",
    "mecke",
    "sandwich",
    "derivative_norm",
    "equivalence_ratio",
    "theta_integral",
    "interpolation_band",
    "fubini",
    "surrogate",
    "classify",
    "phi_star_moment",
    "counterexample",
    "l2log",
    "inclusion",
    "product_rule",
    "chain_rule",
];

#[derive(Debug, Clone)]
pub struct CheckSpec {
    pub name: String,
    pub kind_name: String,
    pub kind: CheckKind,
    pub samples: usize,
    pub seed: u64,
    pub sigma_multiplier: f64,
    /// Canonical JSON of everything the check reads.
    pub inputs: Value,
}

impl CheckSpec {
    pub fn inputs_digest(&self) -> String {
        hex::encode(Sha256::digest(self.inputs.to_string().as_bytes()))
    }
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub model: JumpModel,
    pub boxes: BTreeMap<String, BoxSet>,
    pub functionals: BTreeMap<String, Functional>,
    pub checks: Vec<CheckSpec>,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    /// SHA-256 of the config bytes.
    pub config_sha256: String,
}

struct Ctx<'a> {
    src: &'a str,
    diags: Vec<Diagnostic>,
}

impl Ctx<'_> {
    fn line(&self, span: &Range<usize>) -> usize {
        self.src[..span.start.min(self.src.len())].matches('\n').count() + 1
    }

    fn push(&mut self, field: impl Into<String>, span: Option<&Range<usize>>, message: impl Into<String>) {
        let line = span.map(|s| self.line(s));
        self.diags.push(Diagnostic { field: field.into(), line, message: message.into() });
    }
}

/// Parse and statically validate a config. `Err` carries every diagnostic.
pub fn load(src: &str) -> Result<Experiment, Vec<Diagnostic>> {
    let raw: RawConfig = toml::from_str(src).map_err(|e| {
        let mut cx = Ctx { src, diags: Vec::new() };
        let field = schema_field(e.message());
        cx.push(field, e.span().as_ref(), e.message().trim().to_string());
        cx.diags
    })?;
    let mut cx = Ctx { src, diags: Vec::new() };
    let exp = build(&raw, &mut cx);
    match exp {
        Some(exp) if cx.diags.is_empty() => Ok(exp),
        _ => Err(cx.diags),
    }
}

fn schema_field(message: &str) -> String {
    // serde names the field in backticks for unknown and missing fields
    message.split('`').nth(1).map(|s| s.to_string()).unwrap_or_else(|| "config".to_string())
}

fn build(raw: &RawConfig, cx: &mut Ctx) -> Option<Experiment> {
    let model = build_model(&raw.model, cx);
    let default_samples = positive(raw.run.samples.as_ref(), "run.samples", cx).unwrap_or(DEFAULT_SAMPLES);
    let default_sigma = raw.run.sigma_multiplier.as_ref().map(|s| *s.get_ref()).unwrap_or(DEFAULT_SIGMA_MULTIPLIER);
    if let Some(s) = &raw.run.sigma_multiplier {
        if !s.get_ref().is_finite() || *s.get_ref() <= 0.0 {
            cx.push("run.sigma_multiplier", Some(&s.span()), "must be positive");
        }
    }

    let mut boxes = BTreeMap::new();
    for (name, rects) in &raw.boxes {
        let field = format!("boxes.{name}");
        if !is_identifier(name) {
            cx.push(&field, Some(&rects.span()), "box names must be identifiers");
            continue;
        }
        let built: Result<Vec<Rect>, _> = rects.get_ref().iter().map(|r| Rect::new(r[0], r[1], r[2], r[3])).collect();
        match built.and_then(BoxSet::new) {
            Ok(b) => {
                if let Some(m) = &model {
                    if let Err(e) = m.check_box(&b) {
                        cx.push(&field, Some(&rects.span()), e.to_string());
                    }
                }
                boxes.insert(name.clone(), b);
            }
            Err(e) => cx.push(&field, Some(&rects.span()), e.to_string()),
        }
    }

    let mut functionals = BTreeMap::new();
    if let Some(m) = &model {
        for (name, source) in &raw.functionals {
            let field = format!("functionals.{name}");
            match Functional::compile(source.get_ref(), &boxes, m) {
                Ok(f) => {
                    functionals.insert(name.clone(), f);
                }
                Err(jumpsmooth::Error::Parse(p)) => {
                    cx.push(&field, Some(&source.span()), format!("expression error: {p}"))
                }
                Err(e) => cx.push(&field, Some(&source.span()), e.to_string()),
            }
        }
    }

    let model_json = serde_json::to_value(&raw.model).unwrap_or(Value::Null);
    let mut names = BTreeSet::new();
    let mut checks = Vec::new();
    for (i, rc) in raw.checks.iter().enumerate() {
        let name = rc.name.get_ref().clone();
        if !is_file_safe(&name) {
            cx.push(format!("checks[{i}].name"), Some(&rc.name.span()), "use letters, digits, `-`, `_` or `.`");
        }
        if !names.insert(name.clone()) {
            cx.push(format!("checks[{i}].name"), Some(&rc.name.span()), format!("duplicate check name `{name}`"));
        }
        let samples = positive(rc.samples.as_ref(), &format!("checks[{i}].samples"), cx).unwrap_or(default_samples);
        let sigma = match &rc.sigma_multiplier {
            Some(s) if !s.get_ref().is_finite() || *s.get_ref() <= 0.0 => {
                cx.push(format!("checks[{i}].sigma_multiplier"), Some(&s.span()), "must be positive");
                default_sigma
            }
            Some(s) => *s.get_ref(),
            None => default_sigma,
        };
        let seed = rc.seed.unwrap_or_else(|| raw.run.seed.wrapping_add(i as u64));
        let Some(m) = &model else { continue };
        let declared =
            (raw.functionals.keys().map(String::as_str).collect(), raw.boxes.keys().map(String::as_str).collect());
        let mut b = KindBuilder {
            cx,
            rc,
            index: i,
            model: m,
            boxes: &boxes,
            functionals: &functionals,
            declared,
            used: Vec::new(),
        };
        let kind = b.build();
        // A kind that bailed early has not marked its later fields as used.
        if kind.is_some() {
            b.reject_unused();
        }
        let Some(kind) = kind else { continue };

        let mut check_json = serde_json::to_value(rc).unwrap_or(Value::Null);
        if let Value::Object(obj) = &mut check_json {
            obj.remove("name");
            obj.insert("samples".into(), json!(samples));
            obj.insert("seed".into(), json!(seed));
            obj.insert("sigma_multiplier".into(), json!(sigma));
        }
        let referenced = referenced_names(&kind);
        let fs: BTreeMap<_, _> = referenced
            .0
            .iter()
            .filter_map(|n| raw.functionals.get(n).map(|s| (n.clone(), json!(s.get_ref()))))
            .collect();
        let mut bs: BTreeMap<String, Value> = BTreeMap::new();
        let mut names: Vec<String> = referenced.1.clone();
        for f in referenced.0.iter().filter_map(|f| functionals.get(f)) {
            names.extend(f.referenced_boxes().map(str::to_string));
        }
        for n in names {
            if let Some(r) = raw.boxes.get(&n) {
                bs.insert(n, json!(r.get_ref()));
            }
        }
        let inputs = json!({ "check": check_json, "functionals": fs, "boxes": bs, "model": model_json });
        checks.push(CheckSpec {
            name,
            kind_name: rc.kind.get_ref().clone(),
            kind,
            samples: samples as usize,
            seed,
            sigma_multiplier: sigma,
            inputs,
        });
    }

    let model = model?;
    Some(Experiment {
        model,
        boxes,
        functionals,
        checks,
        seed: raw.run.seed,
        output_dir: raw.output.dir.as_ref().map(PathBuf::from),
        config_sha256: String::new(),
    })
}

/// Load and record the digest of the exact bytes.
pub fn load_bytes(bytes: &[u8]) -> Result<Experiment, Vec<Diagnostic>> {
    let src = std::str::from_utf8(bytes)
        .map_err(|e| vec![Diagnostic { field: "config".into(), line: None, message: format!("not UTF-8: {e}") }])?;
    let mut exp = load(src)?;
    exp.config_sha256 = hex::encode(Sha256::digest(bytes));
    Ok(exp)
}

fn build_model(raw: &RawModel, cx: &mut Ctx) -> Option<JumpModel> {
    let mut comps = Vec::new();
    for (i, nu) in raw.nu.iter().enumerate() {
        let c = match *nu {
            RawNu::Atom { at, mass } => NuComponent::atom(at, mass),
            RawNu::Uniform { lo, hi, mass } => NuComponent::uniform(lo, hi, mass),
        };
        match c {
            Ok(c) => comps.push(c),
            Err(e) => cx.push(format!("model.nu[{i}]"), None, e.to_string()),
        }
    }
    let model = match JumpModel::with_sigma(raw.drift, raw.horizon, raw.sigma, comps) {
        Ok(m) => m,
        Err(e) => {
            cx.push("model", None, e.to_string());
            return None;
        }
    };
    if let Err(e) = model.ensure_in_scope() {
        cx.push("model.sigma", None, e.to_string());
        return None;
    }
    Some(model)
}

fn positive(v: Option<&Spanned<i64>>, field: &str, cx: &mut Ctx) -> Option<u64> {
    let v = v?;
    if *v.get_ref() <= 0 {
        cx.push(field, Some(&v.span()), format!("must be a positive integer, got {}", v.get_ref()));
        return None;
    }
    Some(*v.get_ref() as u64)
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn is_file_safe(s: &str) -> bool {
    !s.is_empty() && !s.starts_with('.') && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

/// Functional names and box names a check reads directly.
fn referenced_names(kind: &CheckKind) -> (Vec<String>, Vec<String>) {
    use CheckKind::*;
    match kind {
        Isometry { cells, .. } => (vec![], cells.clone()),
        Moment { sets, .. } => (vec![], sets.clone()),
        Mecke { f, set, .. }
        | Sandwich { f, set, .. }
        | DerivativeNorm { f, set, .. }
        | EquivalenceRatio { f, set }
        | InterpolationBand { f, set, .. }
        | Fubini { f, set, .. }
        | Surrogate { f, set, .. }
        | Classify { f, set, .. }
        | Inclusion { f, set }
        | ChainRule { f, set, .. } => (vec![f.clone()], vec![set.clone()]),
        ProductRule { f, g, set, .. } => (vec![f.clone(), g.clone()], vec![set.clone()]),
        L2log { f, .. } => (vec![f.clone()], vec![]),
        ThetaIntegral { .. } | PhiStarMoment { .. } | Counterexample { .. } => (vec![], vec![]),
    }
}

struct KindBuilder<'a, 'c> {
    cx: &'a mut Ctx<'c>,
    rc: &'a RawCheck,
    index: usize,
    model: &'a JumpModel,
    boxes: &'a BTreeMap<String, BoxSet>,
    functionals: &'a BTreeMap<String, Functional>,
    /// Every functional and box name in the config, valid or not.
    declared: (BTreeSet<&'a str>, BTreeSet<&'a str>),
    used: Vec<&'static str>,
}

impl KindBuilder<'_, '_> {
    fn field(&self, name: &str) -> String {
        format!("checks[{}].{name}", self.index)
    }

    fn err(&mut self, name: &str, span: Option<&Range<usize>>, msg: impl Into<String>) {
        let rc = self.rc;
        let field = self.field(name);
        let span = span.cloned().unwrap_or_else(|| rc.name.span());
        self.cx.push(field, Some(&span), msg);
    }

    fn missing(&mut self, name: &'static str) {
        let rc = self.rc;
        let kind = rc.kind.get_ref().clone();
        self.err(name, None, format!("kind `{kind}` requires `{name}`"));
    }

    fn functional(&mut self, name: &'static str) -> Option<String> {
        let rc = self.rc;
        self.used.push(name);
        let v = if name == "other" { &rc.other } else { &rc.functional };
        let Some(v) = v else {
            self.missing(name);
            return None;
        };
        if !self.functionals.contains_key(v.get_ref()) {
            // Declared but broken: already reported where it is defined.
            if self.declared.0.contains(v.get_ref().as_str()) {
                return None;
            }
            let msg = format!("unresolved functional `{}`", v.get_ref());
            self.err(name, Some(&v.span()), msg);
            return None;
        }
        Some(v.get_ref().clone())
    }

    fn set(&mut self) -> Option<String> {
        let rc = self.rc;
        self.used.push("box");
        let Some(v) = &rc.set else {
            self.missing("box");
            return None;
        };
        if !self.boxes.contains_key(v.get_ref()) {
            if self.declared.1.contains(v.get_ref().as_str()) {
                return None;
            }
            let msg = format!("unresolved box `{}`", v.get_ref());
            self.err("box", Some(&v.span()), msg);
            return None;
        }
        Some(v.get_ref().clone())
    }

    fn float(&mut self, name: &'static str, default: Option<f64>, ok: impl Fn(f64) -> bool, rule: &str) -> Option<f64> {
        let rc = self.rc;
        self.used.push(name);
        let v = match name {
            "theta" => &rc.theta,
            "c" => &rc.c,
            "lambda" => &rc.lambda,
            "a" => &rc.a,
            "tolerance" => &rc.tolerance,
            _ => unreachable!("no float field `{name}`"),
        };
        match (v, default) {
            (Some(v), _) if !ok(*v.get_ref()) => {
                let msg = format!("{rule}, got {}", v.get_ref());
                self.err(name, Some(&v.span()), msg);
                None
            }
            (Some(v), _) => Some(*v.get_ref()),
            (None, Some(d)) => Some(d),
            (None, None) => {
                self.missing(name);
                None
            }
        }
    }

    fn count(&mut self, name: &'static str, default: u64) -> Option<u64> {
        let rc = self.rc;
        self.used.push(name);
        let v = match name {
            "truncation" => &rc.truncation,
            "grid_points" => &rc.grid_points,
            "cases" => &rc.cases,
            _ => unreachable!("no integer field `{name}`"),
        };
        let field = self.field(name);
        match v {
            Some(v) => positive(Some(v), &field, self.cx),
            None => Some(default),
        }
    }

    fn expect_scalar(&mut self) -> Result<Option<f64>, ()> {
        let rc = self.rc;
        self.used.push("expect");
        match &rc.expect {
            None => Ok(None),
            Some(v) => match v.get_ref() {
                toml::Value::Float(x) => Ok(Some(*x)),
                toml::Value::Integer(x) => Ok(Some(*x as f64)),
                _ => {
                    self.err("expect", Some(&v.span()), "expected a number");
                    Err(())
                }
            },
        }
    }

    fn certified(&mut self, f: &str, set: &str) -> bool {
        self.functionals[f].measurability(&self.boxes[set]).certified
    }

    fn require_certificate(&mut self, f: &str, set: &str) -> bool {
        let rc = self.rc;
        let report = self.functionals[f].measurability(&self.boxes[set]);
        if let Err(e) = report.into_result() {
            let span = rc.functional.as_ref().map(|v| v.span());
            self.err("functional", span.as_ref(), format!("`{f}` w.r.t. box `{set}`: {e}"));
            return false;
        }
        true
    }

    fn samples(&mut self) {
        self.used.push("samples");
    }

    fn reject_unused(&mut self) {
        let rc = self.rc;
        let kind = rc.kind.get_ref().clone();
        for (name, span) in rc.present() {
            if !self.used.contains(&name) {
                let field = self.field(name);
                self.cx.push(field, Some(&span), format!("not used by kind `{kind}`"));
            }
        }
    }

    fn build(&mut self) -> Option<CheckKind> {
        let rc = self.rc;
        let kind = rc.kind.get_ref().clone();
        let k = match kind.as_str() {
            "isometry" => {
                self.samples();
                self.isometry()?
            }
            "moment" => {
                self.samples();
                self.moment()?
            }
            "mecke" => {
                self.samples();
                let (f, set) = (self.functional("functional"), self.set());
                let expect = self.expect_scalar().ok()?;
                CheckKind::Mecke { f: f?, set: set?, expect }
            }
            "sandwich" => {
                self.samples();
                let (f, set) = (self.functional("functional"), self.set());
                let expect = self.expect_triple().ok()?;
                let (f, set) = (f?, set?);
                let certified = self.certified(&f, &set);
                CheckKind::Sandwich { f, set, certified, expect }
            }
            "derivative_norm" => {
                self.samples();
                let (f, set) = (self.functional("functional"), self.set());
                let expect = self.expect_scalar().ok()?;
                let (f, set) = (f?, set?);
                self.nonnull(&set)?;
                CheckKind::DerivativeNorm { f, set, expect }
            }
            "equivalence_ratio" => {
                self.samples();
                let (f, set) = (self.functional("functional")?, self.set()?);
                if !self.require_certificate(&f, &set) {
                    return None;
                }
                CheckKind::EquivalenceRatio { f, set }
            }
            "theta_integral" => {
                let c = self.float("c", None, |v| v > 0.0 && v.is_finite(), "must be positive");
                let theta = self.theta_open();
                let grid_points = self.count("grid_points", 10_000);
                let tolerance = self.float("tolerance", Some(1e-6), |v| v > 0.0, "must be positive");
                CheckKind::ThetaIntegral {
                    c: c?,
                    theta: theta?,
                    grid_points: grid_points? as usize,
                    tolerance: tolerance?,
                }
            }
            "interpolation_band" | "fubini" => {
                self.samples();
                let (f, set) = (self.functional("functional"), self.set());
                let theta = self.theta_open();
                let grid_points = self.count("grid_points", DEFAULT_GRID_POINTS as u64);
                let (f, set, theta, grid_points) = (f?, set?, theta?, grid_points? as usize);
                if grid_points < 2 {
                    self.err("grid_points", None, "need at least 2 points");
                    return None;
                }
                if kind == "fubini" {
                    CheckKind::Fubini { f, set, theta, grid_points }
                } else {
                    CheckKind::InterpolationBand { f, set, theta, grid_points }
                }
            }
            "surrogate" => {
                self.samples();
                let (f, set) = (self.functional("functional"), self.set());
                self.used.push("s");
                let scales = match &rc.s {
                    Some(s) if s.get_ref().is_empty() || s.get_ref().iter().any(|v| !(*v > 0.0 && v.is_finite())) => {
                        let span = s.span();
                        self.err("s", Some(&span), "scales must be a nonempty list of positive numbers");
                        return None;
                    }
                    Some(s) => s.get_ref().clone(),
                    None => (0..=24).map(|k| 10f64.powf(-3.0 + 0.25 * k as f64)).collect(),
                };
                let (f, set) = (f?, set?);
                let certified = self.certified(&f, &set);
                CheckKind::Surrogate { f, set, scales, certified }
            }
            "classify" => {
                self.samples();
                let (f, set) = (self.functional("functional")?, self.set()?);
                let theta = self.float("theta", None, |v| v > 0.0 && v <= 1.0, "theta must lie in (0, 1]")?;
                if !self.require_certificate(&f, &set) {
                    return None;
                }
                let exact = self.functionals[&f].count_profile(&self.boxes[&set]).is_ok();
                let truncation =
                    self.count("truncation", if exact { DEFAULT_TRUNCATION } else { DEFAULT_MC_TRUNCATION })?;
                let expect = self.expect_status()?;
                CheckKind::Classify { f, set, theta, truncation, expect }
            }
            "phi_star_moment" => {
                let lambda = self.float("lambda", None, |v| v > 0.0 && v.is_finite(), "must be positive");
                let expect = self.expect_scalar().ok()?;
                let tolerance = self.float("tolerance", Some(1e-4), |v| v > 0.0, "must be positive");
                CheckKind::PhiStarMoment { lambda: lambda?, expect, tolerance: tolerance? }
            }
            "counterexample" => {
                let lambda = self.float("lambda", None, |v| v > 0.0 && v.is_finite(), "must be positive");
                let a = self.float("a", None, |v| v > 1.0 && v <= 2.0, "a must lie in (1, 2]");
                let truncation = self.count("truncation", 1_000_000);
                CheckKind::Counterexample { lambda: lambda?, a: a?, truncation: truncation? }
            }
            "l2log" => {
                self.samples();
                let f = self.functional("functional");
                let expect = self.expect_scalar().ok()?;
                CheckKind::L2log { f: f?, expect }
            }
            "inclusion" => {
                self.samples();
                let (f, set) = (self.functional("functional"), self.set());
                CheckKind::Inclusion { f: f?, set: set? }
            }
            "product_rule" => {
                let (f, g, set) = (self.functional("functional"), self.functional("other"), self.set());
                let cases = self.count("cases", DEFAULT_CASES);
                let set = set?;
                self.nonnull_intensity(&set)?;
                CheckKind::ProductRule { f: f?, g: g?, set, cases: cases? }
            }
            "chain_rule" => {
                let (f, set) = (self.functional("functional"), self.set());
                let cases = self.count("cases", DEFAULT_CASES);
                let set = set?;
                self.nonnull_intensity(&set)?;
                CheckKind::ChainRule { f: f?, set, cases: cases? }
            }
            other => {
                let span = rc.kind.span();
                self.err(
                    "kind",
                    Some(&span),
                    format!("unknown check kind `{other}`; expected one of {}", KINDS.join(", ")),
                );
                // keep every field so only the kind is reported
                self.used.extend(rc.present().into_iter().map(|(n, _)| n));
                return None;
            }
        };
        Some(k)
    }

    fn theta_open(&mut self) -> Option<f64> {
        self.float("theta", None, |v| v > 0.0 && v < 1.0, "theta must lie in (0, 1)")
    }

    fn nonnull(&mut self, set: &str) -> Option<()> {
        let rc = self.rc;
        match self.model.m_measure(&self.boxes[set]) {
            Ok(m) if m > 0.0 => Some(()),
            _ => {
                let span = rc.set.as_ref().map(|v| v.span());
                self.err("box", span.as_ref(), format!("box `{set}` carries no m-mass; nothing to sample"));
                None
            }
        }
    }

    fn nonnull_intensity(&mut self, set: &str) -> Option<()> {
        let rc = self.rc;
        if self.model.expected_count(&self.boxes[set]) > 0.0 {
            return Some(());
        }
        let span = rc.set.as_ref().map(|v| v.span());
        self.err("box", span.as_ref(), format!("box `{set}` carries no jump intensity; no points to draw"));
        None
    }

    fn expect_triple(&mut self) -> Result<Option<[f64; 3]>, ()> {
        let rc = self.rc;
        self.used.push("expect");
        let Some(v) = &rc.expect else { return Ok(None) };
        let span = v.span();
        let table = match v.get_ref() {
            toml::Value::Table(t) => t,
            _ => {
                self.err("expect", Some(&span), "expected a table `{ a = .., b = .., d = .. }`");
                return Err(());
            }
        };
        let mut out = [0.0; 3];
        let mut ok = table.keys().all(|k| matches!(k.as_str(), "a" | "b" | "d"));
        for (slot, key) in out.iter_mut().zip(["a", "b", "d"]) {
            match table.get(key) {
                Some(toml::Value::Float(x)) => *slot = *x,
                Some(toml::Value::Integer(x)) => *slot = *x as f64,
                _ => ok = false,
            }
        }
        if !ok {
            self.err("expect", Some(&span), "expected numeric keys `a`, `b` and `d` only");
            return Err(());
        }
        Ok(Some(out))
    }

    fn expect_status(&mut self) -> Option<Status> {
        let rc = self.rc;
        self.used.push("expect");
        let Some(v) = &rc.expect else { return Some(Status::Finite) };
        let span = v.span();
        match v.get_ref().as_str() {
            Some("finite") => Some(Status::Finite),
            Some("divergent") => Some(Status::Divergent),
            Some("inconclusive") => Some(Status::Inconclusive),
            _ => {
                self.err("expect", Some(&span), "expected \"finite\", \"divergent\" or \"inconclusive\"");
                None
            }
        }
    }

    fn names(&mut self, field: &'static str, v: &Spanned<Vec<String>>) -> Option<Vec<String>> {
        let mut ok = true;
        for n in v.get_ref() {
            if !self.boxes.contains_key(n) {
                let span = v.span();
                self.err(field, Some(&span), format!("unresolved box `{n}`"));
                ok = false;
            }
        }
        ok.then(|| v.get_ref().clone())
    }

    fn moment(&mut self) -> Option<CheckKind> {
        let rc = self.rc;
        self.used.push("boxes");
        let Some(v) = &rc.boxes else {
            self.missing("boxes");
            return None;
        };
        let sets = self.names("boxes", v)?;
        let expect = self.expect_scalar().ok()?;
        if sets.is_empty() || sets.len() > MAX_ORDER {
            let span = v.span();
            self.err("boxes", Some(&span), format!("give between 1 and {MAX_ORDER} boxes"));
            return None;
        }
        let target = match (expect, sets.len()) {
            (Some(t), _) => t,
            (None, 1) => 0.0,
            (None, 2) => {
                let both = self.boxes[&sets[0]].intersect(&self.boxes[&sets[1]]);
                self.model.m_measure(&both).ok()?
            }
            (None, _) => {
                self.missing("expect");
                return None;
            }
        };
        Some(CheckKind::Moment { sets, target })
    }

    fn isometry(&mut self) -> Option<CheckKind> {
        let rc = self.rc;
        self.used.push("partition");
        self.used.push("terms");
        let (Some(p), Some(terms)) = (&rc.partition, &rc.terms) else {
            if rc.partition.is_none() {
                self.missing("partition");
            }
            if rc.terms.is_none() {
                self.missing("terms");
            }
            return None;
        };
        let cells = self.names("partition", p)?;
        let partition = match Partition::new(self.model, cells.iter().map(|n| self.boxes[n].clone()).collect()) {
            Ok(p) => Arc::new(p),
            Err(e) => {
                let span = p.span();
                self.err("partition", Some(&span), e.to_string());
                return None;
            }
        };
        let n_max = terms.get_ref().iter().map(|t| t.cells.len()).max().unwrap_or(0).max(1);
        if n_max > MAX_ORDER {
            let span = terms.span();
            self.err("terms", Some(&span), format!("chaos order above {MAX_ORDER}"));
            return None;
        }
        let mut grid = CoefficientGrid::zeros(partition, n_max).ok()?;
        for t in terms.get_ref() {
            let idx: Option<Vec<usize>> = t.cells.iter().map(|c| cells.iter().position(|n| n == c)).collect();
            let Some(idx) = idx else {
                let span = terms.span();
                self.err("terms", Some(&span), format!("term cells {:?} are not all in the partition", t.cells));
                return None;
            };
            if let Err(e) = grid.set(&idx, t.value) {
                let span = terms.span();
                self.err("terms", Some(&span), e.to_string());
                return None;
            }
        }
        Some(CheckKind::Isometry { grid: grid.symmetrize(), cells })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[run]
seed = 7

[model]
horizon = 1.0
[[model.nu]]
kind = "atom"
at = 1.0
mass = 2.0

[boxes]
A = [[0.0, 1.0, 0.5, 1.5]]
"#;

    fn with(extra: &str) -> String {
        format!("{BASE}{extra}")
    }

    #[test]
    fn minimal_config_is_valid() {
        let exp = load(&with("[functionals]\nY = \"count(A)\"\n")).unwrap();
        assert_eq!(exp.functionals.len(), 1);
        assert!(exp.checks.is_empty());
    }

    #[test]
    fn unknown_field_names_the_field_and_line() {
        let d = load(&with("[functionals]\nY = \"count(A)\"\n[[checks]]\nname = \"x\"\nkind = \"mecke\"\nbogus = 1\n"))
            .unwrap_err();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].field, "bogus");
        assert_eq!(d[0].line, Some(19));
    }

    #[test]
    fn sigma_is_out_of_scope() {
        let src = BASE.replace("horizon = 1.0", "horizon = 1.0\nsigma = 0.1");
        let d = load(&src).unwrap_err();
        assert!(d[0].message.contains("out of scope"), "{d:?}");
    }

    #[test]
    fn undeclared_box_is_one_diagnostic() {
        let d = load(&with("[functionals]\nY = \"count(Q)\"\n")).unwrap_err();
        assert_eq!(d.len(), 1, "{d:?}");
        assert_eq!(d[0].field, "functionals.Y");
        assert!(d[0].message.contains("`Q`"));
    }

    #[test]
    fn uncertified_equivalence_ratio_names_the_box() {
        let src = with(
            "B = [[0.0, 1.0, 2.0, 3.0]]\n[functionals]\nY = \"count(B)\"\n[[checks]]\nname = \"r\"\nkind = \"equivalence_ratio\"\nfunctional = \"Y\"\nbox = \"A\"\n",
        );
        let d = load(&src).unwrap_err();
        assert_eq!(d.len(), 1, "{d:?}");
        assert!(d[0].message.contains("`B`"), "{d:?}");
    }

    #[test]
    fn diagnostics_are_aggregated() {
        let src = with(
            "[functionals]\nY = \"count(A)\"\n[[checks]]\nname = \"a\"\nkind = \"mecke\"\nfunctional = \"Z\"\nbox = \"A\"\nsamples = 0\n[[checks]]\nname = \"a\"\nkind = \"nope\"\n",
        );
        let d = load(&src).unwrap_err();
        let fields: Vec<_> = d.iter().map(|d| d.field.as_str()).collect();
        assert!(fields.contains(&"checks[0].samples"), "{d:?}");
        assert!(fields.contains(&"checks[0].functional"), "{d:?}");
        assert!(fields.contains(&"checks[1].name"), "{d:?}");
        assert!(fields.contains(&"checks[1].kind"), "{d:?}");
    }

    #[test]
    fn fields_outside_the_kind_are_rejected() {
        let src =
            with("[functionals]\nY = \"count(A)\"\n[[checks]]\nname = \"m\"\nkind = \"mecke\"\nfunctional = \"Y\"\nbox = \"A\"\ntheta = 0.5\n");
        let d = load(&src).unwrap_err();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].field, "checks[0].theta");
    }

    #[test]
    fn digest_tracks_inputs() {
        let a = load(&with("[functionals]\nY = \"count(A)\"\n[[checks]]\nname = \"m\"\nkind = \"mecke\"\nfunctional = \"Y\"\nbox = \"A\"\n"))
            .unwrap();
        let b = load(&with("[functionals]\nY = \"count(A)\"\n[[checks]]\nname = \"n\"\nkind = \"mecke\"\nfunctional = \"Y\"\nbox = \"A\"\n"))
            .unwrap();
        let c = load(&with("[functionals]\nY = \"count(A) + 1\"\n[[checks]]\nname = \"m\"\nkind = \"mecke\"\nfunctional = \"Y\"\nbox = \"A\"\n"))
            .unwrap();
        // renaming a check does not change what it computes
        assert_eq!(a.checks[0].inputs_digest(), b.checks[0].inputs_digest());
        assert_ne!(a.checks[0].inputs_digest(), c.checks[0].inputs_digest());
    }

    #[test]
    fn default_seeds_follow_declaration_order() {
        let exp = load(&with(
            "[functionals]\nY = \"count(A)\"\n[[checks]]\nname = \"m\"\nkind = \"mecke\"\nfunctional = \"Y\"\nbox = \"A\"\n[[checks]]\nname = \"n\"\nkind = \"mecke\"\nfunctional = \"Y\"\nbox = \"A\"\nseed = 99\n",
        ))
        .unwrap();
        assert_eq!(exp.checks[0].seed, 7);
        assert_eq!(exp.checks[1].seed, 99);
    }
}

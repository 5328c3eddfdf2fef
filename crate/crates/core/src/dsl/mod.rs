//! Path functionals `Y = F(X)` written in a small expression language.
//!
//! Sources are parsed into [`Expr`] trees, then bound against named box sets
//! and a model to give a [`Functional`] that can be evaluated on any
//! [`JumpPath`]. Binding also records which boxes the functional reads, which
//! backs the static F_A-measurability certificate.

mod ast;
mod parser;

use std::collections::BTreeMap;

use thiserror::Error;

pub use ast::{BinOp, Expr, ExprKind, Func, JumpWeight, Span};
pub use parser::{parse, ParseError, ParseErrorKind};

use crate::error::{Error, Result};
use crate::model::{BoxSet, JumpModel};
use crate::simulate::JumpPath;

/// Runtime failure while evaluating a functional on a path.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero at bytes {}..{}", span.start, span.end)]
    DivisionByZero { span: Span },
    #[error("`{func}` is undefined or overflows here (bytes {}..{})", span.start, span.end)]
    Domain { func: &'static str, span: Span },
}

/// Anything that maps a jump path to a real number.
pub trait PathFunctional: Send + Sync {
    fn eval(&self, path: &JumpPath) -> std::result::Result<f64, EvalError>;
}

impl<F> PathFunctional for F
where
    F: Fn(&JumpPath) -> std::result::Result<f64, EvalError> + Send + Sync,
{
    fn eval(&self, path: &JumpPath) -> std::result::Result<f64, EvalError> {
        self(path)
    }
}

/// Which parts of the path a functional reads.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurabilityReport {
    pub referenced_boxes: Vec<String>,
    pub uses_terminal_value: bool,
    pub certified: bool,
    /// First box not contained in the conditioning set, if any.
    pub offending_box: Option<String>,
}

impl MeasurabilityReport {
    pub fn into_result(self) -> Result<()> {
        if self.certified {
            Ok(())
        } else if let Some(b) = self.offending_box {
            Err(Error::NotMeasurable { offending: b })
        } else {
            Err(Error::TerminalNotMeasurable)
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Num(f64),
    Terminal,
    Count(usize),
    SumJumps(usize, JumpWeight),
    Neg(Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>, Span),
    Call(Func, Vec<Node>, Span),
}

/// A parsed functional bound to concrete box sets.
#[derive(Debug, Clone)]
pub struct Functional {
    expr: Expr,
    boxes: Vec<(String, BoxSet)>,
    root: Node,
    drift_offset: f64,
    horizon: f64,
}

impl Functional {
    /// Parse and bind in one step.
    pub fn compile(source: &str, boxes: &BTreeMap<String, BoxSet>, model: &JumpModel) -> Result<Self> {
        Self::bind(parse(source)?, boxes, model)
    }

    /// Resolve box names. Fails on the first name not in `boxes`.
    pub fn bind(expr: Expr, boxes: &BTreeMap<String, BoxSet>, model: &JumpModel) -> Result<Self> {
        let mut used: Vec<(String, BoxSet)> = Vec::new();
        let root = lower(&expr, boxes, &mut used)?;
        Ok(Self { expr, boxes: used, root, drift_offset: model.drift() * model.horizon(), horizon: model.horizon() })
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    /// Names of boxes the functional reads, in first-use order.
    pub fn referenced_boxes(&self) -> impl Iterator<Item = &str> {
        self.boxes.iter().map(|(n, _)| n.as_str())
    }

    pub fn uses_terminal_value(&self) -> bool {
        let mut found = false;
        self.expr.walk(&mut |e| found |= matches!(e.kind, ExprKind::Terminal));
        found
    }

    fn box_table(&self) -> BTreeMap<String, BoxSet> {
        self.boxes.iter().cloned().collect()
    }

    /// Pathwise value `Y(omega)`.
    pub fn evaluate(&self, path: &JumpPath) -> std::result::Result<f64, EvalError> {
        self.eval_node(&self.root, &|leaf| match leaf {
            Leaf::Terminal => self.drift_offset + path.jumps().iter().map(|j| j.x).sum::<f64>(),
            Leaf::Count(i) => path.count_in(&self.boxes[i].1) as f64,
            Leaf::Sum(i, g) => {
                let set = &self.boxes[i].1;
                path.jumps().iter().filter(|j| set.contains(j.t, j.x)).map(|j| g.apply(j.t, j.x)).sum()
            }
        })
    }

    /// Conservative static F_A-measurability certificate: every box read must
    /// lie inside `a`. `XT` is accepted only when `a` covers all of
    /// `[0, T) x R_0`, where `X_T` is measurable up to the constant drift.
    pub fn measurability(&self, a: &BoxSet) -> MeasurabilityReport {
        let referenced_boxes: Vec<String> = self.boxes.iter().map(|(n, _)| n.clone()).collect();
        let offending_box = self.boxes.iter().find(|(_, b)| !b.is_subset_of(a)).map(|(n, _)| n.clone());
        let uses_terminal_value = self.uses_terminal_value();
        let terminal_ok = !uses_terminal_value
            || BoxSet::time_strip(0.0, self.horizon).map(|full| full.is_subset_of(a)).unwrap_or(false);
        MeasurabilityReport {
            certified: offending_box.is_none() && terminal_ok,
            referenced_boxes,
            uses_terminal_value,
            offending_box,
        }
    }

    /// If the functional depends on the path only through `N(a)`, returns the
    /// map `n -> phi(n)`.
    pub fn count_profile<'a>(&'a self, a: &BoxSet) -> Result<impl Fn(u64) -> std::result::Result<f64, EvalError> + 'a> {
        let mut bad = None;
        self.expr.walk(&mut |e| match &e.kind {
            ExprKind::Terminal => bad = bad.take().or(Some("reads the terminal value XT".to_string())),
            ExprKind::SumJumps(b, _) => bad = bad.take().or(Some(format!("sums jump sizes in `{b}`"))),
            _ => {}
        });
        if let Some(msg) = bad {
            return Err(Error::NotCountProfile(msg));
        }
        for (name, b) in &self.boxes {
            if !(b.is_subset_of(a) && a.is_subset_of(b)) {
                return Err(Error::NotCountProfile(format!("box `{name}` differs from the conditioning set")));
            }
        }
        Ok(move |n: u64| {
            self.eval_node(&self.root, &|leaf| match leaf {
                Leaf::Count(_) => n as f64,
                Leaf::Terminal | Leaf::Sum(..) => unreachable!("rejected above"),
            })
        })
    }

    /// `g(Y)` for one of the Lipschitz primitives.
    pub fn compose(&self, g: Lipschitz, model: &JumpModel) -> Result<Functional> {
        let inner = self.expr.clone();
        let num = |v: f64| {
            if v >= 0.0 {
                Expr::synthetic(ExprKind::Num(v))
            } else {
                Expr::synthetic(ExprKind::Neg(Box::new(Expr::synthetic(ExprKind::Num(-v)))))
            }
        };
        let kind = match g {
            Lipschitz::Clamp { lo, hi } => ExprKind::Call(Func::Clamp, vec![inner, num(lo), num(hi)]),
            Lipschitz::Min(c) => ExprKind::Call(Func::Min, vec![inner, num(c)]),
            Lipschitz::Max(c) => ExprKind::Call(Func::Max, vec![inner, num(c)]),
            Lipschitz::Abs => ExprKind::Call(Func::Abs, vec![inner]),
        };
        Functional::bind(Expr::synthetic(kind), &self.box_table(), model)
    }

    /// `self op other`. Box names shared by both must denote the same set.
    pub fn combine(&self, op: BinOp, other: &Functional, model: &JumpModel) -> Result<Functional> {
        let mut table = self.box_table();
        for (name, b) in &other.boxes {
            match table.get(name) {
                Some(existing) if existing != b => {
                    return Err(Error::InvalidArgument(format!("box `{name}` is bound to different sets")))
                }
                _ => {
                    table.insert(name.clone(), b.clone());
                }
            }
        }
        let e = Expr::synthetic(ExprKind::Binary(op, Box::new(self.expr.clone()), Box::new(other.expr.clone())));
        Functional::bind(e, &table, model)
    }

    fn eval_node(&self, node: &Node, leaf: &dyn Fn(Leaf) -> f64) -> std::result::Result<f64, EvalError> {
        Ok(match node {
            Node::Num(v) => *v,
            Node::Terminal => leaf(Leaf::Terminal),
            Node::Count(i) => leaf(Leaf::Count(*i)),
            Node::SumJumps(i, g) => leaf(Leaf::Sum(*i, *g)),
            Node::Neg(e) => -self.eval_node(e, leaf)?,
            Node::Binary(op, a, b, span) => {
                let (a, b) = (self.eval_node(a, leaf)?, self.eval_node(b, leaf)?);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(EvalError::DivisionByZero { span: *span });
                        }
                        a / b
                    }
                }
            }
            Node::Call(func, args, span) => {
                let mut vals = [0.0f64; 3];
                for (slot, a) in vals.iter_mut().zip(args) {
                    *slot = self.eval_node(a, leaf)?;
                }
                let domain = || EvalError::Domain { func: func.name(), span: *span };
                let v = match func {
                    Func::Pow => vals[0].powf(vals[1]),
                    Func::Min => vals[0].min(vals[1]),
                    Func::Max => vals[0].max(vals[1]),
                    Func::Clamp => {
                        if vals[1] > vals[2] {
                            return Err(domain());
                        }
                        vals[0].max(vals[1]).min(vals[2])
                    }
                    Func::Exp => vals[0].exp(),
                    Func::LnPlus => crate::special::ln_plus(vals[0]),
                    Func::Indicator => {
                        if vals[0] > vals[1] {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    Func::Abs => vals[0].abs(),
                };
                if !v.is_finite() {
                    return Err(domain());
                }
                v
            }
        })
    }
}

impl PathFunctional for Functional {
    fn eval(&self, path: &JumpPath) -> std::result::Result<f64, EvalError> {
        self.evaluate(path)
    }
}

impl std::fmt::Display for Functional {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.expr.fmt(f)
    }
}

#[derive(Clone, Copy)]
enum Leaf {
    Terminal,
    Count(usize),
    Sum(usize, JumpWeight),
}

/// Lipschitz maps available for chain-rule checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lipschitz {
    Clamp { lo: f64, hi: f64 },
    Min(f64),
    Max(f64),
    Abs,
}

impl Lipschitz {
    pub fn apply(self, y: f64) -> f64 {
        match self {
            Lipschitz::Clamp { lo, hi } => y.max(lo).min(hi),
            Lipschitz::Min(c) => y.min(c),
            Lipschitz::Max(c) => y.max(c),
            Lipschitz::Abs => y.abs(),
        }
    }
}

fn lower(expr: &Expr, boxes: &BTreeMap<String, BoxSet>, used: &mut Vec<(String, BoxSet)>) -> Result<Node> {
    let mut slot = |name: &str| -> Result<usize> {
        if let Some(i) = used.iter().position(|(n, _)| n == name) {
            return Ok(i);
        }
        let b = boxes
            .get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("functional references undeclared box `{name}`")))?;
        used.push((name.to_string(), b.clone()));
        Ok(used.len() - 1)
    };
    Ok(match &expr.kind {
        ExprKind::Num(v) => Node::Num(*v),
        ExprKind::Terminal => Node::Terminal,
        ExprKind::Count(b) => Node::Count(slot(b)?),
        ExprKind::SumJumps(b, g) => Node::SumJumps(slot(b)?, *g),
        ExprKind::Neg(e) => Node::Neg(Box::new(lower(e, boxes, used)?)),
        ExprKind::Binary(op, a, b) => {
            Node::Binary(*op, Box::new(lower(a, boxes, used)?), Box::new(lower(b, boxes, used)?), expr.span)
        }
        ExprKind::Call(f, args) => {
            Node::Call(*f, args.iter().map(|a| lower(a, boxes, used)).collect::<Result<_>>()?, expr.span)
        }
    })
}

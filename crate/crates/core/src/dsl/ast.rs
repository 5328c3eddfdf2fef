use std::fmt;

/// Byte range in the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn join(self, other: Span) -> Span {
        Span::new(self.start.min(other.start), self.end.max(other.end))
    }
}

/// Fixed library of per-jump weights for `sumjumps(A, g)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum JumpWeight {
    /// `x`
    Size,
    /// `x^2`
    Square,
    /// `t * x`
    TimeSize,
    /// `|x|`
    Abs,
    /// `ln(1 + |x|)`
    Log1pAbs,
}

impl JumpWeight {
    pub const ALL: [JumpWeight; 5] =
        [JumpWeight::Size, JumpWeight::Square, JumpWeight::TimeSize, JumpWeight::Abs, JumpWeight::Log1pAbs];

    pub fn name(self) -> &'static str {
        match self {
            JumpWeight::Size => "x",
            JumpWeight::Square => "x2",
            JumpWeight::TimeSize => "tx",
            JumpWeight::Abs => "absx",
            JumpWeight::Log1pAbs => "log1pabsx",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.name() == name)
    }

    pub fn apply(self, t: f64, x: f64) -> f64 {
        match self {
            JumpWeight::Size => x,
            JumpWeight::Square => x * x,
            JumpWeight::TimeSize => t * x,
            JumpWeight::Abs => x.abs(),
            JumpWeight::Log1pAbs => x.abs().ln_1p(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }
}

/// Built-in real functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Pow,
    Min,
    Max,
    Clamp,
    Exp,
    LnPlus,
    Indicator,
    Abs,
}

impl Func {
    pub const ALL: [Func; 8] =
        [Func::Pow, Func::Min, Func::Max, Func::Clamp, Func::Exp, Func::LnPlus, Func::Indicator, Func::Abs];

    pub fn name(self) -> &'static str {
        match self {
            Func::Pow => "pow",
            Func::Min => "min",
            Func::Max => "max",
            Func::Clamp => "clamp",
            Func::Exp => "exp",
            Func::LnPlus => "lnplus",
            Func::Indicator => "indicator",
            Func::Abs => "abs",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Exp | Func::LnPlus | Func::Abs => 1,
            Func::Pow | Func::Min | Func::Max | Func::Indicator => 2,
            Func::Clamp => 3,
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    /// Nonnegative literal; negative constants are `Neg(Num)`.
    Num(f64),
    /// `XT`, the terminal value of the process.
    Terminal,
    Count(String),
    SumJumps(String, JumpWeight),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// Expression node. Equality ignores spans.
#[derive(Debug, Clone)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Self {
        Self { kind, span }
    }

    /// Node without a source location, for programmatically built trees.
    pub fn synthetic(kind: ExprKind) -> Self {
        Self { kind, span: Span::default() }
    }

    pub fn depth(&self) -> usize {
        1 + match &self.kind {
            ExprKind::Num(_) | ExprKind::Terminal | ExprKind::Count(_) | ExprKind::SumJumps(..) => 0,
            ExprKind::Neg(e) => e.depth(),
            ExprKind::Binary(_, a, b) => a.depth().max(b.depth()),
            ExprKind::Call(_, args) => args.iter().map(Expr::depth).max().unwrap_or(0),
        }
    }

    /// Visit every node, parents first.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match &self.kind {
            ExprKind::Neg(e) => e.walk(f),
            ExprKind::Binary(_, a, b) => {
                a.walk(f);
                b.walk(f);
            }
            ExprKind::Call(_, args) => args.iter().for_each(|a| a.walk(f)),
            _ => {}
        }
    }
}

/// Canonical, fully parenthesized form; parses back to an equal tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ExprKind::Num(v) => write!(f, "{v:?}"),
            ExprKind::Terminal => f.write_str("XT"),
            ExprKind::Count(b) => write!(f, "count({b})"),
            ExprKind::SumJumps(b, g) => write!(f, "sumjumps({b}, {})", g.name()),
            ExprKind::Neg(e) => write!(f, "(-{e})"),
            ExprKind::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            ExprKind::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

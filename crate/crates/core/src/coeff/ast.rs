use std::fmt;

/// Source position of a node (1-based).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Span {
    pub line: usize,
    pub col: usize,
}

/// Which process a state reference reads: the vertex's own state `x` or,
/// inside a neighbor aggregate, the neighbor's state `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Owner {
    Own,
    Neighbor,
}

/// `x`, `x[i]`, `y` or `y[i]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateVar {
    pub owner: Owner,
    pub component: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryFn {
    Sin,
    Cos,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregate {
    Sum,
    Avg,
}

/// Averaging window of `runavg`: a fixed length, or the whole history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Window {
    Fixed(f64),
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Num(f64),
    Time,
    State(StateVar),
    Neg(Box<Expr>),
    Binary { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr> },
    Unary { func: UnaryFn, arg: Box<Expr> },
    Clamp { lo: f64, hi: f64, arg: Box<Expr> },
    Neighbors { agg: Aggregate, body: Box<Expr> },
    Lag { var: StateVar, delay: f64 },
    RunAvg { var: StateVar, window: Window },
    RunMaxNorm { var: StateVar },
}

/// Expression node. Equality ignores source positions.
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
    pub fn new(kind: ExprKind) -> Self {
        Self { kind, span: Span::default() }
    }

    pub fn at(kind: ExprKind, span: Span) -> Self {
        Self { kind, span }
    }

    /// Value of a state-free, time-free subtree.
    pub fn constant_value(&self) -> Option<f64> {
        match &self.kind {
            ExprKind::Num(v) => Some(*v),
            ExprKind::Neg(e) => e.constant_value().map(|v| -v),
            ExprKind::Binary { op, lhs, rhs } => {
                let (a, b) = (lhs.constant_value()?, rhs.constant_value()?);
                Some(match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                })
            }
            ExprKind::Unary { func, arg } => {
                let a = arg.constant_value()?;
                Some(match func {
                    UnaryFn::Sin => a.sin(),
                    UnaryFn::Cos => a.cos(),
                    UnaryFn::Tanh => a.tanh(),
                })
            }
            ExprKind::Clamp { lo, hi, arg } => arg.constant_value().map(|a| a.clamp(*lo, *hi)),
            _ => None,
        }
    }

    /// Visits every node in pre-order.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match &self.kind {
            ExprKind::Neg(e) => e.walk(f),
            ExprKind::Binary { lhs, rhs, .. } => {
                lhs.walk(f);
                rhs.walk(f);
            }
            ExprKind::Unary { arg, .. } | ExprKind::Clamp { arg, .. } => arg.walk(f),
            ExprKind::Neighbors { body, .. } => body.walk(f),
            _ => {}
        }
    }

    /// Largest explicit component index, if any.
    pub fn max_component(&self) -> Option<usize> {
        let mut max = None;
        self.walk(&mut |e| {
            let var = match &e.kind {
                ExprKind::State(v)
                | ExprKind::Lag { var: v, .. }
                | ExprKind::RunAvg { var: v, .. }
                | ExprKind::RunMaxNorm { var: v } => Some(v),
                _ => None,
            };
            if let Some(c) = var.and_then(|v| v.component) {
                max = Some(max.map_or(c, |m: usize| m.max(c)));
            }
        });
        max
    }

    /// Whether the expression reads any history before the current time.
    pub fn uses_history(&self) -> bool {
        let mut found = false;
        self.walk(&mut |e| {
            if matches!(e.kind, ExprKind::Lag { .. } | ExprKind::RunAvg { .. } | ExprKind::RunMaxNorm { .. }) {
                found = true;
            }
        });
        found
    }
}

fn fmt_num(v: f64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    write!(f, "{v:?}")
}

impl fmt::Display for StateVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.owner {
            Owner::Own => "x",
            Owner::Neighbor => "y",
        };
        match self.component {
            Some(i) => write!(f, "{name}[{i}]"),
            None => f.write_str(name),
        }
    }
}

/// Fully parenthesized rendering that parses back to an equal tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ExprKind::Num(v) => fmt_num(*v, f),
            ExprKind::Time => f.write_str("t"),
            ExprKind::State(v) => write!(f, "{v}"),
            ExprKind::Neg(e) => write!(f, "-({e})"),
            ExprKind::Binary { op, lhs, rhs } => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                };
                write!(f, "({lhs} {sym} {rhs})")
            }
            ExprKind::Unary { func, arg } => {
                let name = match func {
                    UnaryFn::Sin => "sin",
                    UnaryFn::Cos => "cos",
                    UnaryFn::Tanh => "tanh",
                };
                write!(f, "{name}({arg})")
            }
            ExprKind::Clamp { lo, hi, arg } => {
                f.write_str("clamp(")?;
                fmt_num(*lo, f)?;
                f.write_str(", ")?;
                fmt_num(*hi, f)?;
                write!(f, ")({arg})")
            }
            ExprKind::Neighbors { agg, body } => {
                let name = match agg {
                    Aggregate::Sum => "nbr_sum",
                    Aggregate::Avg => "nbr_avg",
                };
                write!(f, "{name}({body})")
            }
            ExprKind::Lag { var, delay } => {
                write!(f, "lag({var}, ")?;
                fmt_num(*delay, f)?;
                f.write_str(")")
            }
            ExprKind::RunAvg { var, window } => {
                write!(f, "runavg({var}, ")?;
                match window {
                    Window::Fixed(w) => fmt_num(*w, f)?,
                    Window::Full => f.write_str("t")?,
                }
                f.write_str(")")
            }
            ExprKind::RunMaxNorm { var } => write!(f, "runmax_norm({var})"),
        }
    }
}

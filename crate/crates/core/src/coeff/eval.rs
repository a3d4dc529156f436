//! Evaluation of drift expressions against discretized path histories.
//!
//! Paths are left-constant between grid points: a value recorded at `t_j`
//! holds on `[t_j, t_{j+1})`. A `lag` that reaches before time zero reads
//! the initial value.

use thiserror::Error;

use super::ast::*;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("history is empty")]
    EmptyHistory,
    #[error("time index {index} beyond history of length {len}")]
    IndexBeyondHistory { index: usize, len: usize },
    #[error("history starts at {start} but the expression needs values back to {needed}")]
    HistoryTooShort { needed: f64, start: f64 },
    #[error("component {index} out of range for state dimension {dim}")]
    ComponentOutOfRange { index: usize, dim: usize },
}

/// A discretized path of one vertex: `values[j * dim + c]` is component `c`
/// at `times[j]`.
#[derive(Debug, Clone, Copy)]
pub struct History<'a> {
    pub times: &'a [f64],
    pub values: &'a [f64],
    pub dim: usize,
}

impl<'a> History<'a> {
    pub fn new(times: &'a [f64], values: &'a [f64], dim: usize) -> Self {
        debug_assert_eq!(values.len(), times.len() * dim);
        Self { times, values, dim }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    #[inline]
    pub fn at(&self, j: usize) -> &'a [f64] {
        &self.values[j * self.dim..(j + 1) * self.dim]
    }

    /// Restriction to the grid points `0..=k`.
    pub fn upto(&self, k: usize) -> History<'a> {
        History { times: &self.times[..=k], values: &self.values[..(k + 1) * self.dim], dim: self.dim }
    }
}

struct Ctx<'h, 'a> {
    k: usize,
    own: &'h History<'a>,
    neighbors: &'h [History<'a>],
    current: Option<&'h History<'a>>,
}

fn component(var: &StateVar, comp: usize, dim: usize) -> Result<usize, EvalError> {
    let c = var.component.unwrap_or(comp);
    if c >= dim {
        return Err(EvalError::ComponentOutOfRange { index: c, dim });
    }
    Ok(c)
}

fn path<'h, 'a>(ctx: &Ctx<'h, 'a>, var: &StateVar) -> &'h History<'a> {
    match var.owner {
        Owner::Own => ctx.own,
        Owner::Neighbor => ctx.current.expect("parser keeps `y` inside aggregates"),
    }
}

/// Index of the last grid point at or before `target` within `0..=k`.
fn index_at_or_before(h: &History, k: usize, target: f64) -> Result<usize, EvalError> {
    let slack = 1e-12 * h.times[k].abs().max(1.0);
    let start = h.times[0];
    if target < start - slack {
        if start == 0.0 {
            return Ok(0);
        }
        return Err(EvalError::HistoryTooShort { needed: target, start });
    }
    let n = h.times[..=k].partition_point(|&s| s <= target + slack);
    Ok(n.saturating_sub(1))
}

fn state_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn eval_node(e: &Expr, ctx: &Ctx, comp: usize) -> Result<f64, EvalError> {
    Ok(match &e.kind {
        ExprKind::Num(v) => *v,
        ExprKind::Time => ctx.own.times[ctx.k],
        ExprKind::State(var) => {
            let h = path(ctx, var);
            h.at(ctx.k)[component(var, comp, h.dim)?]
        }
        ExprKind::Neg(a) => -eval_node(a, ctx, comp)?,
        ExprKind::Binary { op, lhs, rhs } => {
            let a = eval_node(lhs, ctx, comp)?;
            let b = eval_node(rhs, ctx, comp)?;
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => a / b,
            }
        }
        ExprKind::Unary { func, arg } => {
            let a = eval_node(arg, ctx, comp)?;
            match func {
                UnaryFn::Sin => a.sin(),
                UnaryFn::Cos => a.cos(),
                UnaryFn::Tanh => a.tanh(),
            }
        }
        ExprKind::Clamp { lo, hi, arg } => eval_node(arg, ctx, comp)?.clamp(*lo, *hi),
        ExprKind::Neighbors { agg, body } => {
            let mut sum = 0.0;
            for nb in ctx.neighbors {
                let inner = Ctx { k: ctx.k, own: ctx.own, neighbors: ctx.neighbors, current: Some(nb) };
                sum += eval_node(body, &inner, comp)?;
            }
            match agg {
                Aggregate::Sum => sum,
                Aggregate::Avg if ctx.neighbors.is_empty() => 0.0,
                Aggregate::Avg => sum / ctx.neighbors.len() as f64,
            }
        }
        ExprKind::Lag { var, delay } => {
            let h = path(ctx, var);
            let c = component(var, comp, h.dim)?;
            let j = index_at_or_before(h, ctx.k, h.times[ctx.k] - delay)?;
            h.at(j)[c]
        }
        ExprKind::RunAvg { var, window } => {
            let h = path(ctx, var);
            let c = component(var, comp, h.dim)?;
            let t = h.times[ctx.k];
            let from = match window {
                Window::Full => h.times[0],
                Window::Fixed(w) => {
                    let a = t - w;
                    if a < h.times[0] {
                        if h.times[0] != 0.0 {
                            return Err(EvalError::HistoryTooShort { needed: a, start: h.times[0] });
                        }
                        0.0
                    } else {
                        a
                    }
                }
            };
            if t <= from {
                h.at(ctx.k)[c]
            } else {
                let mut integral = 0.0;
                for j in 0..ctx.k {
                    let lo = h.times[j].max(from);
                    let hi = h.times[j + 1].min(t);
                    if hi > lo {
                        integral += (hi - lo) * h.at(j)[c];
                    }
                }
                integral / (t - from)
            }
        }
        ExprKind::RunMaxNorm { var } => {
            let h = path(ctx, var);
            let mut best: f64 = 0.0;
            match var.component {
                Some(i) => {
                    if i >= h.dim {
                        return Err(EvalError::ComponentOutOfRange { index: i, dim: h.dim });
                    }
                    for j in 0..=ctx.k {
                        best = best.max(h.at(j)[i].abs());
                    }
                }
                None => {
                    for j in 0..=ctx.k {
                        best = best.max(state_norm(h.at(j)));
                    }
                }
            }
            best
        }
    })
}

/// Evaluates the drift at grid index `k` into `out` (length `dim`). Only the
/// history up to and including index `k` is read.
pub fn eval_into(
    expr: &Expr,
    k: usize,
    own: &History,
    neighbors: &[History],
    out: &mut [f64],
) -> Result<(), EvalError> {
    if own.is_empty() {
        return Err(EvalError::EmptyHistory);
    }
    if k >= own.len() {
        return Err(EvalError::IndexBeyondHistory { index: k, len: own.len() });
    }
    if let Some(nb) = neighbors.iter().find(|h| h.len() <= k) {
        return Err(EvalError::IndexBeyondHistory { index: k, len: nb.len() });
    }
    let own_cut = own.upto(k);
    let nbr_cut: Vec<History> = neighbors.iter().map(|h| h.upto(k)).collect();
    let ctx = Ctx { k, own: &own_cut, neighbors: &nbr_cut, current: None };
    for (c, slot) in out.iter_mut().enumerate() {
        *slot = eval_node(expr, &ctx, c)?;
    }
    Ok(())
}

/// A drift that is affine in the current own and neighbor states:
/// `b = c0 + c_deg·|N| + (x0 + x_deg·|N|)·x + (y_sum + y_avg/|N|)·Σ_u y_u`,
/// applied componentwise.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LinearDrift {
    pub c0: f64,
    pub c_deg: f64,
    pub x0: f64,
    pub x_deg: f64,
    pub y_sum: f64,
    pub y_avg: f64,
}

/// Affine drift resolved for a vertex of a given degree.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ResolvedLinear {
    pub constant: f64,
    pub own: f64,
    pub neighbor: f64,
}

impl LinearDrift {
    pub fn resolve(&self, degree: usize) -> ResolvedLinear {
        let deg = degree as f64;
        let neighbor = if degree == 0 { 0.0 } else { self.y_sum + self.y_avg / deg };
        ResolvedLinear { constant: self.c0 + self.c_deg * deg, own: self.x0 + self.x_deg * deg, neighbor }
    }

    fn scale(self, s: f64) -> Self {
        Self {
            c0: self.c0 * s,
            c_deg: self.c_deg * s,
            x0: self.x0 * s,
            x_deg: self.x_deg * s,
            y_sum: self.y_sum * s,
            y_avg: self.y_avg * s,
        }
    }

    fn add(self, o: Self) -> Self {
        Self {
            c0: self.c0 + o.c0,
            c_deg: self.c_deg + o.c_deg,
            x0: self.x0 + o.x0,
            x_deg: self.x_deg + o.x_deg,
            y_sum: self.y_sum + o.y_sum,
            y_avg: self.y_avg + o.y_avg,
        }
    }
}

/// Inside an aggregate body, `y_sum` holds the coefficient of the single
/// neighbor `y`.
fn linearize(e: &Expr, dim: usize) -> Option<LinearDrift> {
    let state = |var: &StateVar| -> Option<LinearDrift> {
        if var.component.is_some_and(|c| c != 0 || dim != 1) {
            return None;
        }
        Some(match var.owner {
            Owner::Own => LinearDrift { x0: 1.0, ..Default::default() },
            Owner::Neighbor => LinearDrift { y_sum: 1.0, ..Default::default() },
        })
    };
    match &e.kind {
        ExprKind::Num(v) => Some(LinearDrift { c0: *v, ..Default::default() }),
        ExprKind::State(var) => state(var),
        ExprKind::Neg(a) => Some(linearize(a, dim)?.scale(-1.0)),
        ExprKind::Binary { op, lhs, rhs } => match op {
            BinOp::Add => Some(linearize(lhs, dim)?.add(linearize(rhs, dim)?)),
            BinOp::Sub => Some(linearize(lhs, dim)?.add(linearize(rhs, dim)?.scale(-1.0))),
            BinOp::Mul => {
                if let Some(c) = lhs.constant_value() {
                    Some(linearize(rhs, dim)?.scale(c))
                } else {
                    rhs.constant_value().and_then(|c| Some(linearize(lhs, dim)?.scale(c)))
                }
            }
            BinOp::Div => Some(linearize(lhs, dim)?.scale(1.0 / rhs.constant_value()?)),
        },
        ExprKind::Unary { .. } | ExprKind::Clamp { .. } => {
            e.constant_value().map(|c| LinearDrift { c0: c, ..Default::default() })
        }
        ExprKind::Neighbors { agg, body } => {
            let b = linearize(body, dim)?;
            Some(match agg {
                // Σ_u (c + a x + w y_u) = |N| c + |N| a x + w Σ y_u
                Aggregate::Sum => {
                    LinearDrift { c0: 0.0, c_deg: b.c0, x0: 0.0, x_deg: b.x0, y_sum: b.y_sum, y_avg: 0.0 }
                }
                // averages of constants and of x are themselves; an empty
                // neighborhood averages to zero, which `resolve` cannot express
                Aggregate::Avg => {
                    if b.c0 != 0.0 || b.x0 != 0.0 {
                        return None;
                    }
                    LinearDrift { y_avg: b.y_sum, ..Default::default() }
                }
            })
        }
        ExprKind::Time | ExprKind::Lag { .. } | ExprKind::RunAvg { .. } | ExprKind::RunMaxNorm { .. } => None,
    }
}

/// Recognizes drifts that are affine in the current states (no time, no
/// history, no nonlinearity) so that simulation can skip the interpreter.
pub fn linear_form(expr: &Expr, dim: usize) -> Option<LinearDrift> {
    linearize(expr, dim)
}

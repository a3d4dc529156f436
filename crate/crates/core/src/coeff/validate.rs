//! Syntactic growth and Lipschitz certificates for drift expressions.
//!
//! Growth: every node gets a bound `|e| <= c0 + cx·‖x‖ + cy·Σ_u ‖y_u‖` in
//! running sup norms, or a plain bound `|e| <= c` when it is bounded. Inside
//! a neighbor aggregate `cy` refers to the single neighbor being summed.
//!
//! Lipschitz: every node gets `|Δe| <= kx·‖Δx‖ + ky·avg_u ‖Δy_u‖`, again
//! with `ky` per neighbor inside aggregates.
//!
//! Both certificates are componentwise; a state of dimension `d` multiplies
//! the final constant by `√d`.

use serde::Serialize;

use super::ast::*;
use super::{DiffusionSpec, DriftSpec};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub node: String,
    pub line: usize,
    pub col: usize,
    pub rule: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub growth_constant: Option<f64>,
    /// `(K, K̄)`: drift and diffusion Lipschitz constants.
    pub lipschitz_constants: Option<(f64, f64)>,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    fn from_parts(violations: Vec<Violation>, growth: Option<f64>, lipschitz: Option<(f64, f64)>) -> Self {
        let passed = violations.is_empty();
        Self {
            passed,
            growth_constant: if passed { growth } else { None },
            lipschitz_constants: if passed { lipschitz } else { None },
            violations,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Growth {
    Bounded(f64),
    Affine { c0: f64, cx: f64, cy: f64 },
}

impl Growth {
    fn parts(self) -> (f64, f64, f64) {
        match self {
            Growth::Bounded(c) => (c, 0.0, 0.0),
            Growth::Affine { c0, cx, cy } => (c0, cx, cy),
        }
    }

    fn scale(self, s: f64) -> Self {
        let s = s.abs();
        match self {
            Growth::Bounded(c) => Growth::Bounded(c * s),
            Growth::Affine { c0, cx, cy } => Growth::Affine { c0: c0 * s, cx: cx * s, cy: cy * s },
        }
    }
}

struct Checker<'a> {
    horizon: f64,
    max_degree: Option<usize>,
    violations: &'a mut Vec<Violation>,
}

impl Checker<'_> {
    fn fail(&mut self, e: &Expr, rule: impl Into<String>) {
        self.violations.push(Violation { node: e.to_string(), line: e.span.line, col: e.span.col, rule: rule.into() });
    }

    fn growth(&mut self, e: &Expr) -> Option<Growth> {
        let state = Growth::Affine { c0: 0.0, cx: 1.0, cy: 0.0 };
        let nbr_state = Growth::Affine { c0: 0.0, cx: 0.0, cy: 1.0 };
        let of_var = |v: &StateVar| match v.owner {
            Owner::Own => state,
            Owner::Neighbor => nbr_state,
        };
        Some(match &e.kind {
            ExprKind::Num(v) => Growth::Bounded(v.abs()),
            ExprKind::Time => Growth::Bounded(self.horizon.abs()),
            ExprKind::State(v) => of_var(v),
            ExprKind::Lag { var, .. } | ExprKind::RunAvg { var, .. } | ExprKind::RunMaxNorm { var } => of_var(var),
            ExprKind::Neg(a) => self.growth(a)?,
            ExprKind::Unary { .. } => Growth::Bounded(1.0),
            ExprKind::Clamp { lo, hi, .. } => Growth::Bounded(lo.abs().max(hi.abs())),
            ExprKind::Binary { op, lhs, rhs } => {
                let a = self.growth(lhs);
                let b = self.growth(rhs);
                let (a, b) = (a?, b?);
                match op {
                    BinOp::Add | BinOp::Sub => match (a, b) {
                        (Growth::Bounded(x), Growth::Bounded(y)) => Growth::Bounded(x + y),
                        _ => {
                            let (a0, ax, ay) = a.parts();
                            let (b0, bx, by) = b.parts();
                            Growth::Affine { c0: a0 + b0, cx: ax + bx, cy: ay + by }
                        }
                    },
                    BinOp::Mul => match (a, b) {
                        (Growth::Bounded(x), other) => other.scale(x),
                        (other, Growth::Bounded(y)) => other.scale(y),
                        _ => {
                            self.fail(e, "product of two unbounded state-dependent terms");
                            return None;
                        }
                    },
                    BinOp::Div => {
                        let c = rhs.constant_value().expect("parser admits constant divisors only");
                        a.scale(1.0 / c)
                    }
                }
            }
            ExprKind::Neighbors { agg, body } => {
                let (c0, cx, cy) = self.growth(body)?.parts();
                match agg {
                    Aggregate::Avg => {
                        if cx == 0.0 && cy == 0.0 {
                            Growth::Bounded(c0)
                        } else {
                            Growth::Affine { c0, cx, cy }
                        }
                    }
                    Aggregate::Sum => {
                        let deg = if c0 != 0.0 || cx != 0.0 {
                            match self.max_degree {
                                Some(d) => d as f64,
                                None => {
                                    self.fail(
                                        e,
                                        "nbr_sum of terms not vanishing with the neighbor needs a degree bound",
                                    );
                                    return None;
                                }
                            }
                        } else {
                            0.0
                        };
                        if cx == 0.0 && cy == 0.0 {
                            Growth::Bounded(c0 * deg)
                        } else {
                            Growth::Affine { c0: c0 * deg, cx: cx * deg, cy }
                        }
                    }
                }
            }
        })
    }

    /// `(kx, ky)` Lipschitz pair.
    fn lipschitz(&mut self, e: &Expr) -> Option<(f64, f64)> {
        let of_var = |v: &StateVar| match v.owner {
            Owner::Own => (1.0, 0.0),
            Owner::Neighbor => (0.0, 1.0),
        };
        Some(match &e.kind {
            ExprKind::Num(_) | ExprKind::Time => (0.0, 0.0),
            ExprKind::State(v) => of_var(v),
            ExprKind::Lag { var, .. } | ExprKind::RunAvg { var, .. } | ExprKind::RunMaxNorm { var } => of_var(var),
            ExprKind::Neg(a) => self.lipschitz(a)?,
            ExprKind::Unary { arg, .. } | ExprKind::Clamp { arg, .. } => self.lipschitz(arg)?,
            ExprKind::Binary { op, lhs, rhs } => {
                let a = self.lipschitz(lhs);
                let b = self.lipschitz(rhs);
                let ((ax, ay), (bx, by)) = (a?, b?);
                match op {
                    BinOp::Add | BinOp::Sub => (ax + bx, ay + by),
                    BinOp::Div => {
                        let c = rhs.constant_value().expect("parser admits constant divisors only").abs();
                        (ax / c, ay / c)
                    }
                    BinOp::Mul => {
                        if let Some(c) = lhs.constant_value() {
                            (bx * c.abs(), by * c.abs())
                        } else if let Some(c) = rhs.constant_value() {
                            (ax * c.abs(), ay * c.abs())
                        } else {
                            // |Δ(fg)| <= |f||Δg| + |g||Δf| needs both factors bounded
                            let mut scratch = Vec::new();
                            let mut sub = Checker {
                                horizon: self.horizon,
                                max_degree: self.max_degree,
                                violations: &mut scratch,
                            };
                            match (sub.growth(lhs), sub.growth(rhs)) {
                                (Some(Growth::Bounded(f)), Some(Growth::Bounded(g))) => {
                                    (f * bx + g * ax, f * by + g * ay)
                                }
                                _ => {
                                    self.fail(e, "product is not Lipschitz unless both factors are bounded");
                                    return None;
                                }
                            }
                        }
                    }
                }
            }
            ExprKind::Neighbors { agg, body } => {
                let (kx, ky) = self.lipschitz(body)?;
                match agg {
                    Aggregate::Avg => (kx, ky),
                    Aggregate::Sum => {
                        if kx == 0.0 && ky == 0.0 {
                            (0.0, 0.0)
                        } else {
                            match self.max_degree {
                                Some(d) => (kx * d as f64, ky * d as f64),
                                None => {
                                    self.fail(
                                        e,
                                        "nbr_sum is Lipschitz in the neighbor average only with a degree bound",
                                    );
                                    return None;
                                }
                            }
                        }
                    }
                }
            }
        })
    }
}

/// Certifies `|b(t, x, y)| <= C (1 + ‖x‖_{*,t} + Σ_u ‖y_u‖_{*,t})` on
/// `[0, horizon]` for a state of dimension `dim`. `max_degree` is needed for
/// `nbr_sum` of terms that do not vanish with the neighbor.
pub fn validate_linear_growth(
    spec: &DriftSpec,
    horizon: f64,
    dim: usize,
    max_degree: Option<usize>,
) -> ValidationReport {
    let mut violations = Vec::new();
    let mut c = Checker { horizon, max_degree, violations: &mut violations };
    let g = c.growth(spec.expr());
    let constant = g.map(|g| {
        let (c0, cx, cy) = g.parts();
        (dim as f64).sqrt() * c0.max(cx).max(cy)
    });
    ValidationReport::from_parts(violations, constant, None)
}

/// Certifies the drift Lipschitz bound in the normalized neighbor-average
/// form together with the diffusion's Lipschitz constant.
pub fn validate_lipschitz(
    drift: &DriftSpec,
    diffusion: &DiffusionSpec,
    horizon: f64,
    dim: usize,
    max_degree: Option<usize>,
) -> ValidationReport {
    let mut violations = Vec::new();
    let mut c = Checker { horizon, max_degree, violations: &mut violations };
    let k = c.lipschitz(drift.expr()).map(|(kx, ky)| (dim as f64).sqrt() * kx.max(ky));
    ValidationReport::from_parts(violations, None, k.map(|k| (k, diffusion.lipschitz())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn growth(s: &str, deg: Option<usize>) -> ValidationReport {
        validate_linear_growth(&DriftSpec::parse(s).unwrap(), 1.0, 1, deg)
    }

    #[test]
    fn growth_certificates() {
        let r = growth("tanh(x) * 3", None);
        assert!(r.passed);
        assert_eq!(r.growth_constant, Some(3.0));
        let r = growth("x * x[0]", None);
        assert!(!r.passed);
        assert_eq!(r.growth_constant, None);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].node, "(x * x[0])");
        let r = growth("nbr_sum(y - x)", Some(4));
        assert_eq!(r.growth_constant, Some(4.0));
        assert!(!growth("nbr_sum(y - x)", None).passed);
        assert_eq!(growth("nbr_sum(y)", None).growth_constant, Some(1.0));
        assert_eq!(growth("0", None).growth_constant, Some(0.0));
        assert_eq!(growth("t * tanh(x) - 2 * lag(x, 0.5)", None).growth_constant, Some(2.0));
        assert_eq!(growth("clamp(-1, 2)(x * x)", None).growth_constant, Some(2.0));
    }

    #[test]
    fn lipschitz_certificates() {
        let id = DiffusionSpec::identity(1);
        let lip = |s: &str, deg| validate_lipschitz(&DriftSpec::parse(s).unwrap(), &id, 1.0, 1, deg);
        assert_eq!(lip("nbr_avg(y) - x", None).lipschitz_constants, Some((1.0, 0.0)));
        assert!(!lip("nbr_sum(y - x)", None).passed);
        assert_eq!(lip("nbr_sum(y - x)", Some(3)).lipschitz_constants, Some((3.0, 0.0)));
        assert_eq!(lip("tanh(x) * sin(x)", None).lipschitz_constants, Some((2.0, 0.0)));
        assert!(!lip("x * tanh(x)", None).passed);
        assert_eq!(lip("t * tanh(x)", None).lipschitz_constants, Some((1.0, 0.0)));
        let diag = DiffusionSpec::diagonal(vec![1.0], vec![0.5]).unwrap();
        let r = validate_lipschitz(&DriftSpec::parse("-x").unwrap(), &diag, 1.0, 1, None);
        assert_eq!(r.lipschitz_constants, Some((1.0, 0.5)));
    }
}

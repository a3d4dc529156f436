//! Recursive-descent (LL(1)) parser for drift expressions.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := factor (('*' | '/') factor)*
//! factor  := '-' factor | primary
//! primary := NUMBER | 't' | state | '(' expr ')'
//!          | ('sin' | 'cos' | 'tanh') '(' expr ')'
//!          | 'clamp' '(' const ',' const ')' '(' expr ')'
//!          | ('nbr_sum' | 'nbr_avg') '(' expr ')'
//!          | 'lag' '(' state ',' const ')'
//!          | 'runavg' '(' state ',' (const | 't') ')'
//!          | 'runmax_norm' '(' state ')'
//! state   := ('x' | 'y') ('[' INTEGER ']')?
//! ```
//!
//! A `-` directly followed by a number literal folds into a negative
//! literal. Divisors must be nonzero constants; `y` is only legal inside a
//! neighbor aggregate and aggregates do not nest.

use thiserror::Error;

use super::ast::*;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("{0}")]
    Syntax(String),
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("`{name}` takes {expected} argument(s), found {found}")]
    Arity { name: String, expected: usize, found: usize },
    #[error("division by zero constant")]
    DivisionByZero,
    #[error("divisor must be a constant expression")]
    NonConstantDivisor,
    #[error("neighbor state `y` used outside nbr_sum/nbr_avg")]
    NeighborOutsideAggregate,
    #[error("neighbor aggregates cannot be nested")]
    NestedAggregate,
    #[error("invalid argument: {0}")]
    BadArgument(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{line}:{col}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Plus,
    Minus,
    Star,
    Slash,
    Eof,
}

fn lex(text: &str) -> Result<Vec<(Tok, Span)>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let span = Span { line, col };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            ',' => Some(Tok::Comma),
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            _ => None,
        };
        if let Some(tok) = single {
            out.push((tok, span));
            i += 1;
            col += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == '.' {
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v: f64 = s.parse().map_err(|_| ParseError {
                line,
                col,
                kind: ParseErrorKind::Syntax(format!("malformed number `{s}`")),
            })?;
            out.push((Tok::Num(v), span));
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), span));
        } else {
            return Err(ParseError { line, col, kind: ParseErrorKind::Syntax(format!("unexpected character `{c}`")) });
        }
        col += i - start;
    }
    out.push((Tok::Eof, Span { line, col }));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, Span)>,
    pos: usize,
    in_aggregate: bool,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn span(&self) -> Span {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, Span) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, span: Span, kind: ParseErrorKind) -> PResult<T> {
        Err(ParseError { line: span.line, col: span.col, kind })
    }

    fn expect(&mut self, want: Tok, what: &str) -> PResult<()> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            let span = self.span();
            self.err(span, ParseErrorKind::Syntax(format!("expected {what}, found {:?}", self.peek())))
        }
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            let (_, span) = self.bump();
            let rhs = self.term()?;
            lhs = Expr::at(ExprKind::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }, span);
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            let (_, span) = self.bump();
            let rhs_span = self.span();
            let rhs = self.factor()?;
            if op == BinOp::Div {
                match rhs.constant_value() {
                    None => return self.err(rhs_span, ParseErrorKind::NonConstantDivisor),
                    Some(v) if v == 0.0 || !v.is_finite() => return self.err(rhs_span, ParseErrorKind::DivisionByZero),
                    Some(_) => {}
                }
            }
            lhs = Expr::at(ExprKind::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }, span);
        }
    }

    fn factor(&mut self) -> PResult<Expr> {
        if *self.peek() == Tok::Minus {
            let (_, span) = self.bump();
            if let Tok::Num(v) = *self.peek() {
                self.bump();
                return Ok(Expr::at(ExprKind::Num(-v), span));
            }
            let inner = self.factor()?;
            return Ok(Expr::at(ExprKind::Neg(Box::new(inner)), span));
        }
        self.primary()
    }

    fn state_var(&mut self, name: &str, span: Span) -> PResult<StateVar> {
        let owner = match name {
            "x" => Owner::Own,
            "y" => {
                if !self.in_aggregate {
                    return self.err(span, ParseErrorKind::NeighborOutsideAggregate);
                }
                Owner::Neighbor
            }
            _ => unreachable!(),
        };
        let component = if *self.peek() == Tok::LBracket {
            self.bump();
            let s = self.span();
            let idx = match self.bump().0 {
                Tok::Num(v) if v >= 0.0 && v.fract() == 0.0 => v as usize,
                _ => return self.err(s, ParseErrorKind::Syntax("expected component index".into())),
            };
            self.expect(Tok::RBracket, "`]`")?;
            Some(idx)
        } else {
            None
        };
        Ok(StateVar { owner, component })
    }

    /// Parses a parenthesized, comma separated argument list of expressions.
    fn args(&mut self) -> PResult<Vec<(Expr, Span)>> {
        self.expect(Tok::LParen, "`(`")?;
        let mut out = Vec::new();
        if *self.peek() == Tok::RParen {
            self.bump();
            return Ok(out);
        }
        loop {
            let s = self.span();
            out.push((self.expr()?, s));
            match self.peek() {
                Tok::Comma => {
                    self.bump();
                }
                Tok::RParen => {
                    self.bump();
                    return Ok(out);
                }
                _ => {
                    let span = self.span();
                    return self.err(span, ParseErrorKind::Syntax("expected `,` or `)`".into()));
                }
            }
        }
    }

    fn arity(&self, name: &str, args: &[(Expr, Span)], expected: usize, span: Span) -> PResult<()> {
        if args.len() != expected {
            return self.err(span, ParseErrorKind::Arity { name: name.to_string(), expected, found: args.len() });
        }
        Ok(())
    }

    fn constant_arg(&self, arg: &(Expr, Span), what: &str) -> PResult<f64> {
        match arg.0.constant_value() {
            Some(v) if v.is_finite() => Ok(v),
            _ => self.err(arg.1, ParseErrorKind::BadArgument(format!("{what} must be a finite constant"))),
        }
    }

    fn state_arg(&self, arg: &(Expr, Span)) -> PResult<StateVar> {
        match arg.0.kind {
            ExprKind::State(v) => Ok(v),
            _ => self
                .err(arg.1, ParseErrorKind::BadArgument("expected a state variable `x`, `x[i]`, `y` or `y[i]`".into())),
        }
    }

    fn primary(&mut self) -> PResult<Expr> {
        let (tok, span) = self.bump();
        match tok {
            Tok::Num(v) => Ok(Expr::at(ExprKind::Num(v), span)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => self.identifier(name, span),
            other => self.err(span, ParseErrorKind::Syntax(format!("unexpected token {other:?}"))),
        }
    }

    fn identifier(&mut self, name: String, span: Span) -> PResult<Expr> {
        let kind = match name.as_str() {
            "t" => ExprKind::Time,
            "x" | "y" => ExprKind::State(self.state_var(&name, span)?),
            "sin" | "cos" | "tanh" => {
                let mut args = self.args()?;
                self.arity(&name, &args, 1, span)?;
                let func = match name.as_str() {
                    "sin" => UnaryFn::Sin,
                    "cos" => UnaryFn::Cos,
                    _ => UnaryFn::Tanh,
                };
                ExprKind::Unary { func, arg: Box::new(args.remove(0).0) }
            }
            "clamp" => {
                let args = self.args()?;
                self.arity(&name, &args, 2, span)?;
                let lo = self.constant_arg(&args[0], "clamp lower bound")?;
                let hi = self.constant_arg(&args[1], "clamp upper bound")?;
                if lo > hi {
                    return self.err(span, ParseErrorKind::BadArgument("clamp bounds must satisfy lo <= hi".into()));
                }
                self.expect(Tok::LParen, "`(` after clamp bounds")?;
                let arg = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                ExprKind::Clamp { lo, hi, arg: Box::new(arg) }
            }
            "nbr_sum" | "nbr_avg" => {
                if self.in_aggregate {
                    return self.err(span, ParseErrorKind::NestedAggregate);
                }
                self.in_aggregate = true;
                let args = self.args();
                self.in_aggregate = false;
                let mut args = args?;
                self.arity(&name, &args, 1, span)?;
                let agg = if name == "nbr_sum" { Aggregate::Sum } else { Aggregate::Avg };
                ExprKind::Neighbors { agg, body: Box::new(args.remove(0).0) }
            }
            "lag" => {
                let args = self.args()?;
                self.arity(&name, &args, 2, span)?;
                let var = self.state_arg(&args[0])?;
                let delay = self.constant_arg(&args[1], "lag delay")?;
                if delay < 0.0 {
                    return self.err(args[1].1, ParseErrorKind::BadArgument("lag delay must be nonnegative".into()));
                }
                ExprKind::Lag { var, delay }
            }
            "runavg" => {
                let args = self.args()?;
                self.arity(&name, &args, 2, span)?;
                let var = self.state_arg(&args[0])?;
                let window = if args[1].0.kind == ExprKind::Time {
                    Window::Full
                } else {
                    let w = self.constant_arg(&args[1], "runavg window")?;
                    if w <= 0.0 {
                        return self
                            .err(args[1].1, ParseErrorKind::BadArgument("runavg window must be positive".into()));
                    }
                    Window::Fixed(w)
                };
                ExprKind::RunAvg { var, window }
            }
            "runmax_norm" => {
                let args = self.args()?;
                self.arity(&name, &args, 1, span)?;
                ExprKind::RunMaxNorm { var: self.state_arg(&args[0])? }
            }
            _ => return self.err(span, ParseErrorKind::UnknownIdentifier(name)),
        };
        Ok(Expr::at(kind, span))
    }
}

/// Parses a drift expression.
pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, in_aggregate: false };
    if *p.peek() == Tok::Eof {
        let span = p.span();
        return p.err(span, ParseErrorKind::Syntax("empty expression".into()));
    }
    let e = p.expr()?;
    if *p.peek() != Tok::Eof {
        let span = p.span();
        return p.err(span, ParseErrorKind::Syntax(format!("trailing input at {:?}", p.peek())));
    }
    Ok(e)
}

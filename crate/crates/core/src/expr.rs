//! Arithmetic expressions in one variable `x`.
//!
//! Coefficients of a diffusion are supplied as short formulas such as
//! `"-x"`, `"1 + 0.5*sin(x)^2"` or `"exp(x)"`. This module parses them into an
//! [`Expr`] tree, evaluates them, and differentiates them symbolically so that
//! callers never have to finite-difference user input.
//!
//! Grammar (usual precedence, `^` binds tightest and is right associative):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | 'x' | 'pi' | func '(' expr ')' | ('min'|'max') '(' expr ',' expr ')' | '(' expr ')'
//! func   := exp | log | sin | cos | sqrt | abs | sign
//! ```

use std::fmt;

use thiserror::Error;

/// Position-tagged parse failure. Columns are 1-based.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
    Abs,
    Sign,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Sign => "sign",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "sign" => Func::Sign,
            _ => return None,
        })
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Exp => v.exp(),
            Func::Log => v.ln(),
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Sqrt => v.sqrt(),
            Func::Abs => v.abs(),
            Func::Sign => {
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Expression tree over the single variable `x`.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ParseError> {
        Parser::new(src, 1, 1).parse_all()
    }

    /// Parse text that sits at `(line, column)` of a larger document, so
    /// errors point into that document.
    pub fn parse_at(src: &str, line: usize, column: usize) -> Result<Expr, ParseError> {
        Parser::new(src, line, column).parse_all()
    }

    pub fn constant(v: f64) -> Expr {
        Expr::Const(v)
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var => x,
            Expr::Neg(a) => -a.eval(x),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Pow(a, b) => pow(a.eval(x), b.eval(x)),
            Expr::Call(f, a) => f.apply(a.eval(x)),
            Expr::Min(a, b) => a.eval(x).min(b.eval(x)),
            Expr::Max(a, b) => a.eval(x).max(b.eval(x)),
        }
    }

    /// The value if the tree contains no `x`.
    pub fn as_const(&self) -> Option<f64> {
        if self.contains_var() {
            None
        } else {
            Some(self.eval(0.0))
        }
    }

    pub fn contains_var(&self) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var => true,
            Expr::Neg(a) | Expr::Call(_, a) => a.contains_var(),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b)
            | Expr::Min(a, b)
            | Expr::Max(a, b) => a.contains_var() || b.contains_var(),
        }
    }

    /// Exact literal zero (after constant folding).
    pub fn is_literal_zero(&self) -> bool {
        matches!(self.simplify(), Expr::Const(c) if c == 0.0)
    }

    /// Replace every `x` by `with`.
    pub fn substitute(&self, with: &Expr) -> Expr {
        let s = |e: &Expr| Box::new(e.substitute(with));
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var => with.clone(),
            Expr::Neg(a) => Expr::Neg(s(a)),
            Expr::Add(a, b) => Expr::Add(s(a), s(b)),
            Expr::Sub(a, b) => Expr::Sub(s(a), s(b)),
            Expr::Mul(a, b) => Expr::Mul(s(a), s(b)),
            Expr::Div(a, b) => Expr::Div(s(a), s(b)),
            Expr::Pow(a, b) => Expr::Pow(s(a), s(b)),
            Expr::Call(f, a) => Expr::Call(*f, s(a)),
            Expr::Min(a, b) => Expr::Min(s(a), s(b)),
            Expr::Max(a, b) => Expr::Max(s(a), s(b)),
        }
    }

    /// Symbolic derivative with respect to `x`, constant-folded.
    pub fn derivative(&self) -> Expr {
        self.diff().simplify()
    }

    fn diff(&self) -> Expr {
        use Expr::*;
        let b = Box::new;
        match self {
            Const(_) => Const(0.0),
            Var => Const(1.0),
            Neg(a) => Neg(b(a.diff())),
            Add(l, r) => Add(b(l.diff()), b(r.diff())),
            Sub(l, r) => Sub(b(l.diff()), b(r.diff())),
            Mul(l, r) => Add(
                b(Mul(b(l.diff()), r.clone())),
                b(Mul(l.clone(), b(r.diff()))),
            ),
            Div(l, r) => Div(
                b(Sub(
                    b(Mul(b(l.diff()), r.clone())),
                    b(Mul(l.clone(), b(r.diff()))),
                )),
                b(Pow(r.clone(), b(Const(2.0)))),
            ),
            Pow(base, ex) => {
                if let Some(n) = ex.as_const() {
                    // n * base^(n-1) * base'
                    Mul(
                        b(Mul(b(Const(n)), b(Pow(base.clone(), b(Const(n - 1.0)))))),
                        b(base.diff()),
                    )
                } else {
                    // base^ex * (ex' ln base + ex base'/base)
                    Mul(
                        b(self.clone()),
                        b(Add(
                            b(Mul(b(ex.diff()), b(Call(Func::Log, base.clone())))),
                            b(Div(b(Mul(ex.clone(), b(base.diff()))), base.clone())),
                        )),
                    )
                }
            }
            Call(f, a) => {
                let inner = a.diff();
                let outer = match f {
                    Func::Exp => Call(Func::Exp, a.clone()),
                    Func::Log => Div(b(Const(1.0)), a.clone()),
                    Func::Sin => Call(Func::Cos, a.clone()),
                    Func::Cos => Neg(b(Call(Func::Sin, a.clone()))),
                    Func::Sqrt => Div(b(Const(0.5)), b(Call(Func::Sqrt, a.clone()))),
                    Func::Abs => Call(Func::Sign, a.clone()),
                    Func::Sign => Const(0.0),
                };
                Mul(b(outer), b(inner))
            }
            // min(f,g) = (f+g)/2 - |f-g|/2, max(f,g) = (f+g)/2 + |f-g|/2
            Min(l, r) | Max(l, r) => {
                let half_sum = Mul(b(Const(0.5)), b(Add(b(l.diff()), b(r.diff()))));
                let half_diff = Mul(
                    b(Mul(
                        b(Const(0.5)),
                        b(Call(Func::Sign, b(Sub(l.clone(), r.clone())))),
                    )),
                    b(Sub(b(l.diff()), b(r.diff()))),
                );
                if matches!(self, Min(..)) {
                    Sub(b(half_sum), b(half_diff))
                } else {
                    Add(b(half_sum), b(half_diff))
                }
            }
        }
    }

    /// Constant folding and the usual identities (`0*e`, `1*e`, `e+0`, `e^1`, ...).
    pub fn simplify(&self) -> Expr {
        use Expr::*;
        let b = Box::new;
        match self {
            Const(c) => Const(*c),
            Var => Var,
            Neg(a) => match a.simplify() {
                Const(c) => Const(-c),
                Neg(inner) => *inner,
                other => Neg(b(other)),
            },
            Add(l, r) => match (l.simplify(), r.simplify()) {
                (Const(x), Const(y)) => Const(x + y),
                (Const(z), e) | (e, Const(z)) if z == 0.0 => e,
                (l, r) => Add(b(l), b(r)),
            },
            Sub(l, r) => match (l.simplify(), r.simplify()) {
                (Const(x), Const(y)) => Const(x - y),
                (e, Const(z)) if z == 0.0 => e,
                (Const(z), e) if z == 0.0 => Neg(b(e)).simplify(),
                (l, r) => Sub(b(l), b(r)),
            },
            Mul(l, r) => match (l.simplify(), r.simplify()) {
                (Const(x), Const(y)) => Const(x * y),
                (Const(z), _) | (_, Const(z)) if z == 0.0 => Const(0.0),
                (Const(o), e) | (e, Const(o)) if o == 1.0 => e,
                (l, r) => Mul(b(l), b(r)),
            },
            Div(l, r) => match (l.simplify(), r.simplify()) {
                (Const(x), Const(y)) => Const(x / y),
                (Const(z), _) if z == 0.0 => Const(0.0),
                (e, Const(o)) if o == 1.0 => e,
                (l, r) => Div(b(l), b(r)),
            },
            Pow(l, r) => match (l.simplify(), r.simplify()) {
                (Const(x), Const(y)) => Const(pow(x, y)),
                (_, Const(z)) if z == 0.0 => Const(1.0),
                (e, Const(o)) if o == 1.0 => e,
                (l, r) => Pow(b(l), b(r)),
            },
            Call(f, a) => match a.simplify() {
                Const(c) => Const(f.apply(c)),
                e => Call(*f, b(e)),
            },
            Min(l, r) => match (l.simplify(), r.simplify()) {
                (Const(x), Const(y)) => Const(x.min(y)),
                (l, r) => Min(b(l), b(r)),
            },
            Max(l, r) => match (l.simplify(), r.simplify()) {
                (Const(x), Const(y)) => Const(x.max(y)),
                (l, r) => Max(b(l), b(r)),
            },
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(..) => 3,
            Expr::Pow(..) => 4,
            Expr::Const(c) if *c < 0.0 => 3,
            _ => 5,
        }
    }
}

/// `powf` with integer exponents of negative bases handled like a calculator.
fn pow(base: f64, ex: f64) -> f64 {
    if ex == ex.trunc() && ex.abs() <= i32::MAX as f64 {
        base.powi(ex as i32)
    } else {
        base.powf(ex)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wrap = |f: &mut fmt::Formatter<'_>, e: &Expr, min_prec: u8| -> fmt::Result {
            if e.precedence() < min_prec {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            Expr::Const(c) => {
                if *c < 0.0 {
                    write!(f, "-{}", -c)
                } else {
                    write!(f, "{c}")
                }
            }
            Expr::Var => write!(f, "x"),
            Expr::Neg(a) => {
                write!(f, "-")?;
                wrap(f, a, 3)
            }
            Expr::Add(l, r) => {
                wrap(f, l, 1)?;
                write!(f, " + ")?;
                wrap(f, r, 2)
            }
            Expr::Sub(l, r) => {
                wrap(f, l, 1)?;
                write!(f, " - ")?;
                wrap(f, r, 2)
            }
            Expr::Mul(l, r) => {
                wrap(f, l, 2)?;
                write!(f, "*")?;
                wrap(f, r, 3)
            }
            Expr::Div(l, r) => {
                wrap(f, l, 2)?;
                write!(f, "/")?;
                wrap(f, r, 3)
            }
            Expr::Pow(l, r) => {
                wrap(f, l, 5)?;
                write!(f, "^")?;
                wrap(f, r, 3)
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
            Expr::Min(l, r) => write!(f, "min({l}, {r})"),
            Expr::Max(l, r) => write!(f, "max({l}, {r})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    End,
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    line: usize,
    col0: usize,
    err: Option<ParseError>,
}

impl Parser {
    fn new(src: &str, line: usize, col0: usize) -> Parser {
        let mut p = Parser {
            toks: Vec::new(),
            pos: 0,
            line,
            col0,
            err: None,
        };
        p.lex(src);
        p
    }

    fn error(&self, offset: usize, message: impl Into<String>) -> ParseError {
        ParseError {
            line: self.line,
            column: self.col0 + offset,
            message: message.into(),
        }
    }

    fn lex(&mut self, src: &str) {
        let chars: Vec<char> = src.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            if c.is_whitespace() {
                i += 1;
            } else if c.is_ascii_digit() || c == '.' {
                let start = i;
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
                let text: String = chars[start..i].iter().collect();
                match text.parse::<f64>() {
                    Ok(v) => self.toks.push((Tok::Num(v), start)),
                    Err(_) => {
                        self.err = Some(self.error(start, format!("malformed number `{text}`")));
                        return;
                    }
                }
            } else if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                self.toks.push((Tok::Ident(text), start));
            } else if "+-*/^(),".contains(c) {
                self.toks.push((Tok::Op(c), i));
                i += 1;
            } else {
                self.err = Some(self.error(i, format!("unexpected character `{c}`")));
                return;
            }
        }
        self.toks.push((Tok::End, chars.len()));
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, op: char) -> Result<(), ParseError> {
        if *self.peek() == Tok::Op(op) {
            self.bump();
            Ok(())
        } else {
            Err(self.error(self.offset(), format!("expected `{op}`")))
        }
    }

    fn parse_all(mut self) -> Result<Expr, ParseError> {
        if let Some(e) = self.err.take() {
            return Err(e);
        }
        if *self.peek() == Tok::End {
            return Err(self.error(0, "empty expression"));
        }
        let e = self.expr()?;
        if *self.peek() != Tok::End {
            return Err(self.error(self.offset(), "unexpected trailing input"));
        }
        Ok(e)
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Op('+') => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Op('-') => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Tok::Op('*') => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Tok::Op('/') => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Op('-') {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if *self.peek() == Tok::Op('^') {
            self.bump();
            let ex = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(ex)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let at = self.offset();
        match self.bump() {
            Tok::Num(v) => Ok(Expr::Const(v)),
            Tok::Op('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => match name.as_str() {
                "x" => Ok(Expr::Var),
                "pi" => Ok(Expr::Const(std::f64::consts::PI)),
                "min" | "max" => {
                    self.expect('(')?;
                    let a = self.expr()?;
                    self.expect(',')?;
                    let b = self.expr()?;
                    self.expect(')')?;
                    Ok(if name == "min" {
                        Expr::Min(Box::new(a), Box::new(b))
                    } else {
                        Expr::Max(Box::new(a), Box::new(b))
                    })
                }
                other => match Func::from_name(other) {
                    Some(func) => {
                        self.expect('(')?;
                        let a = self.expr()?;
                        self.expect(')')?;
                        Ok(Expr::Call(func, Box::new(a)))
                    }
                    None => Err(self.error(at, format!("unknown identifier `{other}`"))),
                },
            },
            Tok::End => Err(self.error(at, "unexpected end of expression")),
            Tok::Op(c) => Err(self.error(at, format!("unexpected `{c}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(s: &str) -> Expr {
        Expr::parse(s).unwrap()
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(p("1 + 2*3").eval(0.0), 7.0);
        assert_eq!(p("2^3^2").eval(0.0), 512.0);
        assert_eq!(p("-x^2").eval(3.0), -9.0);
        assert_eq!(p("(1 - x)/2").eval(3.0), -1.0);
        assert_eq!(p("min(x, 2) + max(x, 2)").eval(5.0), 7.0);
        assert!((p("2*pi").eval(0.0) - std::f64::consts::TAU).abs() < 1e-15);
        assert_eq!(p("1e-3*x").eval(2.0), 2e-3);
    }

    #[test]
    fn errors_carry_position() {
        let e = Expr::parse_at("1 + * x", 4, 10).unwrap_err();
        assert_eq!((e.line, e.column), (4, 14));
        let e = Expr::parse("foo(x)").unwrap_err();
        assert_eq!(e.column, 1);
        assert!(Expr::parse("").is_err());
        assert!(Expr::parse("(x").is_err());
        assert!(Expr::parse("x $ 2").is_err());
    }

    #[test]
    fn derivatives_match_closed_forms() {
        let cases: [(&str, fn(f64) -> f64); 6] = [
            ("x^3", |x| 3.0 * x * x),
            ("exp(2*x)", |x| 2.0 * (2.0 * x).exp()),
            ("sin(x)*cos(x)", |x| (2.0 * x).cos()),
            ("sqrt(x)/x", |x| -0.5 * x.powf(-1.5)),
            ("x^x", |x| x.powf(x) * (x.ln() + 1.0)),
            ("log(1 + x^2)", |x| 2.0 * x / (1.0 + x * x)),
        ];
        for (src, d) in cases {
            let de = p(src).derivative();
            for &x in &[0.3, 1.0, 2.7] {
                assert!((de.eval(x) - d(x)).abs() < 1e-12 * (1.0 + d(x).abs()), "{src} at {x}");
            }
        }
        assert_eq!(p("abs(x - 1)").derivative().eval(0.0), -1.0);
        assert_eq!(p("min(x, 1)").derivative().eval(0.5), 1.0);
        assert_eq!(p("min(x, 1)").derivative().eval(2.0), 0.0);
        assert_eq!(p("max(x, 1)").derivative().eval(2.0), 1.0);
    }

    #[test]
    fn literal_zero_detection() {
        assert!(p("0").is_literal_zero());
        assert!(p("0*x").is_literal_zero());
        assert!(p("x - x").eval(3.0) == 0.0 && !p("x - x").is_literal_zero());
        assert!(!p("1e-300").is_literal_zero());
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0u32..1000).prop_map(|n| Expr::Const(n as f64 / 8.0)),
            Just(Expr::Var),
        ];
        leaf.prop_recursive(4, 32, 2, |inner| {
            let b = Box::new;
            prop_oneof![
                inner.clone().prop_map(move |a| Expr::Neg(b(a))),
                (inner.clone(), inner.clone()).prop_map(move |(l, r)| Expr::Add(b(l), b(r))),
                (inner.clone(), inner.clone()).prop_map(move |(l, r)| Expr::Sub(b(l), b(r))),
                (inner.clone(), inner.clone()).prop_map(move |(l, r)| Expr::Mul(b(l), b(r))),
                (inner.clone(), inner.clone()).prop_map(move |(l, r)| Expr::Div(b(l), b(r))),
                (inner.clone(), inner.clone()).prop_map(move |(l, r)| Expr::Pow(b(l), b(r))),
                inner.clone().prop_map(move |a| Expr::Call(Func::Sin, b(a))),
                inner.clone().prop_map(move |a| Expr::Call(Func::Exp, b(a))),
                (inner.clone(), inner).prop_map(move |(l, r)| Expr::Max(b(l), b(r))),
            ]
        })
    }

    proptest! {
        #[test]
        fn unparse_then_parse_is_identity(e in arb_expr()) {
            let text = e.to_string();
            let back = Expr::parse(&text).unwrap();
            prop_assert_eq!(&back, &e, "text was {}", text);
        }

        #[test]
        fn derivative_agrees_with_central_difference(c in 0.1f64..3.0, k in 1u32..4, x in 0.2f64..2.0) {
            let e = Expr::parse(&format!("{c}*x^{k} + sin({c}*x)")).unwrap();
            let h = 1e-5;
            let fd = (e.eval(x + h) - e.eval(x - h)) / (2.0 * h);
            prop_assert!((e.derivative().eval(x) - fd).abs() < 1e-6 * (1.0 + fd.abs()));
        }
    }
}

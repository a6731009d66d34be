//! Minimal closed-form expression language used in frame and problem files.
//!
//! Grammar (precedence low to high):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := ('-' | '+') unary | power
//! power  := atom ('^' unary)?
//! atom   := number | var | func '(' expr ')' | '(' expr ')'
//! var    := 'x'<k> (1-based) | 'u' | 'q'<k> (1-based) | 'pi'
//! func   := 'exp' | 'log'
//! ```
//!
//! `^` is right-associative, and `-x^2` parses as `-(x^2)`.

use crate::error::{Error, Result};
use crate::poly::Polynomial;
use std::fmt;

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    /// Coordinate `x_{i+1}`.
    X(usize),
    /// Solution value slot of a Hamiltonian.
    U,
    /// Horizontal gradient component `q_{i+1}`.
    Q(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Exp(Box<Expr>),
    Log(Box<Expr>),
}

/// Variable bindings for [`Expr::eval`].
#[derive(Clone, Copy, Debug, Default)]
pub struct Bindings<'a> {
    pub x: &'a [f64],
    pub u: f64,
    pub q: &'a [f64],
}

impl<'a> Bindings<'a> {
    pub fn x(x: &'a [f64]) -> Self {
        Bindings { x, u: 0.0, q: &[] }
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let mut p = Parser {
            src: src.as_bytes(),
            pos: 0,
        };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn eval(&self, b: &Bindings<'_>) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::X(i) => b.x[*i],
            Expr::U => b.u,
            Expr::Q(i) => b.q[*i],
            Expr::Neg(a) => -a.eval(b),
            Expr::Add(a, c) => a.eval(b) + c.eval(b),
            Expr::Sub(a, c) => a.eval(b) - c.eval(b),
            Expr::Mul(a, c) => a.eval(b) * c.eval(b),
            Expr::Div(a, c) => a.eval(b) / c.eval(b),
            Expr::Pow(a, c) => {
                let base = a.eval(b);
                match c.as_ref() {
                    Expr::Num(k) if k.fract() == 0.0 && k.abs() < 64.0 => base.powi(*k as i32),
                    _ => base.powf(c.eval(b)),
                }
            }
            Expr::Exp(a) => a.eval(b).exp(),
            Expr::Log(a) => a.eval(b).ln(),
        }
    }

    pub fn eval_x(&self, x: &[f64]) -> f64 {
        self.eval(&Bindings::x(x))
    }

    /// Checks that every variable is in range: `x1..x{n}`, `q1..q{m}`, and `u`
    /// only when allowed.
    pub fn check_vars(&self, n: usize, m: usize, allow_u: bool) -> Result<()> {
        let mut bad = None;
        self.visit(&mut |e| match e {
            Expr::X(i) if *i >= n => bad = Some(format!("x{} (dimension is {n})", i + 1)),
            Expr::Q(i) if *i >= m => bad = Some(format!("q{} (horizontal dimension is {m})", i + 1)),
            Expr::Q(i) if m == 0 => bad = Some(format!("q{} not allowed here", i + 1)),
            Expr::U if !allow_u => bad = Some("u not allowed here".into()),
            _ => {}
        });
        match bad {
            Some(v) => Err(Error::Expr {
                column: 0,
                message: format!("variable out of range: {v}"),
            }),
            None => Ok(()),
        }
    }

    pub fn uses_u(&self) -> bool {
        let mut found = false;
        self.visit(&mut |e| found |= matches!(e, Expr::U));
        found
    }

    pub fn uses_q(&self) -> bool {
        let mut found = false;
        self.visit(&mut |e| found |= matches!(e, Expr::Q(_)));
        found
    }

    fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Num(_) | Expr::X(_) | Expr::U | Expr::Q(_) => {}
            Expr::Neg(a) | Expr::Exp(a) | Expr::Log(a) => a.visit(f),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => {
                a.visit(f);
                b.visit(f);
            }
        }
    }

    /// Converts to a polynomial in `nvars` coordinates. Division is allowed
    /// only by constants and powers only with nonnegative integer exponents.
    pub fn to_polynomial(&self, nvars: usize) -> Result<Polynomial> {
        Ok(match self {
            Expr::Num(v) => Polynomial::constant(nvars, *v),
            Expr::X(i) if *i < nvars => Polynomial::var(nvars, *i),
            Expr::X(i) => {
                return Err(Error::NotPolynomial(format!(
                    "x{} out of range for dimension {nvars}",
                    i + 1
                )))
            }
            Expr::U | Expr::Q(_) => {
                return Err(Error::NotPolynomial(format!("variable {self} not allowed")))
            }
            Expr::Neg(a) => -&a.to_polynomial(nvars)?,
            Expr::Add(a, b) => &a.to_polynomial(nvars)? + &b.to_polynomial(nvars)?,
            Expr::Sub(a, b) => &a.to_polynomial(nvars)? - &b.to_polynomial(nvars)?,
            Expr::Mul(a, b) => &a.to_polynomial(nvars)? * &b.to_polynomial(nvars)?,
            Expr::Div(a, b) => {
                let d = b.to_polynomial(nvars)?.as_constant().ok_or_else(|| {
                    Error::NotPolynomial(format!("division by non-constant {b}"))
                })?;
                if d == 0.0 {
                    return Err(Error::NotPolynomial("division by zero".into()));
                }
                a.to_polynomial(nvars)?.scale(1.0 / d)
            }
            Expr::Pow(a, b) => {
                let k = b.to_polynomial(nvars)?.as_constant();
                match k {
                    Some(k) if k >= 0.0 && k.fract() == 0.0 && k <= 64.0 => {
                        a.to_polynomial(nvars)?.powi(k as u32)
                    }
                    _ => {
                        return Err(Error::NotPolynomial(format!(
                            "exponent {b} is not a nonnegative integer"
                        )))
                    }
                }
            }
            Expr::Exp(_) | Expr::Log(_) => {
                return Err(Error::NotPolynomial(format!("transcendental term {self}")))
            }
        })
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::X(i) => write!(f, "x{}", i + 1),
            Expr::U => write!(f, "u"),
            Expr::Q(i) => write!(f, "q{}", i + 1),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Expr::Exp(a) => write!(f, "exp({a})"),
            Expr::Log(a) => write!(f, "log({a})"),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Expr {
            column: self.pos + 1,
            message: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            None => Err(self.err("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.err("expected ')'"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            Some(_) => Err(self.err("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.')
        {
            self.pos += 1;
        }
        if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && matches!(self.src[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == digits {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse::<f64>().map(Expr::Num).map_err(|_| Error::Expr {
            column: start + 1,
            message: format!("bad number '{text}'"),
        })
    }

    fn ident(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        let bad = |msg: String| Error::Expr {
            column: start + 1,
            message: msg,
        };
        match name {
            "exp" | "log" => {
                if !self.eat(b'(') {
                    return Err(self.err("expected '(' after function name"));
                }
                let arg = Box::new(self.expr()?);
                if !self.eat(b')') {
                    return Err(self.err("expected ')'"));
                }
                Ok(if name == "exp" {
                    Expr::Exp(arg)
                } else {
                    Expr::Log(arg)
                })
            }
            "pi" => Ok(Expr::Num(std::f64::consts::PI)),
            "u" => Ok(Expr::U),
            _ => {
                let (head, idx) = name.split_at(1);
                let k: usize = idx
                    .parse()
                    .map_err(|_| bad(format!("unknown identifier '{name}'")))?;
                if k == 0 {
                    return Err(bad(format!("variables are 1-based: '{name}'")));
                }
                match head {
                    "x" => Ok(Expr::X(k - 1)),
                    "q" => Ok(Expr::Q(k - 1)),
                    _ => Err(bad(format!("unknown identifier '{name}'"))),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str, x: &[f64]) -> f64 {
        Expr::parse(s).unwrap().eval_x(x)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2 * 3", &[]), 7.0);
        assert_eq!(ev("-2^2", &[]), -4.0);
        assert_eq!(ev("2^3^2", &[]), 512.0);
        assert_eq!(ev("(1 + x1^2 + x2^2)^(-2)", &[1.0, 1.0]), 1.0 / 9.0);
        assert_eq!(ev("2^-1", &[]), 0.5);
        assert_eq!(ev("8 / 4 / 2", &[]), 1.0);
        assert!((ev("exp(log(3))", &[]) - 3.0).abs() < 1e-15);
        assert_eq!(ev("1.5e2 + 1e-1", &[]), 150.1);
    }

    #[test]
    fn errors_carry_columns() {
        match Expr::parse("1 + * 2") {
            Err(Error::Expr { column, .. }) => assert_eq!(column, 5),
            other => panic!("{other:?}"),
        }
        assert!(Expr::parse("sin(x1)").is_err());
        assert!(Expr::parse("x0").is_err());
        assert!(Expr::parse("(x1").is_err());
        assert!(Expr::parse("x1 x2").is_err());
    }

    #[test]
    fn variable_scopes() {
        let e = Expr::parse("u + q2 * x3").unwrap();
        assert!(e.check_vars(3, 2, true).is_ok());
        assert!(e.check_vars(3, 1, true).is_err());
        assert!(e.check_vars(3, 2, false).is_err());
        assert!(e.check_vars(2, 2, true).is_err());
        assert!(e.uses_u() && e.uses_q());
        let b = Bindings {
            x: &[0.0, 0.0, 2.0],
            u: 1.0,
            q: &[0.0, 3.0],
        };
        assert_eq!(e.eval(&b), 7.0);
    }

    #[test]
    fn polynomial_conversion() {
        let p = Expr::parse("-x2/2").unwrap().to_polynomial(3).unwrap();
        assert_eq!(p, Polynomial::var(3, 1).scale(-0.5));
        let q = Expr::parse("(x1 + x2)^2 - 2*x1*x2").unwrap().to_polynomial(2).unwrap();
        assert_eq!(q, &Polynomial::var(2, 0).powi(2) + &Polynomial::var(2, 1).powi(2));
        assert!(Expr::parse("exp(x1)").unwrap().to_polynomial(2).is_err());
        assert!(Expr::parse("1/x1").unwrap().to_polynomial(2).is_err());
        assert!(Expr::parse("x1^0.5").unwrap().to_polynomial(2).is_err());
    }
}

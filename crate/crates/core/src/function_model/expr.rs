use std::fmt;

use super::jet::{self, Series};
use super::EvalError;

/// Abstract syntax tree of the real-variable expression language.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    X,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
    /// `exp(1/(u^2 - 1))` for `|u| < 1`, identically zero otherwise.
    Bump(Box<Expr>),
}

impl Expr {
    pub fn num(v: f64) -> Self {
        Expr::Num(v)
    }

    /// `bump((x - center) / radius)`, supported on `[center - radius, center + radius]`.
    pub fn shifted_bump(center: f64, radius: f64) -> Self {
        let arg = Expr::Div(
            Box::new(Expr::Sub(Box::new(Expr::X), Box::new(Expr::Num(center)))),
            Box::new(Expr::Num(radius)),
        );
        Expr::Bump(Box::new(arg))
    }

    /// Plain value at `x`.
    pub fn eval(&self, x: f64) -> Result<f64, EvalError> {
        Ok(self.series(x, 0)?[0])
    }

    /// Taylor coefficients `f^(k)(x) / k!` for `k = 0..=order`.
    pub fn series(&self, x: f64, order: usize) -> Result<Series, EvalError> {
        let out = match self {
            Expr::Num(v) => jet::constant(*v, order),
            Expr::X => jet::variable(x, order),
            Expr::Neg(a) => jet::neg(&a.series(x, order)?),
            Expr::Add(a, b) => jet::add(&a.series(x, order)?, &b.series(x, order)?),
            Expr::Sub(a, b) => jet::sub(&a.series(x, order)?, &b.series(x, order)?),
            Expr::Mul(a, b) => jet::mul(&a.series(x, order)?, &b.series(x, order)?),
            Expr::Div(a, b) => {
                let num = a.series(x, order)?;
                let den = b.series(x, order)?;
                jet::div(&num, &den).ok_or(EvalError::DivisionByZero { x })?
            }
            Expr::Pow(a, k) => {
                let base = a.series(x, order)?;
                jet::powi(&base, *k).ok_or(EvalError::DivisionByZero { x })?
            }
            Expr::Sin(a) => jet::sin_cos(&a.series(x, order)?).0,
            Expr::Cos(a) => jet::sin_cos(&a.series(x, order)?).1,
            Expr::Exp(a) => jet::exp(&a.series(x, order)?),
            Expr::Bump(a) => jet::bump(&a.series(x, order)?),
        };
        if out.iter().any(|c| !c.is_finite()) {
            return Err(EvalError::NonFinite { x });
        }
        Ok(out)
    }
}

fn fmt_number(v: f64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if v < 0.0 || (v == 0.0 && v.is_sign_negative()) {
        write!(f, "(-{})", -v)
    } else {
        write!(f, "{}", v)
    }
}

// Canonical form: every compound node is parenthesised, so printing and
// re-parsing reproduces the tree exactly.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => fmt_number(*v, f),
            Expr::X => write!(f, "x"),
            Expr::Neg(a) => write!(f, "(-{})", a),
            Expr::Add(a, b) => write!(f, "({} + {})", a, b),
            Expr::Sub(a, b) => write!(f, "({} - {})", a, b),
            Expr::Mul(a, b) => write!(f, "({} * {})", a, b),
            Expr::Div(a, b) => write!(f, "({} / {})", a, b),
            Expr::Pow(a, k) => {
                if *k < 0 {
                    write!(f, "({}^(-{}))", a, k.unsigned_abs())
                } else {
                    write!(f, "({}^{})", a, k)
                }
            }
            Expr::Sin(a) => write!(f, "sin({})", a),
            Expr::Cos(a) => write!(f, "cos({})", a),
            Expr::Exp(a) => write!(f, "exp({})", a),
            Expr::Bump(a) => write!(f, "bump({})", a),
        }
    }
}

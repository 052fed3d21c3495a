//! Smooth compactly supported functions of one real variable.
//!
//! Functions are written in a small expression language (see [`parser`]) and
//! differentiated by propagating truncated Taylor series through the tree.

pub mod expr;
pub mod jet;
pub mod parser;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use expr::Expr;
pub use parser::parse_expression;

/// Default highest derivative order a function model serves.
pub const DEFAULT_MAX_ORDER: usize = 12;
/// Default grid density (points per unit length) for derivative sup estimates.
pub const DEFAULT_GRID_RESOLUTION: usize = 256;
/// Multiplier applied to grid maxima in [`DerivativeBounds`].
pub const SAFETY_FACTOR: f64 = 1.1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at offset {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier `{name}` at offset {pos}")]
    UnknownIdentifier { pos: usize, name: String },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("division by zero at x = {x}")]
    DivisionByZero { x: f64 },
    #[error("non-finite value at x = {x}")]
    NonFinite { x: f64 },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FunctionError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("support [{a}, {b}] must be a finite interval of positive length")]
    BadSupport { a: f64, b: f64 },
    #[error("function is not identically zero outside its support (value {value:e} at x = {x})")]
    NotCompactlySupported { x: f64, value: f64 },
    #[error("derivative order {requested} exceeds max_order {max_order}")]
    OrderTooHigh { requested: usize, max_order: usize },
    #[error("grid resolution {0} is below the minimum of 64 points per unit")]
    GridTooCoarse(usize),
    #[error("theta support [{0}, {1}] must satisfy 0 < theta1 < theta2 < 2*pi")]
    BadThetaSupport(f64, f64),
}

/// Derivative values `derivs[k] = f^(k)(x)` at a base point.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorJet {
    pub x: f64,
    pub derivs: Vec<f64>,
}

impl TaylorJet {
    pub fn zero(x: f64, order: usize) -> Self {
        TaylorJet {
            x,
            derivs: vec![0.0; order + 1],
        }
    }

    pub fn order(&self) -> usize {
        self.derivs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.derivs.iter().all(|d| *d == 0.0)
    }
}

/// Derivatives of `f` at `x` up to `order`, via Taylor propagation.
pub fn eval_jet(f: &Expr, x: f64, order: usize) -> Result<TaylorJet, EvalError> {
    let c = f.series(x, order)?;
    Ok(TaylorJet {
        x,
        derivs: jet::to_derivatives(&c),
    })
}

/// How the expression variable relates to the real line the function lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Argument {
    /// `h(t) = expr(t)`.
    Identity,
    /// `h(t) = expr(theta)` with `theta = 2 atan2(1, t)`, i.e. `cot(theta / 2) = t`.
    CayleyAngle,
}

/// A real C^inf function, identically zero outside `support`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothCompactFunction {
    expr: Expr,
    argument: Argument,
    support: (f64, f64),
    max_order: usize,
}

impl SmoothCompactFunction {
    pub fn new(expr: Expr, support: (f64, f64), max_order: usize) -> Result<Self, FunctionError> {
        Self::with_argument(expr, Argument::Identity, support, max_order)
    }

    pub fn parse(text: &str, support: (f64, f64), max_order: usize) -> Result<Self, FunctionError> {
        Self::new(parse_expression(text)?, support, max_order)
    }

    /// Circle function given in the angle variable and supported on `[theta1, theta2]`;
    /// the resulting function lives on the Cayley line with support
    /// `[cot(theta2/2), cot(theta1/2)]`.
    pub fn from_angle(
        expr: Expr,
        theta_support: (f64, f64),
        max_order: usize,
    ) -> Result<Self, FunctionError> {
        let (t1, t2) = theta_support;
        let two_pi = 2.0 * std::f64::consts::PI;
        if !(t1 > 0.0 && t1 < t2 && t2 < two_pi) {
            return Err(FunctionError::BadThetaSupport(t1, t2));
        }
        let cot_half = |th: f64| 1.0 / (th / 2.0).tan();
        Self::with_argument(
            expr,
            Argument::CayleyAngle,
            (cot_half(t2), cot_half(t1)),
            max_order,
        )
    }

    pub fn with_argument(
        expr: Expr,
        argument: Argument,
        support: (f64, f64),
        max_order: usize,
    ) -> Result<Self, FunctionError> {
        let (a, b) = support;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(FunctionError::BadSupport { a, b });
        }
        let f = SmoothCompactFunction {
            expr,
            argument,
            support,
            max_order,
        };
        f.check_margins()?;
        Ok(f)
    }

    fn check_margins(&self) -> Result<(), FunctionError> {
        let (a, b) = self.support;
        let len = b - a;
        for rel in [1e-9, 1e-6, 1e-3, 0.1, 1.0, 10.0] {
            for x in [a - rel * len, b + rel * len] {
                let c = self.raw_series(x, 0)?;
                if c[0] != 0.0 {
                    return Err(FunctionError::NotCompactlySupported { x, value: c[0] });
                }
            }
        }
        Ok(())
    }

    fn raw_series(&self, x: f64, order: usize) -> Result<jet::Series, EvalError> {
        match self.argument {
            Argument::Identity => self.expr.series(x, order),
            Argument::CayleyAngle => {
                let theta = jet::cayley_angle(x, order);
                let outer = self.expr.series(theta[0], order)?;
                Ok(jet::compose(&outer, &theta))
            }
        }
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn argument(&self) -> Argument {
        self.argument
    }

    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.support.0 && x <= self.support.1
    }

    pub fn value(&self, x: f64) -> Result<f64, FunctionError> {
        Ok(self.jet(x, 0)?.derivs[0])
    }

    /// Jet at `x`; identically zero outside the support.
    pub fn jet(&self, x: f64, order: usize) -> Result<TaylorJet, FunctionError> {
        if order > self.max_order {
            return Err(FunctionError::OrderTooHigh {
                requested: order,
                max_order: self.max_order,
            });
        }
        if !self.contains(x) {
            return Ok(TaylorJet::zero(x, order));
        }
        let c = self.raw_series(x, order)?;
        Ok(TaylorJet {
            x,
            derivs: jet::to_derivatives(&c),
        })
    }
}

/// Grid estimates of `M[n] = sup_x max_{k <= n} |f^(k)(x)|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeBounds {
    pub m: Vec<f64>,
    pub grid_resolution: usize,
}

impl DerivativeBounds {
    pub fn order(&self) -> usize {
        self.m.len() - 1
    }
}

pub fn estimate_sup_derivatives(
    f: &SmoothCompactFunction,
    order: usize,
    grid_resolution: usize,
) -> Result<DerivativeBounds, FunctionError> {
    if order > f.max_order {
        return Err(FunctionError::OrderTooHigh {
            requested: order,
            max_order: f.max_order,
        });
    }
    if grid_resolution < 64 {
        return Err(FunctionError::GridTooCoarse(grid_resolution));
    }
    let (a, b) = f.support;
    let cells = ((b - a) * grid_resolution as f64).ceil() as usize;
    let step = (b - a) / cells as f64;
    let jets: Vec<TaylorJet> = (0..cells + 3)
        .into_par_iter()
        .map(|i| f.jet(a + (i as f64 - 1.0) * step, order))
        .collect::<Result<_, _>>()?;
    let mut m = vec![0.0f64; order + 1];
    for j in &jets {
        let mut running = 0.0f64;
        for (k, d) in j.derivs.iter().enumerate() {
            running = running.max(d.abs());
            m[k] = m[k].max(running);
        }
    }
    for v in m.iter_mut() {
        *v *= SAFETY_FACTOR;
    }
    Ok(DerivativeBounds { m, grid_resolution })
}

//! Expression trees for objectives and constraints.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use thiserror::Error;

/// Smooth elementary functions available in expressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
}

impl Func {
    pub const ALL: [Func; 5] = [Func::Exp, Func::Log, Func::Sin, Func::Cos, Func::Sqrt];

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    /// Applies the function, returning `None` outside its domain.
    pub(crate) fn apply(self, x: f64) -> Option<f64> {
        match self {
            Func::Exp => Some(x.exp()),
            Func::Log if x > 0.0 => Some(x.ln()),
            Func::Sqrt if x >= 0.0 => Some(x.sqrt()),
            Func::Sin => Some(x.sin()),
            Func::Cos => Some(x.cos()),
            Func::Log | Func::Sqrt => None,
        }
    }

    /// Derivative at `x` given the already computed value `y = f(x)`.
    pub(crate) fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Func::Exp => y,
            Func::Log => 1.0 / x,
            Func::Sin => x.cos(),
            Func::Cos => -x.sin(),
            Func::Sqrt => 0.5 / y,
        }
    }
}

/// An immutable expression tree over model variables.
///
/// Variables are referenced by their 0-based position in the model.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
    /// `base ^ exponent`; integral exponents are evaluated by repeated
    /// multiplication and accept negative bases.
    Pow(Box<Expr>, f64),
    Neg(Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Unary(Func, Box<Expr>),
}

/// Reasons an expression cannot be evaluated at a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainErrorKind {
    LogOfNonPositive,
    SqrtOfNegative,
    DivisionByZero,
    NegativeBaseRealExponent,
    NonFinite,
    VariableOutOfRange,
}

impl fmt::Display for DomainErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DomainErrorKind::LogOfNonPositive => "log of a non-positive value",
            DomainErrorKind::SqrtOfNegative => "sqrt of a negative value",
            DomainErrorKind::DivisionByZero => "division by zero",
            DomainErrorKind::NegativeBaseRealExponent => "negative base with a real exponent",
            DomainErrorKind::NonFinite => "non-finite intermediate value",
            DomainErrorKind::VariableOutOfRange => "variable index outside the point",
        };
        f.write_str(s)
    }
}

/// Evaluation failure carrying the offending subexpression.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{kind} in `{expr}`")]
pub struct DomainError {
    pub kind: DomainErrorKind,
    pub expr: Expr,
}

impl DomainError {
    fn new(kind: DomainErrorKind, expr: &Expr) -> Self {
        DomainError {
            kind,
            expr: expr.clone(),
        }
    }
}

pub(crate) fn integral_exponent(p: f64) -> Option<i32> {
    if p.fract() == 0.0 && p.abs() <= i32::MAX as f64 {
        Some(p as i32)
    } else {
        None
    }
}

impl Expr {
    pub fn var(index: usize) -> Expr {
        Expr::Var(index)
    }

    pub fn constant(value: f64) -> Expr {
        Expr::Const(value)
    }

    pub fn powf(self, exponent: f64) -> Expr {
        Expr::Pow(Box::new(self), exponent)
    }

    pub fn powi(self, exponent: i32) -> Expr {
        Expr::Pow(Box::new(self), exponent as f64)
    }

    pub fn exp(self) -> Expr {
        Expr::Unary(Func::Exp, Box::new(self))
    }

    pub fn ln(self) -> Expr {
        Expr::Unary(Func::Log, Box::new(self))
    }

    pub fn sin(self) -> Expr {
        Expr::Unary(Func::Sin, Box::new(self))
    }

    pub fn cos(self) -> Expr {
        Expr::Unary(Func::Cos, Box::new(self))
    }

    pub fn sqrt(self) -> Expr {
        Expr::Unary(Func::Sqrt, Box::new(self))
    }

    /// `Σ coeffs[i] * x[i]` skipping zero coefficients.
    pub fn dot(coeffs: &[f64]) -> Expr {
        Expr::Sum(
            coeffs
                .iter()
                .enumerate()
                .filter(|(_, c)| **c != 0.0)
                .map(|(i, c)| Expr::Product(vec![Expr::Const(*c), Expr::Var(i)]))
                .collect(),
        )
    }

    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Const(_) | Expr::Var(_) => Vec::new(),
            Expr::Sum(cs) | Expr::Product(cs) => cs.iter().collect(),
            Expr::Pow(b, _) => vec![b],
            Expr::Neg(c) | Expr::Unary(_, c) => vec![c],
            Expr::Div(n, d) => vec![n, d],
        }
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Var(i) => Some(*i),
            _ => self.children().into_iter().filter_map(Expr::max_var).max(),
        }
    }

    pub fn node_count(&self) -> usize {
        1 + self.children().into_iter().map(Expr::node_count).sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        1 + self.children().into_iter().map(Expr::depth).max().unwrap_or(0)
    }

    /// Exact recursive evaluation.
    pub fn evaluate(&self, point: &[f64]) -> Result<f64, DomainError> {
        let value = match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => *point
                .get(*i)
                .ok_or_else(|| DomainError::new(DomainErrorKind::VariableOutOfRange, self))?,
            Expr::Sum(cs) => {
                let mut acc = 0.0;
                for c in cs {
                    acc += c.evaluate(point)?;
                }
                acc
            }
            Expr::Product(cs) => {
                let mut acc = 1.0;
                for c in cs {
                    acc *= c.evaluate(point)?;
                }
                acc
            }
            Expr::Pow(base, p) => {
                let b = base.evaluate(point)?;
                match integral_exponent(*p) {
                    Some(n) => {
                        if n < 0 && b == 0.0 {
                            return Err(DomainError::new(DomainErrorKind::DivisionByZero, self));
                        }
                        b.powi(n)
                    }
                    None => {
                        if b < 0.0 {
                            return Err(DomainError::new(DomainErrorKind::NegativeBaseRealExponent, self));
                        }
                        if b == 0.0 && *p < 0.0 {
                            return Err(DomainError::new(DomainErrorKind::DivisionByZero, self));
                        }
                        b.powf(*p)
                    }
                }
            }
            Expr::Neg(c) => -c.evaluate(point)?,
            Expr::Div(n, d) => {
                let num = n.evaluate(point)?;
                let den = d.evaluate(point)?;
                if den == 0.0 {
                    return Err(DomainError::new(DomainErrorKind::DivisionByZero, self));
                }
                num / den
            }
            Expr::Unary(f, c) => {
                let x = c.evaluate(point)?;
                f.apply(x).ok_or_else(|| {
                    let kind = match f {
                        Func::Log => DomainErrorKind::LogOfNonPositive,
                        _ => DomainErrorKind::SqrtOfNegative,
                    };
                    DomainError::new(kind, self)
                })?
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(DomainError::new(DomainErrorKind::NonFinite, self))
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn join(f: &mut fmt::Formatter<'_>, cs: &[Expr], sep: &str) -> fmt::Result {
            f.write_str("(")?;
            for (i, c) in cs.iter().enumerate() {
                if i > 0 {
                    f.write_str(sep)?;
                }
                write!(f, "{c}")?;
            }
            f.write_str(")")
        }
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(i) => write!(f, "x{i}"),
            Expr::Sum(cs) if cs.is_empty() => f.write_str("0"),
            Expr::Product(cs) if cs.is_empty() => f.write_str("1"),
            Expr::Sum(cs) => join(f, cs, " + "),
            Expr::Product(cs) => join(f, cs, "*"),
            Expr::Pow(b, p) => write!(f, "{b}^{p}"),
            Expr::Neg(c) => write!(f, "-{c}"),
            Expr::Div(n, d) => write!(f, "({n} / {d})"),
            Expr::Unary(func, c) => write!(f, "{}({c})", func.name()),
        }
    }
}

impl From<f64> for Expr {
    fn from(c: f64) -> Self {
        Expr::Const(c)
    }
}

impl Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::Sum(vec![self, rhs])
    }
}

impl Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::Sum(vec![self, Expr::Neg(Box::new(rhs))])
    }
}

impl Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::Product(vec![self, rhs])
    }
}

impl Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::Div(Box::new(self), Box::new(rhs))
    }
}

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code_block_quadratic() -> Expr {
        let w = [12.0, 45.0, 12.0, 22.0, 21.0];
        Expr::Sum(
            w.iter()
                .enumerate()
                .map(|(i, wi)| Expr::Const(*wi) * Expr::var(i).powi(2))
                .collect(),
        )
    }

    #[test]
    fn quadratic_body_at_ones() {
        assert_eq!(code_block_quadratic().evaluate(&[1.0; 5]).unwrap(), 112.0);
    }

    #[test]
    fn constant_ignores_point() {
        assert_eq!(Expr::Const(3.5).evaluate(&[]).unwrap(), 3.5);
        assert_eq!(Expr::Const(3.5).evaluate(&[1.0, -2.0]).unwrap(), 3.5);
    }

    #[test]
    fn symmetric_sum_is_zero() {
        let e = Expr::var(0) - Expr::var(0);
        assert_eq!(e.evaluate(&[7.2]).unwrap(), 0.0);
    }

    #[test]
    fn domain_errors_name_subexpression() {
        let inner = Expr::var(0).ln();
        let e = Expr::Const(1.0) + inner.clone();
        let err = e.evaluate(&[-1.0]).unwrap_err();
        assert_eq!(err.kind, DomainErrorKind::LogOfNonPositive);
        assert_eq!(err.expr, inner);

        let err = (Expr::Const(1.0) / Expr::var(0)).evaluate(&[0.0]).unwrap_err();
        assert_eq!(err.kind, DomainErrorKind::DivisionByZero);

        let err = Expr::var(0).sqrt().evaluate(&[-4.0]).unwrap_err();
        assert_eq!(err.kind, DomainErrorKind::SqrtOfNegative);
    }

    #[test]
    fn integer_powers_accept_negative_base() {
        assert_eq!(Expr::var(0).powi(3).evaluate(&[-2.0]).unwrap(), -8.0);
        let err = Expr::var(0).powf(0.5).evaluate(&[-2.0]).unwrap_err();
        assert_eq!(err.kind, DomainErrorKind::NegativeBaseRealExponent);
        assert_eq!(Expr::var(0).powf(0.5).evaluate(&[4.0]).unwrap(), 2.0);
    }

    #[test]
    fn display_is_readable() {
        let e = Expr::Const(2.0) * Expr::var(1).exp();
        assert_eq!(e.to_string(), "(2*exp(x1))");
    }
}

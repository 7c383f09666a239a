//! Constant folding and affine-form extraction.

use std::collections::BTreeMap;

use super::expr::Expr;

/// Folds constant subtrees and flattens nested sums and products.
///
/// The result is a fixed point: `fold(&fold(e)) == fold(e)`. Subtrees whose
/// constant value falls outside a function's domain are kept unevaluated so
/// the error surfaces at evaluation time.
pub fn fold(expr: &Expr) -> Expr {
    match expr {
        Expr::Const(_) | Expr::Var(_) => expr.clone(),
        Expr::Sum(cs) => {
            let mut terms = Vec::with_capacity(cs.len());
            let mut constant = 0.0;
            for c in cs {
                match fold(c) {
                    Expr::Const(k) => constant += k,
                    Expr::Sum(inner) => {
                        for t in inner {
                            match t {
                                Expr::Const(k) => constant += k,
                                t => terms.push(t),
                            }
                        }
                    }
                    t => terms.push(t),
                }
            }
            if constant != 0.0 {
                terms.push(Expr::Const(constant));
            }
            match terms.len() {
                0 => Expr::Const(0.0),
                1 => terms.pop().unwrap(),
                _ => Expr::Sum(terms),
            }
        }
        Expr::Product(cs) => {
            let mut factors = Vec::with_capacity(cs.len());
            let mut constant = 1.0;
            for c in cs {
                match fold(c) {
                    Expr::Const(k) => constant *= k,
                    Expr::Product(inner) => {
                        for t in inner {
                            match t {
                                Expr::Const(k) => constant *= k,
                                t => factors.push(t),
                            }
                        }
                    }
                    t => factors.push(t),
                }
            }
            if constant == 0.0 {
                return Expr::Const(0.0);
            }
            if factors.is_empty() {
                return Expr::Const(constant);
            }
            if constant != 1.0 {
                factors.insert(0, Expr::Const(constant));
            }
            if factors.len() == 1 {
                factors.pop().unwrap()
            } else {
                Expr::Product(factors)
            }
        }
        Expr::Pow(b, p) => {
            let base = fold(b);
            if *p == 1.0 {
                return base;
            }
            if *p == 0.0 {
                return Expr::Const(1.0);
            }
            if let Expr::Const(k) = base {
                if let Ok(v) = Expr::Pow(Box::new(Expr::Const(k)), *p).evaluate(&[]) {
                    return Expr::Const(v);
                }
            }
            Expr::Pow(Box::new(base), *p)
        }
        Expr::Neg(c) => match fold(c) {
            Expr::Const(k) => Expr::Const(-k),
            Expr::Neg(inner) => *inner,
            other => Expr::Neg(Box::new(other)),
        },
        Expr::Div(n, d) => {
            let num = fold(n);
            let den = fold(d);
            match (&num, &den) {
                (Expr::Const(a), Expr::Const(b)) if *b != 0.0 => Expr::Const(a / b),
                (_, Expr::Const(b)) if *b == 1.0 => num,
                (Expr::Const(a), _) if *a == 0.0 => Expr::Const(0.0),
                _ => Expr::Div(Box::new(num), Box::new(den)),
            }
        }
        Expr::Unary(f, c) => {
            let arg = fold(c);
            if let Expr::Const(k) = arg {
                if let Some(v) = f.apply(k).filter(|v| v.is_finite()) {
                    return Expr::Const(v);
                }
            }
            Expr::Unary(*f, Box::new(arg))
        }
    }
}

/// Exact affine form `Σ coeffs[j] x_j + constant`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearForm {
    /// Nonzero coefficients keyed by variable index.
    pub coeffs: BTreeMap<usize, f64>,
    pub constant: f64,
}

impl LinearForm {
    fn constant(c: f64) -> Self {
        LinearForm {
            coeffs: BTreeMap::new(),
            constant: c,
        }
    }

    pub fn coeff(&self, j: usize) -> f64 {
        self.coeffs.get(&j).copied().unwrap_or(0.0)
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn evaluate(&self, point: &[f64]) -> f64 {
        self.coeffs.iter().map(|(j, c)| c * point[*j]).sum::<f64>() + self.constant
    }

    fn scale(mut self, k: f64) -> Self {
        self.constant *= k;
        for c in self.coeffs.values_mut() {
            *c *= k;
        }
        self.coeffs.retain(|_, c| *c != 0.0);
        self
    }

    fn add(mut self, other: LinearForm) -> Self {
        self.constant += other.constant;
        for (j, c) in other.coeffs {
            *self.coeffs.entry(j).or_insert(0.0) += c;
        }
        self.coeffs.retain(|_, c| *c != 0.0);
        self
    }

    pub fn to_expr(&self) -> Expr {
        let mut terms: Vec<Expr> = self
            .coeffs
            .iter()
            .map(|(j, c)| Expr::Product(vec![Expr::Const(*c), Expr::Var(*j)]))
            .collect();
        if self.constant != 0.0 {
            terms.push(Expr::Const(self.constant));
        }
        fold(&Expr::Sum(terms))
    }
}

/// Result of [`detect_linear`].
#[derive(Debug, Clone, PartialEq)]
pub enum Linearity {
    Linear(LinearForm),
    Nonlinear,
}

impl Linearity {
    pub fn is_linear(&self) -> bool {
        matches!(self, Linearity::Linear(_))
    }

    pub fn into_form(self) -> Option<LinearForm> {
        match self {
            Linearity::Linear(f) => Some(f),
            Linearity::Nonlinear => None,
        }
    }
}

/// Decides whether `expr` is affine after constant folding.
pub fn detect_linear(expr: &Expr) -> Linearity {
    match affine(&fold(expr)) {
        Some(form) => Linearity::Linear(form),
        None => Linearity::Nonlinear,
    }
}

fn affine(expr: &Expr) -> Option<LinearForm> {
    match expr {
        Expr::Const(c) => Some(LinearForm::constant(*c)),
        Expr::Var(j) => {
            let mut form = LinearForm::default();
            form.coeffs.insert(*j, 1.0);
            Some(form)
        }
        Expr::Sum(cs) => cs
            .iter()
            .try_fold(LinearForm::default(), |acc, c| Some(acc.add(affine(c)?))),
        Expr::Product(cs) => {
            let mut scale = 1.0;
            let mut varying: Option<LinearForm> = None;
            for c in cs {
                let form = affine(c)?;
                if form.is_constant() {
                    scale *= form.constant;
                } else if varying.is_none() {
                    varying = Some(form);
                } else {
                    return None;
                }
            }
            Some(match varying {
                Some(form) => form.scale(scale),
                None => LinearForm::constant(scale),
            })
        }
        Expr::Neg(c) => Some(affine(c)?.scale(-1.0)),
        Expr::Div(n, d) => {
            let den = affine(d)?;
            if !den.is_constant() || den.constant == 0.0 {
                return None;
            }
            Some(affine(n)?.scale(1.0 / den.constant))
        }
        // Folding has already reduced constant bases and unit exponents.
        Expr::Pow(..) | Expr::Unary(..) => None,
    }
}

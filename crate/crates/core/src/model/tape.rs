//! Reverse-mode differentiation over a flattened expression tree.
//!
//! A [`Tape`] stores the tree in post-order so every operand precedes the
//! operation that consumes it. The forward sweep fills node values, the
//! reverse sweep walks the tape backwards pushing adjoints to operands.

use super::expr::{integral_exponent, DomainError, Expr, Func};

#[derive(Debug, Clone, PartialEq)]
enum Op {
    Const(f64),
    Var(usize),
    Sum { start: usize, len: usize },
    Product { start: usize, len: usize },
    Pow { base: usize, exponent: f64 },
    Neg(usize),
    Div(usize, usize),
    Unary(Func, usize),
}

/// A compiled, immutable expression ready for repeated evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Tape {
    ops: Vec<Op>,
    args: Vec<usize>,
    source: Expr,
}

/// Scratch buffers for one tape evaluation. Kept separate from [`Tape`] so
/// a tape can be shared between threads.
#[derive(Debug, Default, Clone)]
pub struct TapeWorkspace {
    values: Vec<f64>,
    adjoints: Vec<f64>,
    prefix: Vec<f64>,
}

impl Tape {
    pub fn compile(expr: &Expr) -> Tape {
        let mut tape = Tape {
            ops: Vec::with_capacity(expr.node_count()),
            args: Vec::new(),
            source: expr.clone(),
        };
        tape.push(expr);
        tape
    }

    fn push(&mut self, expr: &Expr) -> usize {
        let op = match expr {
            Expr::Const(c) => Op::Const(*c),
            Expr::Var(i) => Op::Var(*i),
            Expr::Sum(cs) | Expr::Product(cs) => {
                let ids: Vec<usize> = cs.iter().map(|c| self.push(c)).collect();
                let start = self.args.len();
                self.args.extend_from_slice(&ids);
                if matches!(expr, Expr::Sum(_)) {
                    Op::Sum { start, len: ids.len() }
                } else {
                    Op::Product { start, len: ids.len() }
                }
            }
            Expr::Pow(b, p) => Op::Pow {
                base: self.push(b),
                exponent: *p,
            },
            Expr::Neg(c) => Op::Neg(self.push(c)),
            Expr::Div(n, d) => {
                let n = self.push(n);
                let d = self.push(d);
                Op::Div(n, d)
            }
            Expr::Unary(f, c) => Op::Unary(*f, self.push(c)),
        };
        self.ops.push(op);
        self.ops.len() - 1
    }

    pub fn source(&self) -> &Expr {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Forward sweep. Returns `None` on a domain violation; callers that need
    /// the offending subexpression re-evaluate through [`Expr::evaluate`].
    fn forward(&self, point: &[f64], ws: &mut TapeWorkspace) -> Option<f64> {
        let vals = &mut ws.values;
        vals.clear();
        for op in &self.ops {
            let v = match *op {
                Op::Const(c) => c,
                Op::Var(i) => *point.get(i)?,
                Op::Sum { start, len } => self.args[start..start + len].iter().map(|&a| vals[a]).sum(),
                Op::Product { start, len } => self.args[start..start + len].iter().map(|&a| vals[a]).product(),
                Op::Pow { base, exponent } => {
                    let b = vals[base];
                    match integral_exponent(exponent) {
                        Some(n) if n < 0 && b == 0.0 => return None,
                        Some(n) => b.powi(n),
                        None if b < 0.0 || (b == 0.0 && exponent < 0.0) => return None,
                        None => b.powf(exponent),
                    }
                }
                Op::Neg(a) => -vals[a],
                Op::Div(n, d) => {
                    if vals[d] == 0.0 {
                        return None;
                    }
                    vals[n] / vals[d]
                }
                Op::Unary(f, a) => f.apply(vals[a])?,
            };
            if !v.is_finite() {
                return None;
            }
            vals.push(v);
        }
        vals.last().copied()
    }

    fn domain_error(&self, point: &[f64]) -> DomainError {
        match self.source.evaluate(point) {
            Err(e) => e,
            // The two evaluation routes only disagree on rounding at the
            // edge of finiteness; report the whole expression.
            Ok(_) => DomainError {
                kind: super::expr::DomainErrorKind::NonFinite,
                expr: self.source.clone(),
            },
        }
    }

    pub fn value(&self, point: &[f64], ws: &mut TapeWorkspace) -> Result<f64, DomainError> {
        self.forward(point, ws).ok_or_else(|| self.domain_error(point))
    }

    /// Evaluates the expression and adds `scale * gradient` into `grad`.
    pub fn accumulate_gradient(
        &self,
        point: &[f64],
        scale: f64,
        grad: &mut [f64],
        ws: &mut TapeWorkspace,
    ) -> Result<f64, DomainError> {
        let value = self.value(point, ws)?;
        if scale == 0.0 {
            return Ok(value);
        }
        let n = self.ops.len();
        ws.adjoints.clear();
        ws.adjoints.resize(n, 0.0);
        ws.adjoints[n - 1] = scale;
        let vals = &ws.values;
        let adj = &mut ws.adjoints;
        for k in (0..n).rev() {
            let a = adj[k];
            if a == 0.0 {
                continue;
            }
            match self.ops[k] {
                Op::Const(_) => {}
                Op::Var(i) => grad[i] += a,
                Op::Sum { start, len } => {
                    for &c in &self.args[start..start + len] {
                        adj[c] += a;
                    }
                }
                Op::Product { start, len } => {
                    // Prefix/suffix products keep partials exact when a factor is zero.
                    let children = &self.args[start..start + len];
                    let prefix = &mut ws.prefix;
                    prefix.clear();
                    let mut acc = 1.0;
                    for &c in children {
                        prefix.push(acc);
                        acc *= vals[c];
                    }
                    let mut suffix = 1.0;
                    for (pos, &c) in children.iter().enumerate().rev() {
                        adj[c] += a * prefix[pos] * suffix;
                        suffix *= vals[c];
                    }
                }
                Op::Pow { base, exponent } => {
                    let b = vals[base];
                    let d = match integral_exponent(exponent) {
                        Some(0) => 0.0,
                        Some(m) => m as f64 * b.powi(m - 1),
                        None => exponent * b.powf(exponent - 1.0),
                    };
                    adj[base] += a * d;
                }
                Op::Neg(c) => adj[c] -= a,
                Op::Div(num, den) => {
                    let d = vals[den];
                    adj[num] += a / d;
                    adj[den] -= a * vals[num] / (d * d);
                }
                Op::Unary(f, c) => adj[c] += a * f.derivative(vals[c], vals[k]),
            }
        }
        Ok(value)
    }
}

/// Gradient of `expr` at `point` with respect to all `var_count` variables.
pub fn gradient(expr: &Expr, point: &[f64], var_count: usize) -> Result<Vec<f64>, DomainError> {
    let tape = Tape::compile(expr);
    let mut grad = vec![0.0; var_count];
    let mut ws = TapeWorkspace::default();
    tape.accumulate_gradient(point, 1.0, &mut grad, &mut ws)?;
    Ok(grad)
}

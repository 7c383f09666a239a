//! Problem representation: expression trees, derivatives and the canonical
//! mixed-integer model consumed by the solver.

mod expr;
mod fold;
mod tape;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use expr::{DomainError, DomainErrorKind, Expr, Func};
pub use fold::{detect_linear, fold, LinearForm, Linearity};
pub use tape::{gradient, Tape, TapeWorkspace};

/// Tolerance used when checking integrality of a point.
pub const INTEGRALITY_TOL: f64 = 1e-6;
/// Tolerance used when checking constraint satisfaction.
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    #[serde(rename = "min")]
    Minimize,
    #[serde(rename = "max")]
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Eq => "==",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub integer: bool,
}

impl Variable {
    pub fn continuous(name: impl Into<String>, lower: f64, upper: f64) -> Self {
        Variable {
            name: name.into(),
            lower,
            upper,
            integer: false,
        }
    }

    pub fn integer(name: impl Into<String>, lower: f64, upper: f64) -> Self {
        Variable {
            name: name.into(),
            lower,
            upper,
            integer: true,
        }
    }
}

/// `expr <relation> rhs` before canonicalization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawConstraint {
    pub expr: Expr,
    pub relation: Relation,
    pub rhs: f64,
}

/// A declarative model with arbitrary sense and relations.
#[derive(Debug, Clone, PartialEq)]
pub struct RawModel {
    pub variables: Vec<Variable>,
    pub sense: Sense,
    pub objective: Expr,
    pub constraints: Vec<RawConstraint>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("model declares no variables")]
    NoVariables,
    #[error("variable `{name}` has inconsistent bounds [{lower}, {upper}]")]
    InconsistentBounds { name: String, lower: f64, upper: f64 },
    #[error("integer variable `{name}` must have finite bounds")]
    UnboundedInteger { name: String },
    #[error("variable name `{0}` is declared twice")]
    DuplicateName(String),
    #[error("{location} references variable index {index} but the model has {count} variables")]
    BadVariableIndex {
        location: String,
        index: usize,
        count: usize,
    },
    #[error("{location} has a non-finite right-hand side")]
    NonFiniteRhs { location: String },
}

/// A canonical constraint `expr <= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    expr: Expr,
    tape: Tape,
    linear: Option<LinearForm>,
}

impl Constraint {
    fn new(expr: Expr) -> Self {
        let linear = detect_linear(&expr).into_form();
        Constraint {
            tape: Tape::compile(&expr),
            expr,
            linear,
        }
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn linear(&self) -> Option<&LinearForm> {
        self.linear.as_ref()
    }

    pub fn is_linear(&self) -> bool {
        self.linear.is_some()
    }
}

/// Canonical MINLP: minimize `objective` subject to `g(x) <= 0` for every
/// constraint and `lower <= x <= upper`, with integrality on a subset of the
/// variables. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    variables: Vec<Variable>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    integers: Vec<usize>,
    objective: Expr,
    objective_tape: Tape,
    sense: Sense,
    constraints: Vec<Constraint>,
}

fn check_indices(expr: &Expr, location: &str, count: usize) -> Result<(), ModelError> {
    match expr.max_var() {
        Some(index) if index >= count => Err(ModelError::BadVariableIndex {
            location: location.to_string(),
            index,
            count,
        }),
        _ => Ok(()),
    }
}

/// Normalizes a declarative model into canonical minimize / `<= 0` form.
///
/// Maximization is turned into minimization of the negated objective,
/// `a >= b` becomes `b - a <= 0`, and `a == b` is split into two
/// inequalities. All expressions are constant folded.
pub fn canonicalize(raw: &RawModel) -> Result<Model, ModelError> {
    let count = raw.variables.len();
    if count == 0 {
        return Err(ModelError::NoVariables);
    }
    let mut names = HashSet::with_capacity(count);
    for v in &raw.variables {
        if !names.insert(v.name.as_str()) {
            return Err(ModelError::DuplicateName(v.name.clone()));
        }
        let bad = v.lower.is_nan()
            || v.upper.is_nan()
            || v.lower > v.upper
            || v.lower == f64::INFINITY
            || v.upper == f64::NEG_INFINITY;
        if bad {
            return Err(ModelError::InconsistentBounds {
                name: v.name.clone(),
                lower: v.lower,
                upper: v.upper,
            });
        }
        if v.integer && !(v.lower.is_finite() && v.upper.is_finite()) {
            return Err(ModelError::UnboundedInteger { name: v.name.clone() });
        }
    }

    check_indices(&raw.objective, "objective", count)?;
    let objective = match raw.sense {
        Sense::Minimize => fold(&raw.objective),
        Sense::Maximize => fold(&Expr::Neg(Box::new(raw.objective.clone()))),
    };

    let mut constraints = Vec::with_capacity(raw.constraints.len());
    for (i, c) in raw.constraints.iter().enumerate() {
        let location = format!("constraint {i}");
        check_indices(&c.expr, &location, count)?;
        if !c.rhs.is_finite() {
            return Err(ModelError::NonFiniteRhs { location });
        }
        let le = || fold(&Expr::Sum(vec![c.expr.clone(), Expr::Const(-c.rhs)]));
        let ge = || {
            fold(&Expr::Sum(vec![
                Expr::Const(c.rhs),
                Expr::Neg(Box::new(c.expr.clone())),
            ]))
        };
        match c.relation {
            Relation::Le => constraints.push(Constraint::new(le())),
            Relation::Ge => constraints.push(Constraint::new(ge())),
            Relation::Eq => {
                constraints.push(Constraint::new(le()));
                constraints.push(Constraint::new(ge()));
            }
        }
    }

    Ok(Model::assemble(
        raw.variables.clone(),
        objective,
        raw.sense,
        constraints,
    ))
}

impl Model {
    fn assemble(variables: Vec<Variable>, objective: Expr, sense: Sense, constraints: Vec<Constraint>) -> Model {
        Model {
            lower: variables.iter().map(|v| v.lower).collect(),
            upper: variables.iter().map(|v| v.upper).collect(),
            integers: (0..variables.len()).filter(|&j| variables[j].integer).collect(),
            objective_tape: Tape::compile(&objective),
            objective,
            sense,
            variables,
            constraints,
        }
    }

    pub fn var_count(&self) -> usize {
        self.variables.len()
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn name(&self, j: usize) -> &str {
        &self.variables[j].name
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn is_integer(&self, j: usize) -> bool {
        self.variables[j].integer
    }

    /// Indices of integer variables in increasing order.
    pub fn integers(&self) -> &[usize] {
        &self.integers
    }

    /// The objective in canonical (minimize) sense.
    pub fn objective(&self) -> &Expr {
        &self.objective
    }

    pub fn objective_tape(&self) -> &Tape {
        &self.objective_tape
    }

    /// The sense the model was declared with.
    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    /// Converts a canonical objective value into the declared sense.
    pub fn to_original_sense(&self, canonical: f64) -> f64 {
        match self.sense {
            Sense::Minimize => canonical,
            Sense::Maximize => -canonical,
        }
    }

    /// Canonical objective value at `point`.
    pub fn objective_value(&self, point: &[f64]) -> Result<f64, DomainError> {
        self.objective.evaluate(point)
    }

    /// Largest constraint violation `max(0, g_c(x))` over all constraints.
    /// Domain errors count as infinite violation.
    pub fn max_violation(&self, point: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| match c.expr.evaluate(point) {
                Ok(v) => v.max(0.0),
                Err(_) => f64::INFINITY,
            })
            .fold(0.0, f64::max)
    }

    /// `Σ max(0, g_c(x))²`, the squared distance-to-feasibility measure.
    pub fn infeasibility(&self, point: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| match c.expr.evaluate(point) {
                Ok(v) => v.max(0.0).powi(2),
                Err(_) => f64::INFINITY,
            })
            .sum()
    }

    pub fn max_bound_violation(&self, point: &[f64]) -> f64 {
        point
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(x, (l, u))| (l - x).max(x - u).max(0.0))
            .fold(0.0, f64::max)
    }

    pub fn max_integrality_violation(&self, point: &[f64]) -> f64 {
        self.integers
            .iter()
            .map(|&j| (point[j] - point[j].round()).abs())
            .fold(0.0, f64::max)
    }

    /// Integral within [`INTEGRALITY_TOL`], constraints within
    /// [`FEASIBILITY_TOL`] and bounds within the same tolerance.
    pub fn is_feasible_solution(&self, point: &[f64]) -> bool {
        point.len() == self.var_count()
            && point.iter().all(|x| x.is_finite())
            && self.max_integrality_violation(point) <= INTEGRALITY_TOL
            && self.max_violation(point) <= FEASIBILITY_TOL
            && self.max_bound_violation(point) <= FEASIBILITY_TOL
    }

    /// The same model with a different canonical objective.
    pub fn with_objective(&self, objective: Expr) -> Model {
        Model::assemble(
            self.variables.clone(),
            fold(&objective),
            Sense::Minimize,
            self.constraints.clone(),
        )
    }

    /// The declarative model this canonical model represents; canonicalizing
    /// it again reproduces `self`.
    pub fn to_raw(&self) -> RawModel {
        let objective = match self.sense {
            Sense::Minimize => self.objective.clone(),
            Sense::Maximize => fold(&Expr::Neg(Box::new(self.objective.clone()))),
        };
        RawModel {
            variables: self.variables.clone(),
            sense: self.sense,
            objective,
            constraints: self
                .constraints
                .iter()
                .map(|c| RawConstraint {
                    expr: c.expr.clone(),
                    relation: Relation::Le,
                    rhs: 0.0,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub const VALUES: [f64; 5] = [10.0, 20.0, 12.0, 23.0, 42.0];
    pub const WEIGHTS: [f64; 5] = [12.0, 45.0, 12.0, 22.0, 21.0];

    /// Five integer variables in [0, 10]: maximize v·x subject to Σx <= 6
    /// and Σ w x² <= 300.
    pub fn code_block_raw() -> RawModel {
        RawModel {
            variables: (1..=5).map(|i| Variable::integer(format!("x{i}"), 0.0, 10.0)).collect(),
            sense: Sense::Maximize,
            objective: Expr::dot(&VALUES),
            constraints: vec![
                RawConstraint {
                    expr: Expr::Sum((0..5).map(Expr::var).collect()),
                    relation: Relation::Le,
                    rhs: 6.0,
                },
                RawConstraint {
                    expr: Expr::Sum((0..5).map(|i| Expr::Const(WEIGHTS[i]) * Expr::var(i).powi(2)).collect()),
                    relation: Relation::Le,
                    rhs: 300.0,
                },
            ],
        }
    }

    pub fn code_block() -> Model {
        canonicalize(&code_block_raw()).unwrap()
    }
}

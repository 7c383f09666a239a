//! JSON instance format.
//!
//! ```json
//! {
//!   "variables": [{"name": "x1", "lb": 0, "ub": 10, "integer": true}],
//!   "objective": {"sense": "max", "expr": ["*", 10, ["var", "x1"]]},
//!   "constraints": [{"expr": ["^", ["var", "x1"], 2], "op": "<=", "rhs": 30}]
//! }
//! ```
//!
//! Expressions are prefix arrays: `["+", a, b, ...]`, `["*", a, b, ...]`,
//! `["-", a]`, `["-", a, b]`, `["/", a, b]`, `["^", a, p]` with a numeric
//! exponent, `[f, a]` for `f` in exp, log, sin, cos, sqrt, and the leaves
//! `["var", name]` and numbers. Bounds may be numbers, `null` (unbounded)
//! or the strings `"inf"` / `"-inf"`.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::extfloat;
use crate::model::{canonicalize, Expr, Func, Model, ModelError, RawConstraint, RawModel, Relation, Sense, Variable};

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid `{field}`: {reason}")]
    Validation { field: String, reason: String },
}

impl InstanceError {
    fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        InstanceError::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl From<ModelError> for InstanceError {
    fn from(e: ModelError) -> Self {
        let field = match &e {
            ModelError::NoVariables => "variables".to_string(),
            ModelError::InconsistentBounds { name, .. }
            | ModelError::UnboundedInteger { name }
            | ModelError::DuplicateName(name) => format!("variables.{name}"),
            ModelError::BadVariableIndex { location, .. } | ModelError::NonFiniteRhs { location } => location.clone(),
        };
        InstanceError::invalid(field, e.to_string())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VariableDecl {
    name: String,
    #[serde(default)]
    lb: Value,
    #[serde(default)]
    ub: Value,
    #[serde(default)]
    integer: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectiveDecl {
    sense: Sense,
    expr: Value,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstraintDecl {
    expr: Value,
    op: String,
    #[serde(with = "extfloat")]
    rhs: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    variables: Vec<VariableDecl>,
    objective: ObjectiveDecl,
    #[serde(default)]
    constraints: Vec<ConstraintDecl>,
}

fn parse_bound(value: &Value, default: f64, field: &str) -> Result<f64, InstanceError> {
    match value {
        Value::Null => Ok(default),
        Value::Number(n) => n
            .as_f64()
            .ok_or_else(|| InstanceError::invalid(field, "number out of range")),
        Value::String(s) => match extfloat::from_str(s) {
            Some(v) if !v.is_nan() => Ok(v),
            _ => Err(InstanceError::invalid(field, format!("`{s}` is not a bound"))),
        },
        _ => Err(InstanceError::invalid(
            field,
            "expected a number, null, \"inf\" or \"-inf\"",
        )),
    }
}

fn parse_expr(value: &Value, names: &HashMap<&str, usize>, field: &str) -> Result<Expr, InstanceError> {
    let items = match value {
        Value::Number(n) => {
            return n
                .as_f64()
                .map(Expr::Const)
                .ok_or_else(|| InstanceError::invalid(field, "number out of range"))
        }
        Value::Array(items) if !items.is_empty() => items,
        _ => return Err(InstanceError::invalid(field, "expected a number or a non-empty array")),
    };
    let Some(op) = items[0].as_str() else {
        return Err(InstanceError::invalid(field, "operator must be a string"));
    };
    let args = &items[1..];
    let arity = |n: usize| {
        if args.len() == n {
            Ok(())
        } else {
            Err(InstanceError::invalid(
                field,
                format!("`{op}` takes {n} argument(s), got {}", args.len()),
            ))
        }
    };
    let sub = |i: usize| parse_expr(&args[i], names, &format!("{field}[{}]", i + 1));
    let all = || (0..args.len()).map(sub).collect::<Result<Vec<_>, _>>();
    match op {
        "var" => {
            arity(1)?;
            let name = args[0]
                .as_str()
                .ok_or_else(|| InstanceError::invalid(field, "variable name must be a string"))?;
            names
                .get(name)
                .map(|&j| Expr::Var(j))
                .ok_or_else(|| InstanceError::invalid(field, format!("undeclared variable `{name}`")))
        }
        "+" | "*" => {
            if args.is_empty() {
                return Err(InstanceError::invalid(
                    field,
                    format!("`{op}` needs at least one argument"),
                ));
            }
            let terms = all()?;
            Ok(if op == "+" {
                Expr::Sum(terms)
            } else {
                Expr::Product(terms)
            })
        }
        "-" => match args.len() {
            1 => Ok(Expr::Neg(Box::new(sub(0)?))),
            2 => Ok(sub(0)? - sub(1)?),
            n => Err(InstanceError::invalid(
                field,
                format!("`-` takes 1 or 2 arguments, got {n}"),
            )),
        },
        "/" => {
            arity(2)?;
            Ok(Expr::Div(Box::new(sub(0)?), Box::new(sub(1)?)))
        }
        "^" => {
            arity(2)?;
            let p = args[1]
                .as_f64()
                .ok_or_else(|| InstanceError::invalid(format!("{field}[2]"), "exponent must be a number"))?;
            Ok(Expr::Pow(Box::new(sub(0)?), p))
        }
        name => match Func::from_name(name) {
            Some(f) => {
                arity(1)?;
                Ok(Expr::Unary(f, Box::new(sub(0)?)))
            }
            None => Err(InstanceError::invalid(field, format!("unknown operator `{name}`"))),
        },
    }
}

/// Parses an instance into its declarative form.
pub fn parse_raw(text: &str) -> Result<RawModel, InstanceError> {
    let file: InstanceFile = serde_json::from_str(text).map_err(|e| InstanceError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut names = HashMap::new();
    let mut variables = Vec::with_capacity(file.variables.len());
    for (i, v) in file.variables.iter().enumerate() {
        let field = format!("variables[{i}]");
        if names.insert(v.name.as_str(), i).is_some() {
            return Err(InstanceError::invalid(
                format!("{field}.name"),
                format!("duplicate name `{}`", v.name),
            ));
        }
        variables.push(Variable {
            name: v.name.clone(),
            lower: parse_bound(&v.lb, f64::NEG_INFINITY, &format!("{field}.lb"))?,
            upper: parse_bound(&v.ub, f64::INFINITY, &format!("{field}.ub"))?,
            integer: v.integer,
        });
    }
    let objective = parse_expr(&file.objective.expr, &names, "objective.expr")?;
    let constraints = file
        .constraints
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let relation = match c.op.as_str() {
                "<=" => Relation::Le,
                ">=" => Relation::Ge,
                "==" => Relation::Eq,
                other => {
                    return Err(InstanceError::invalid(
                        format!("constraints[{i}].op"),
                        format!("unknown relation `{other}`"),
                    ))
                }
            };
            Ok(RawConstraint {
                expr: parse_expr(&c.expr, &names, &format!("constraints[{i}].expr"))?,
                relation,
                rhs: c.rhs,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RawModel {
        variables,
        sense: file.objective.sense,
        objective,
        constraints,
    })
}

/// Parses and canonicalizes an instance. Variables keep declaration order.
pub fn parse_instance(text: &str) -> Result<Model, InstanceError> {
    Ok(canonicalize(&parse_raw(text)?)?)
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<Model, InstanceError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| InstanceError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_instance(&text)
}

fn number(v: f64) -> Value {
    match serde_json::Number::from_f64(v) {
        Some(n) => Value::Number(n),
        None => Value::String(extfloat::to_string(v).unwrap_or("nan").to_string()),
    }
}

fn expr_json(expr: &Expr, vars: &[Variable]) -> Value {
    let list = |op: &str, items: &[Expr]| {
        let mut out = vec![json!(op)];
        out.extend(items.iter().map(|e| expr_json(e, vars)));
        Value::Array(out)
    };
    match expr {
        Expr::Const(c) => number(*c),
        Expr::Var(j) => json!(["var", vars[*j].name]),
        Expr::Sum(items) => list("+", items),
        Expr::Product(items) => list("*", items),
        Expr::Pow(base, p) => json!(["^", expr_json(base, vars), number(*p)]),
        Expr::Neg(a) => json!(["-", expr_json(a, vars)]),
        Expr::Div(a, b) => json!(["/", expr_json(a, vars), expr_json(b, vars)]),
        Expr::Unary(f, a) => json!([f.name(), expr_json(a, vars)]),
    }
}

fn bound_json(v: f64) -> Value {
    if v.is_finite() {
        number(v)
    } else {
        Value::Null
    }
}

/// Serializes a declarative model; [`parse_raw`] reads it back unchanged.
pub fn write_raw(raw: &RawModel) -> String {
    let file = InstanceFile {
        variables: raw
            .variables
            .iter()
            .map(|v| VariableDecl {
                name: v.name.clone(),
                lb: bound_json(v.lower),
                ub: bound_json(v.upper),
                integer: v.integer,
            })
            .collect(),
        objective: ObjectiveDecl {
            sense: raw.sense,
            expr: expr_json(&raw.objective, &raw.variables),
        },
        constraints: raw
            .constraints
            .iter()
            .map(|c| ConstraintDecl {
                expr: expr_json(&c.expr, &raw.variables),
                op: c.relation.symbol().to_string(),
                rhs: c.rhs,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("instance serializes")
}

/// Serializes a canonical model in its original sense with `<= 0` rows.
pub fn write_instance(model: &Model) -> String {
    write_raw(&model.to_raw())
}

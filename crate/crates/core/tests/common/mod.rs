//! Shared helpers for integration tests: the bundled corpus and a brute-force
//! oracle that reads instance files directly, independent of the solver's
//! own expression code.

#![allow(dead_code)]

pub mod exprs;

use std::path::PathBuf;

use serde_json::Value;

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus")
}

pub fn corpus_path(name: &str) -> PathBuf {
    corpus_dir().join(format!("{name}.json"))
}

/// Pure-integer convex instances with at most 6 variables and 11 values each.
pub const ORACLE_SUITE: [&str; 13] = [
    "ball_linear",
    "ball_slack",
    "codeblock1",
    "correlated_quad",
    "coupled_quad",
    "exp_cost",
    "log_utility",
    "portfolio",
    "quad_target",
    "reciprocal",
    "six_targets",
    "sqrt_value",
    "wide_ball",
];

/// The two instances with the most lattice points and nodes.
pub const HARDEST: [&str; 2] = ["wide_ball", "correlated_quad"];

pub fn read(name: &str) -> Value {
    let text = std::fs::read_to_string(corpus_path(name)).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// Expression tree with variables resolved to positions.
enum Term {
    Num(f64),
    Var(usize),
    Op(String, Vec<Term>),
}

fn compile(e: &Value, names: &[String]) -> Term {
    if let Some(x) = e.as_f64() {
        return Term::Num(x);
    }
    let items = e.as_array().unwrap();
    let op = items[0].as_str().unwrap();
    if op == "var" {
        let name = items[1].as_str().unwrap();
        return Term::Var(names.iter().position(|n| n == name).unwrap());
    }
    Term::Op(op.to_string(), items[1..].iter().map(|a| compile(a, names)).collect())
}

fn eval(t: &Term, x: &[f64]) -> f64 {
    let (op, args) = match t {
        Term::Num(v) => return *v,
        Term::Var(j) => return x[*j],
        Term::Op(op, args) => (op.as_str(), args),
    };
    let arg = |i: usize| eval(&args[i], x);
    match op {
        "+" => args.iter().map(|a| eval(a, x)).sum(),
        "*" => args.iter().map(|a| eval(a, x)).product(),
        "-" if args.len() == 1 => -arg(0),
        "-" => arg(0) - arg(1),
        "/" => arg(0) / arg(1),
        "^" => arg(0).powf(arg(1)),
        "exp" => arg(0).exp(),
        "log" => arg(0).ln(),
        "sin" => arg(0).sin(),
        "cos" => arg(0).cos(),
        "sqrt" => arg(0).sqrt(),
        _ => panic!("unknown operator {op}"),
    }
}

fn names(instance: &Value) -> Vec<String> {
    instance["variables"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["name"].as_str().unwrap().to_string())
        .collect()
}

/// Optimum found by enumerating every integer point: (objective in the
/// declared sense, point in declaration order). `None` if no point is
/// feasible.
pub fn enumerate(instance: &Value) -> Option<(f64, Vec<f64>)> {
    let vars = instance["variables"].as_array().unwrap();
    let names = names(instance);
    let ranges: Vec<(i64, i64)> = vars
        .iter()
        .map(|v| {
            assert!(v["integer"].as_bool().unwrap(), "oracle needs pure-integer instances");
            (
                v["lb"].as_f64().unwrap().ceil() as i64,
                v["ub"].as_f64().unwrap().floor() as i64,
            )
        })
        .collect();
    let maximize = instance["objective"]["sense"] == "max";
    let objective = compile(&instance["objective"]["expr"], &names);
    let constraints: Vec<(Term, String, f64)> = instance["constraints"]
        .as_array()
        .cloned()
        .unwrap_or_default()
        .iter()
        .map(|c| {
            (
                compile(&c["expr"], &names),
                c["op"].as_str().unwrap().to_string(),
                c["rhs"].as_f64().unwrap(),
            )
        })
        .collect();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut point: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    if ranges.iter().any(|(l, u)| l > u) {
        return None;
    }
    loop {
        let x: Vec<f64> = point.iter().map(|&v| v as f64).collect();
        let feasible = constraints.iter().all(|(expr, op, rhs)| {
            let (lhs, rhs) = (eval(expr, &x), *rhs);
            match op.as_str() {
                "<=" => lhs <= rhs + 1e-9,
                ">=" => lhs >= rhs - 1e-9,
                _ => (lhs - rhs).abs() <= 1e-9,
            }
        });
        if feasible {
            let obj = eval(&objective, &x);
            let better = match &best {
                None => true,
                Some((b, _)) => {
                    if maximize {
                        obj > *b
                    } else {
                        obj < *b
                    }
                }
            };
            if better {
                best = Some((obj, x));
            }
        }
        // Odometer increment.
        let mut k = 0;
        loop {
            if k == point.len() {
                return best;
            }
            if point[k] < ranges[k].1 {
                point[k] += 1;
                break;
            }
            point[k] = ranges[k].0;
            k += 1;
        }
    }
}

/// Objective of `point` evaluated straight from the instance file.
pub fn objective_at(instance: &Value, point: &[f64]) -> f64 {
    eval(&compile(&instance["objective"]["expr"], &names(instance)), point)
}

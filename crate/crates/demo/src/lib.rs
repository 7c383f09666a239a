//! Browser bindings: solve an instance, inspect a point, compare strategies.
//! Everything runs single-threaded since wasm has no threads here.

use nlbb::engine::{solve, BranchRecord, BranchingStrategy, NodeEvent, PumpMode, SolverOptions, Traversal};
use nlbb::io::{parse_instance, ResultFile};
use nlbb::model::{gradient, Model, Sense};
use serde::de::DeserializeOwned;
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn parse_enum<T: DeserializeOwned>(field: &str, value: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(value.into())).map_err(|_| format!("unknown {field} `{value}`"))
}

fn load(instance: &str) -> Result<Model, String> {
    parse_instance(instance).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct SolveReport {
    result: ResultFile,
    branches: Vec<BranchRecord>,
    trace: Vec<NodeEvent>,
}

/// Solves `instance` (instance-file JSON) and returns the result file with
/// the branching log and node trace.
pub fn solve_json(
    instance: &str,
    branching: &str,
    traversal: &str,
    pump: &str,
    time_limit: f64,
) -> Result<String, String> {
    let model = load(instance)?;
    let options = SolverOptions {
        branching: parse_enum("branching", branching)?,
        traversal: parse_enum("traversal", traversal)?,
        pump: parse_enum("pump", pump)?,
        time_limit,
        trace: true,
        ..SolverOptions::default()
    };
    options.validate().map_err(|e| e.to_string())?;
    let r = solve(&model, &options);
    let report = SolveReport {
        result: ResultFile::new(&model, &r, &options),
        branches: r.branch_log,
        trace: r.trace,
    };
    Ok(serde_json::to_string(&report).unwrap())
}

#[derive(Serialize)]
struct PointReport {
    objective: f64,
    gradient: Vec<f64>,
    max_violation: f64,
    max_integrality_violation: f64,
    feasible: bool,
}

/// Objective value and gradient in the instance's sense, plus feasibility,
/// at `point` (a JSON array in declaration order).
pub fn inspect_json(instance: &str, point: &str) -> Result<String, String> {
    let model = load(instance)?;
    let x: Vec<f64> = serde_json::from_str(point).map_err(|e| format!("bad point: {e}"))?;
    if x.len() != model.var_count() {
        return Err(format!(
            "point has {} values, model has {} variables",
            x.len(),
            model.var_count()
        ));
    }
    let value = model.objective_value(&x).map_err(|e| e.to_string())?;
    let mut g = gradient(model.objective(), &x, x.len()).map_err(|e| e.to_string())?;
    if model.sense() == Sense::Maximize {
        g.iter_mut().for_each(|v| *v = -*v);
    }
    let report = PointReport {
        objective: model.to_original_sense(value),
        gradient: g,
        max_violation: model.max_violation(&x).max(model.max_bound_violation(&x)),
        max_integrality_violation: model.max_integrality_violation(&x),
        feasible: model.is_feasible_solution(&x),
    };
    Ok(serde_json::to_string(&report).unwrap())
}

#[derive(Serialize)]
struct ComparisonRow {
    branching: BranchingStrategy,
    traversal: Traversal,
    status: String,
    objective: Option<f64>,
    nodes: usize,
    milliseconds: f64,
}

/// Every branching strategy under both traversals, without the pump.
pub fn compare_json(instance: &str, time_limit: f64) -> Result<String, String> {
    let model = load(instance)?;
    let mut rows = Vec::new();
    for branching in BranchingStrategy::ALL {
        for traversal in Traversal::ALL {
            let options = SolverOptions {
                branching,
                traversal,
                pump: PumpMode::Off,
                time_limit,
                ..SolverOptions::default()
            };
            options.validate().map_err(|e| e.to_string())?;
            let r = solve(&model, &options);
            rows.push(ComparisonRow {
                branching,
                traversal,
                status: format!("{:?}", r.status),
                objective: r.objective(),
                nodes: r.nodes,
                milliseconds: r.wall_time * 1e3,
            });
        }
    }
    Ok(serde_json::to_string(&rows).unwrap())
}

#[wasm_bindgen(js_name = solveInstance)]
pub fn solve_instance(
    instance: &str,
    branching: &str,
    traversal: &str,
    pump: &str,
    time_limit: f64,
) -> Result<String, JsError> {
    solve_json(instance, branching, traversal, pump, time_limit).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = inspectPoint)]
pub fn inspect_point(instance: &str, point: &str) -> Result<String, JsError> {
    inspect_json(instance, point).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = compareStrategies)]
pub fn compare_strategies(instance: &str, time_limit: f64) -> Result<String, JsError> {
    compare_json(instance, time_limit).map_err(|e| JsError::new(&e))
}

//! Solve result files.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::engine::{PumpMode, SolveResult, SolveStatus, SolverOptions};
use crate::extfloat;
use crate::model::Model;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpOutcome {
    pub mode: PumpMode,
    pub found: bool,
    /// Objective of the pump's point in the model's sense.
    pub objective: Option<f64>,
    pub iterations: usize,
    pub projections: usize,
    pub cycles: usize,
    pub seconds: f64,
}

/// Everything needed to inspect or reproduce a solve. Objective and bound
/// are in the model's declared sense.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultFile {
    pub status: SolveStatus,
    pub objective: Option<f64>,
    /// Incumbent values by variable name, in declaration order.
    pub assignment: Option<IndexMap<String, f64>>,
    #[serde(with = "extfloat")]
    pub best_bound: f64,
    #[serde(with = "extfloat")]
    pub gap: f64,
    pub nodes: usize,
    pub restarts: usize,
    pub relaxation_failures: usize,
    pub pump: Option<PumpOutcome>,
    pub wall_seconds: f64,
    pub options: SolverOptions,
}

impl ResultFile {
    pub fn new(model: &Model, result: &SolveResult, options: &SolverOptions) -> Self {
        let assignment = result.point().map(|p| {
            model
                .variables()
                .iter()
                .zip(p)
                .map(|(v, x)| (v.name.clone(), *x))
                .collect()
        });
        let pump = result.pump.as_ref().map(|r| PumpOutcome {
            mode: r.mode,
            found: r.found(),
            objective: r.incumbent.as_ref().map(|i| model.to_original_sense(i.objective)),
            iterations: r.iterations,
            projections: r.projections,
            cycles: r.cycles,
            seconds: r.elapsed,
        });
        ResultFile {
            status: result.status,
            objective: result.objective(),
            assignment,
            best_bound: result.bound(),
            gap: result.gap,
            nodes: result.nodes,
            restarts: result.restarts,
            relaxation_failures: result.relaxation_failures,
            pump,
            wall_seconds: result.wall_time,
            options: options.clone(),
        }
    }

    /// The same record with wall-clock fields zeroed, for comparing runs.
    pub fn without_timing(&self) -> Self {
        let mut out = self.clone();
        out.wall_seconds = 0.0;
        if let Some(p) = out.pump.as_mut() {
            p.seconds = 0.0;
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// The assignment as a point in the model's variable order.
    pub fn point(&self, model: &Model) -> Option<Vec<f64>> {
        let a = self.assignment.as_ref()?;
        model.variables().iter().map(|v| a.get(&v.name).copied()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::solve;
    use crate::model::fixtures::code_block;

    #[test]
    fn round_trip_and_reevaluation() {
        let model = code_block();
        let options = SolverOptions::default();
        let result = solve(&model, &options);
        let file = ResultFile::new(&model, &result, &options);
        let text = file.to_json();
        let back = ResultFile::from_json(&text).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.to_json(), text);

        let point = back.point(&model).unwrap();
        let obj = model.to_original_sense(model.objective_value(&point).unwrap());
        assert!((obj - back.objective.unwrap()).abs() <= 1e-8);
        assert_eq!(back.options, options);
    }

    #[test]
    fn infinite_fields_survive() {
        let model = code_block();
        let options = SolverOptions {
            time_limit: 0.0,
            pump: PumpMode::Off,
            ..SolverOptions::default()
        };
        let file = ResultFile::new(&model, &solve(&model, &options), &options);
        assert_eq!(file.gap, f64::INFINITY);
        let back = ResultFile::from_json(&file.to_json()).unwrap();
        assert_eq!(back, file);
    }
}

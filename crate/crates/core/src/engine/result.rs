use serde::{Deserialize, Serialize};

use crate::fpump::PumpReport;
use crate::model::{Model, Sense};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SolveStatus {
    /// Tree search completed or the gap closed. On nonconvex models the
    /// bounds come from a local solver, so this is a heuristic verdict.
    Optimal,
    FeasibleTimeLimit,
    InfeasibleOrUnbounded,
    NoSolutionTimeLimit,
    Error,
}

impl SolveStatus {
    pub fn has_time_limit(self) -> bool {
        matches!(self, SolveStatus::FeasibleTimeLimit | SolveStatus::NoSolutionTimeLimit)
    }

    /// The search ran to completion (solved or proven empty).
    pub fn is_finished(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::InfeasibleOrUnbounded)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IncumbentSource {
    TreeSearch,
    FeasibilityPump,
}

/// Best integer- and constraint-feasible point found so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Incumbent {
    pub point: Vec<f64>,
    /// Canonical (minimize) objective.
    pub objective: f64,
    /// Seconds since the solve started.
    pub found_at: f64,
    pub node: Option<u64>,
    pub source: IncumbentSource,
}

/// A branching decision, for replay and determinism checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    pub node: u64,
    pub var: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeEventKind {
    PrunedInfeasible,
    PrunedByBound,
    IntegerFeasible,
    Branched,
    Cancelled,
}

/// One processed node, recorded when tracing is enabled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeEvent {
    pub id: u64,
    pub parent: Option<u64>,
    pub depth: u32,
    /// Ordering key when the node was taken from the open set.
    pub key: f64,
    /// Relaxation objective, when solved.
    pub bound: Option<f64>,
    pub kind: NodeEventKind,
    pub branched_on: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub incumbent: Option<Incumbent>,
    /// Canonical best bound (`-inf` when unknown).
    pub best_bound: f64,
    pub gap: f64,
    pub nodes: usize,
    pub wall_time: f64,
    /// Root relaxation attempts beyond the first.
    pub restarts: usize,
    /// Non-root relaxations that failed and were pruned.
    pub relaxation_failures: usize,
    pub pump: Option<PumpReport>,
    pub branch_log: Vec<BranchRecord>,
    pub trace: Vec<NodeEvent>,
    pub sense: Sense,
}

impl SolveResult {
    /// Incumbent objective in the model's declared sense.
    pub fn objective(&self) -> Option<f64> {
        self.incumbent.as_ref().map(|i| self.to_original(i.objective))
    }

    /// Best bound in the model's declared sense.
    pub fn bound(&self) -> f64 {
        self.to_original(self.best_bound)
    }

    fn to_original(&self, v: f64) -> f64 {
        match self.sense {
            Sense::Minimize => v,
            Sense::Maximize => -v,
        }
    }

    pub fn point(&self) -> Option<&[f64]> {
        self.incumbent.as_ref().map(|i| i.point.as_slice())
    }

    pub(crate) fn empty(model: &Model, status: SolveStatus) -> Self {
        SolveResult {
            status,
            incumbent: None,
            best_bound: f64::NEG_INFINITY,
            gap: f64::INFINITY,
            nodes: 0,
            wall_time: 0.0,
            restarts: 0,
            relaxation_failures: 0,
            pump: None,
            branch_log: Vec::new(),
            trace: Vec::new(),
            sense: model.sense(),
        }
    }
}

/// Relative gap `|incumbent - bound| / max(|incumbent|, 1e-10)` in canonical
/// sense. `+inf` without an incumbent; 0 when the bound exceeds the incumbent.
pub fn gap(incumbent: Option<f64>, bound: f64) -> f64 {
    let Some(inc) = incumbent else {
        return f64::INFINITY;
    };
    if bound >= inc {
        return 0.0;
    }
    (inc - bound).abs() / inc.abs().max(1e-10)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_examples() {
        assert!((gap(Some(100.0), 99.99) - 1e-4).abs() < 1e-12);
        assert_eq!(gap(Some(42.0), 42.0), 0.0);
        assert_eq!(gap(None, 1.0), f64::INFINITY);
        assert_eq!(gap(Some(1.0), 2.0), 0.0);
        assert_eq!(gap(Some(0.0), -1e-12), 1e-2);
        assert_eq!(gap(Some(5.0), f64::NEG_INFINITY), f64::INFINITY);
    }
}

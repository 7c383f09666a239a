use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Branching variable selection rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize, clap::ValueEnum)]
pub enum BranchingStrategy {
    /// Fractional variable farthest from an integer.
    #[serde(rename = "most-infeasible")]
    #[value(name = "most-infeasible")]
    MostInfeasible,
    /// Historical objective degradation per unit of fractionality.
    #[serde(rename = "pseudo")]
    #[value(name = "pseudo")]
    PseudoCost,
    /// Solve both children of every candidate and keep the best.
    #[serde(rename = "strong")]
    #[value(name = "strong")]
    Strong,
    /// Strong branching until a variable's statistics are reliable.
    #[serde(rename = "reliability")]
    #[value(name = "reliability")]
    Reliability,
    /// Strong branching at the root, pseudo-cost branching below it.
    #[default]
    #[serde(rename = "strong-root")]
    #[value(name = "strong-root")]
    StrongRootThenPseudo,
}

impl BranchingStrategy {
    pub const ALL: [BranchingStrategy; 5] = [
        BranchingStrategy::MostInfeasible,
        BranchingStrategy::PseudoCost,
        BranchingStrategy::Strong,
        BranchingStrategy::Reliability,
        BranchingStrategy::StrongRootThenPseudo,
    ];
}

/// Order in which open nodes are explored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize, clap::ValueEnum)]
pub enum Traversal {
    #[default]
    #[serde(rename = "best")]
    #[value(name = "best")]
    BestFirst,
    #[serde(rename = "depth")]
    #[value(name = "depth")]
    DepthFirst,
}

impl Traversal {
    pub const ALL: [Traversal; 2] = [Traversal::BestFirst, Traversal::DepthFirst];
}

/// Feasibility pump configuration at the root.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize, clap::ValueEnum)]
pub enum PumpMode {
    #[serde(rename = "off")]
    #[value(name = "off")]
    Off,
    /// Next integer target by componentwise rounding.
    #[default]
    #[serde(rename = "rounding")]
    #[value(name = "rounding")]
    Rounding,
    /// Next integer target from an L1 projection over the linear constraints.
    #[serde(rename = "mip")]
    #[value(name = "mip")]
    MipProjection,
}

impl PumpMode {
    pub const ALL: [PumpMode; 3] = [PumpMode::Off, PumpMode::Rounding, PumpMode::MipProjection];
}

/// Solver configuration. Times are in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub branching: BranchingStrategy,
    pub traversal: Traversal,
    /// Relative optimality gap at which the search stops (0.01%).
    #[serde(with = "crate::extfloat")]
    pub gap_tolerance: f64,
    #[serde(with = "crate::extfloat")]
    pub time_limit: f64,
    pub integrality_tolerance: f64,
    /// Time budget for one round of strong branching.
    #[serde(with = "crate::extfloat")]
    pub strong_branching_budget: f64,
    /// Number of root relaxation attempts, the first from the bound midpoint.
    pub root_restarts: u32,
    /// Per-direction observation count after which pseudo-costs are trusted.
    pub reliability_threshold: u32,
    pub pump: PumpMode,
    #[serde(with = "crate::extfloat")]
    pub pump_time_limit: f64,
    /// Threads including the coordinating one; 1 selects the sequential search.
    pub workers: usize,
    pub seed: u64,
    pub prune_on_local_bound: bool,
    /// Record one event per processed node in the result.
    pub trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            branching: BranchingStrategy::StrongRootThenPseudo,
            traversal: Traversal::BestFirst,
            gap_tolerance: 1e-4,
            time_limit: 3600.0,
            integrality_tolerance: 1e-6,
            strong_branching_budget: 100.0,
            root_restarts: 3,
            reliability_threshold: 5,
            pump: PumpMode::Rounding,
            pump_time_limit: 60.0,
            workers: 1,
            seed: 0,
            prune_on_local_bound: true,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid option `{field}`: {reason}")]
pub struct OptionsError {
    pub field: &'static str,
    pub reason: &'static str,
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), OptionsError> {
        let err = |field, reason| Err(OptionsError { field, reason });
        if !(self.gap_tolerance > 0.0 && self.gap_tolerance < 1.0) {
            return err("gap_tolerance", "must lie in (0, 1)");
        }
        for (field, value) in [
            ("time_limit", self.time_limit),
            ("strong_branching_budget", self.strong_branching_budget),
            ("pump_time_limit", self.pump_time_limit),
        ] {
            if value.is_nan() || value < 0.0 {
                return err(field, "must be non-negative");
            }
        }
        if !(self.integrality_tolerance > 0.0 && self.integrality_tolerance < 0.5) {
            return err("integrality_tolerance", "must lie in (0, 0.5)");
        }
        if self.root_restarts == 0 {
            return err("root_restarts", "must be at least 1");
        }
        if self.workers == 0 {
            return err("workers", "must be at least 1");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_snapshot() {
        let o = SolverOptions::default();
        assert_eq!(o.gap_tolerance, 1e-4);
        assert_eq!(o.time_limit, 3600.0);
        assert_eq!(o.pump_time_limit, 60.0);
        assert_eq!(o.strong_branching_budget, 100.0);
        assert_eq!(o.root_restarts, 3);
        assert_eq!(o.branching, BranchingStrategy::StrongRootThenPseudo);
        assert_eq!(o.traversal, Traversal::BestFirst);
        assert!(o.validate().is_ok());
    }

    #[test]
    fn partial_json_fills_defaults() {
        let o: SolverOptions = serde_json::from_str(r#"{"branching":"pseudo","traversal":"depth"}"#).unwrap();
        assert_eq!(o.branching, BranchingStrategy::PseudoCost);
        assert_eq!(o.traversal, Traversal::DepthFirst);
        assert_eq!(o.time_limit, 3600.0);
        assert!(serde_json::from_str::<SolverOptions>(r#"{"speed":3}"#).is_err());
    }

    #[test]
    fn validation() {
        let bad = SolverOptions {
            gap_tolerance: 0.0,
            ..SolverOptions::default()
        };
        assert_eq!(bad.validate().unwrap_err().field, "gap_tolerance");
        let bad = SolverOptions {
            workers: 0,
            ..SolverOptions::default()
        };
        assert!(bad.validate().is_err());
    }
}

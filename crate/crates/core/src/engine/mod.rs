//! Branch-and-bound tree search over NLP relaxations.

mod branching;
mod node;
mod options;
mod pseudocost;
mod result;
mod search;

pub use branching::{
    fractional_candidates, most_infeasible, product_score, pseudo_cost_choice, select_branch_variable,
    strong_branching, BranchDecision, Candidate, ChildEval, NodeContext, StrongResult,
};
pub use node::{branch, BranchError, BranchOrigin, Node, OpenSet};
pub use options::{BranchingStrategy, OptionsError, PumpMode, SolverOptions, Traversal};
pub use pseudocost::{Direction, PseudoCost, PseudoCostTable, PseudoCostUpdate, SCORE_EPSILON};
pub use result::{gap, BranchRecord, Incumbent, IncumbentSource, NodeEvent, NodeEventKind, SolveResult, SolveStatus};
pub use search::{process_node, root_restart, solve, NodeOutcome, NodeReport, RestartError, PRUNE_SLACK};

pub(crate) use search::{deadline_after, Search};

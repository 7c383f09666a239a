//! Branching variable selection.

use web_time::{Duration, Instant};

use super::node::{branch, Node};
use super::options::{BranchingStrategy, SolverOptions};
use super::pseudocost::{Direction, PseudoCostTable, PseudoCostUpdate, SCORE_EPSILON};
use crate::model::Model;
use crate::nlp::{solve_nlp, NlpLimits, NlpProblem, NlpResult, NlpStatus};

/// Read-only state a node evaluation needs.
#[derive(Clone, Copy)]
pub struct NodeContext<'a> {
    pub model: &'a Model,
    pub options: &'a SolverOptions,
    pub table: &'a PseudoCostTable,
    /// Canonical objective of the incumbent, if any.
    pub incumbent: Option<f64>,
    pub deadline: Option<Instant>,
}

impl NodeContext<'_> {
    pub(crate) fn nlp_limits(&self) -> NlpLimits {
        match self.deadline {
            Some(d) => NlpLimits::with_budget(d.saturating_duration_since(Instant::now())),
            None => NlpLimits::default(),
        }
    }

    pub(crate) fn expired(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }
}

/// An integer variable with a fractional relaxation value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub var: usize,
    pub value: f64,
}

impl Candidate {
    /// Fractional part `value - floor(value)`.
    pub fn fraction(&self) -> f64 {
        self.value - self.value.floor()
    }

    /// `min(f, 1 - f)`: distance to the nearest integer.
    pub fn infeasibility(&self) -> f64 {
        let f = self.fraction();
        f.min(1.0 - f)
    }
}

/// Integer variables of `point` further than `tolerance` from an integer,
/// in index order.
pub fn fractional_candidates(model: &Model, point: &[f64], tolerance: f64) -> Vec<Candidate> {
    model
        .integers()
        .iter()
        .filter(|&&j| (point[j] - point[j].round()).abs() > tolerance)
        .map(|&j| Candidate {
            var: j,
            value: point[j],
        })
        .collect()
}

/// Outcome of solving one strong-branching child.
#[derive(Debug, Clone, PartialEq)]
pub enum ChildEval {
    Solved(NlpResult),
    Infeasible,
    Failed,
}

impl ChildEval {
    fn from_result(r: NlpResult) -> Self {
        match r.status {
            NlpStatus::LocallyOptimal => ChildEval::Solved(r),
            NlpStatus::Infeasible => ChildEval::Infeasible,
            _ => ChildEval::Failed,
        }
    }

    /// Objective increase over `bound`; infinite for an infeasible child.
    fn improvement(&self, bound: f64) -> Option<f64> {
        match self {
            ChildEval::Solved(r) => Some(r.objective - bound),
            ChildEval::Infeasible => Some(f64::INFINITY),
            ChildEval::Failed => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrongResult {
    /// Selected variable; `None` when every candidate's children failed.
    pub choice: Option<usize>,
    pub score: f64,
    /// Both children of `choice` are infeasible, so the node can be pruned.
    pub prune: bool,
    /// Child evaluations of `choice` (down, up).
    pub children: Option<(ChildEval, ChildEval)>,
    pub updates: Vec<PseudoCostUpdate>,
    pub evaluated: usize,
    /// Per-candidate scores, in evaluation order.
    pub scores: Vec<(usize, f64)>,
}

/// `max(Δ⁻, ε) · max(Δ⁺, ε)`
pub fn product_score(down: f64, up: f64) -> f64 {
    down.max(SCORE_EPSILON) * up.max(SCORE_EPSILON)
}

/// Argmax with ties going to the lower variable index.
fn better(score: f64, var: usize, best: Option<(f64, usize)>) -> bool {
    match best {
        None => true,
        Some((s, v)) => score > s || (score == s && var < v),
    }
}

fn most_infeasible_order(candidates: &[Candidate]) -> Vec<Candidate> {
    let mut ordered = candidates.to_vec();
    ordered.sort_by(|a, b| b.infeasibility().total_cmp(&a.infeasibility()).then(a.var.cmp(&b.var)));
    ordered
}

/// Solves both children of each candidate and scores it by the product of
/// objective improvements. The candidate list, ordered by infeasibility,
/// is truncated so `2 · |candidates| · t_node <= budget` where `t_node` is
/// the node relaxation's solve time, and evaluation also stops once the
/// wall-clock budget is spent. At least one candidate is always evaluated.
pub fn strong_branching(
    node: &Node,
    candidates: &[Candidate],
    budget: Duration,
    ctx: &NodeContext<'_>,
) -> StrongResult {
    let started = Instant::now();
    let relaxation = node.relaxation.as_ref().expect("strong branching needs a solved node");
    let bound = relaxation.objective;
    let mut ordered = most_infeasible_order(candidates);
    let estimate = relaxation.wall_time.as_secs_f64();
    if estimate > 0.0 {
        let fits = (budget.as_secs_f64() / (2.0 * estimate)).floor();
        let keep = if fits.is_finite() {
            (fits as usize).max(1)
        } else {
            ordered.len()
        };
        ordered.truncate(keep);
    }

    let mut result = StrongResult {
        choice: None,
        score: f64::NEG_INFINITY,
        prune: false,
        children: None,
        updates: Vec::new(),
        evaluated: 0,
        scores: Vec::new(),
    };
    let mut best: Option<(f64, usize)> = None;
    for cand in ordered {
        if result.evaluated > 0 && (started.elapsed() >= budget || ctx.expired()) {
            break;
        }
        let (left, right) =
            branch(node, cand.var, cand.value, ctx.options.integrality_tolerance).expect("candidate is fractional");
        let solve = |child: &Node| {
            if child.is_empty_box() {
                return ChildEval::Infeasible;
            }
            let problem = NlpProblem::with_bounds(
                ctx.model,
                child.lower.clone(),
                child.upper.clone(),
                relaxation.point.clone(),
            );
            ChildEval::from_result(solve_nlp(&problem, &ctx.nlp_limits()))
        };
        let down = solve(&left);
        let up = solve(&right);
        result.evaluated += 1;

        let f = cand.fraction();
        if let ChildEval::Solved(r) = &down {
            result.updates.push(PseudoCostUpdate {
                var: cand.var,
                direction: Direction::Down,
                degradation: r.objective - bound,
                fraction: f,
            });
        }
        if let ChildEval::Solved(r) = &up {
            result.updates.push(PseudoCostUpdate {
                var: cand.var,
                direction: Direction::Up,
                degradation: r.objective - bound,
                fraction: 1.0 - f,
            });
        }
        if down == ChildEval::Infeasible && up == ChildEval::Infeasible {
            result.choice = Some(cand.var);
            result.score = f64::INFINITY;
            result.prune = true;
            result.children = Some((down, up));
            return result;
        }
        let (Some(d), Some(u)) = (down.improvement(bound), up.improvement(bound)) else {
            continue;
        };
        let score = product_score(d, u);
        result.scores.push((cand.var, score));
        if better(score, cand.var, best) {
            best = Some((score, cand.var));
            result.choice = Some(cand.var);
            result.score = score;
            result.children = Some((down, up));
        }
    }
    result
}

/// A branching decision for one node.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchDecision {
    pub var: usize,
    pub value: f64,
    /// Prune the node instead of branching: both children are infeasible.
    pub prune: bool,
    /// Children already solved while selecting (strong branching).
    pub children: Option<(ChildEval, ChildEval)>,
    pub updates: Vec<PseudoCostUpdate>,
}

pub fn most_infeasible(candidates: &[Candidate]) -> Candidate {
    let mut best: Option<(f64, usize)> = None;
    let mut choice = candidates[0];
    for c in candidates {
        if better(c.infeasibility(), c.var, best) {
            best = Some((c.infeasibility(), c.var));
            choice = *c;
        }
    }
    choice
}

pub fn pseudo_cost_choice(candidates: &[Candidate], table: &PseudoCostTable) -> Candidate {
    let mut best: Option<(f64, usize)> = None;
    let mut choice = candidates[0];
    for c in candidates {
        let s = table.score(c.var, c.fraction());
        if better(s, c.var, best) {
            best = Some((s, c.var));
            choice = *c;
        }
    }
    choice
}

/// Picks the branching variable for a node whose relaxation is fractional
/// on `candidates` (non-empty).
pub fn select_branch_variable(
    node: &Node,
    candidates: &[Candidate],
    strategy: BranchingStrategy,
    ctx: &NodeContext<'_>,
) -> BranchDecision {
    assert!(!candidates.is_empty(), "no fractional candidate to branch on");
    let simple = |c: Candidate| BranchDecision {
        var: c.var,
        value: c.value,
        prune: false,
        children: None,
        updates: Vec::new(),
    };
    let budget = Duration::from_secs_f64(ctx.options.strong_branching_budget);
    let value_of = |var: usize| candidates.iter().find(|c| c.var == var).unwrap().value;

    match strategy {
        BranchingStrategy::MostInfeasible => simple(most_infeasible(candidates)),
        BranchingStrategy::PseudoCost => simple(pseudo_cost_choice(candidates, ctx.table)),
        BranchingStrategy::StrongRootThenPseudo if !node.is_root() => simple(pseudo_cost_choice(candidates, ctx.table)),
        BranchingStrategy::Strong | BranchingStrategy::StrongRootThenPseudo => {
            let strong = strong_branching(node, candidates, budget, ctx);
            match strong.choice {
                Some(var) => BranchDecision {
                    var,
                    value: value_of(var),
                    prune: strong.prune,
                    children: strong.children,
                    updates: strong.updates,
                },
                None => BranchDecision {
                    updates: strong.updates,
                    ..simple(most_infeasible(candidates))
                },
            }
        }
        BranchingStrategy::Reliability => {
            let threshold = ctx.options.reliability_threshold;
            let unreliable: Vec<Candidate> = candidates
                .iter()
                .copied()
                .filter(|c| !ctx.table.is_reliable(c.var, threshold))
                .collect();
            if unreliable.is_empty() {
                return simple(pseudo_cost_choice(candidates, ctx.table));
            }
            let strong = strong_branching(node, &unreliable, budget, ctx);
            if strong.prune {
                let var = strong.choice.unwrap();
                return BranchDecision {
                    var,
                    value: value_of(var),
                    prune: true,
                    children: strong.children,
                    updates: strong.updates,
                };
            }
            let strong_scores = &strong.scores;
            let mut best: Option<(f64, usize)> = None;
            for c in candidates {
                let score = match strong_scores.iter().find(|(v, _)| *v == c.var) {
                    Some((_, s)) => *s,
                    None if ctx.table.is_reliable(c.var, threshold) => ctx.table.score(c.var, c.fraction()),
                    // Unreliable but not evaluated (budget) or failed.
                    None => continue,
                };
                if better(score, c.var, best) {
                    best = Some((score, c.var));
                }
            }
            match best {
                Some((_, var)) => BranchDecision {
                    var,
                    value: value_of(var),
                    prune: false,
                    children: if strong.choice == Some(var) {
                        strong.children
                    } else {
                        None
                    },
                    updates: strong.updates,
                },
                None => BranchDecision {
                    updates: strong.updates,
                    ..simple(most_infeasible(candidates))
                },
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cands(fracs: &[f64]) -> Vec<Candidate> {
        fracs
            .iter()
            .enumerate()
            .map(|(i, f)| Candidate { var: i, value: 3.0 + f })
            .collect()
    }

    #[test]
    fn most_infeasible_prefers_half() {
        assert_eq!(most_infeasible(&cands(&[0.5, 0.1, 0.49])).var, 0);
        assert_eq!(most_infeasible(&cands(&[0.1, 0.65, 0.3])).var, 1);
    }

    #[test]
    fn most_infeasible_ties_to_lowest_index() {
        assert_eq!(most_infeasible(&cands(&[0.25, 0.75, 0.25])).var, 0);
    }

    #[test]
    fn pseudo_cost_scores() {
        let mut table = PseudoCostTable::new(2);
        for j in 0..2 {
            table.update(j, Direction::Down, 1.0, 0.5);
            table.update(j, Direction::Up, 1.0, 0.5);
        }
        // Ψ = 2 everywhere: 2·0.5·2·0.5 = 1 vs 2·0.2·2·0.8 = 0.64.
        assert_eq!(pseudo_cost_choice(&cands(&[0.5, 0.2]), &table).var, 0);
    }

    #[test]
    fn product_score_arithmetic() {
        assert!(product_score(1.0, 1.0) > product_score(0.1, 9.0));
        assert!((product_score(0.1, 9.0) - 0.9).abs() < 1e-12);
        assert_eq!(product_score(-0.5, 2.0), SCORE_EPSILON * 2.0);
    }
}

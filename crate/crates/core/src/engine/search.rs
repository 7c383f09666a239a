use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;
use web_time::{Duration, Instant};

use super::branching::{fractional_candidates, select_branch_variable, ChildEval, NodeContext};
use super::node::{branch, midpoint, Node, OpenSet};
use super::options::SolverOptions;
use super::pseudocost::{PseudoCostTable, PseudoCostUpdate};
use super::result::{
    gap, BranchRecord, Incumbent, IncumbentSource, NodeEvent, NodeEventKind, SolveResult, SolveStatus,
};
use crate::fpump::{pump, PumpReport};
use crate::model::Model;
use crate::nlp::{solve_nlp, NlpProblem, NlpResult, NlpStatus};

/// Slack used when comparing a node bound with the incumbent.
pub const PRUNE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RestartError {
    #[error("restart attempt {attempt} is outside 1..={limit}")]
    AttemptOutOfRange { attempt: u32, limit: u32 },
}

/// Start point for root relaxation attempt `attempt` (1-based). The first
/// attempt uses the bound midpoint; later ones draw uniformly from the box,
/// with infinite bounds clipped to ±1e3, from a stream of the seeded
/// generator selected by the attempt number.
pub fn root_restart(
    lower: &[f64],
    upper: &[f64],
    attempt: u32,
    limit: u32,
    seed: u64,
) -> Result<Vec<f64>, RestartError> {
    if attempt == 0 || attempt > limit {
        return Err(RestartError::AttemptOutOfRange { attempt, limit });
    }
    if attempt == 1 {
        return Ok(lower.iter().zip(upper).map(|(l, u)| midpoint(*l, *u)).collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(attempt));
    Ok(lower
        .iter()
        .zip(upper)
        .map(|(&l, &u)| {
            let (a, b) = (l.max(-1e3), u.min(1e3));
            if a < b {
                rng.gen_range(a..=b)
            } else {
                midpoint(l, u)
            }
        })
        .collect())
}

/// What happened to a processed node.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeOutcome {
    PrunedInfeasible,
    PrunedByBound,
    IntegerFeasible {
        point: Vec<f64>,
        objective: f64,
    },
    /// Children carry id 0; the coordinator numbers them.
    Branched(Vec<Node>),
    /// The root relaxation failed on every restart.
    RootFailed,
    /// The time limit interrupted the relaxation; the node goes back to the
    /// open set unchanged.
    Cancelled(Node),
}

impl NodeOutcome {
    fn event_kind(&self) -> NodeEventKind {
        match self {
            NodeOutcome::PrunedInfeasible | NodeOutcome::RootFailed => NodeEventKind::PrunedInfeasible,
            NodeOutcome::PrunedByBound => NodeEventKind::PrunedByBound,
            NodeOutcome::IntegerFeasible { .. } => NodeEventKind::IntegerFeasible,
            NodeOutcome::Branched(_) => NodeEventKind::Branched,
            NodeOutcome::Cancelled(_) => NodeEventKind::Cancelled,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeReport {
    pub id: u64,
    pub parent: Option<u64>,
    pub depth: u32,
    /// Bound the node carried when it was selected.
    pub key: f64,
    /// Relaxation objective, if solved.
    pub bound: Option<f64>,
    pub outcome: NodeOutcome,
    pub updates: Vec<PseudoCostUpdate>,
    pub branch: Option<BranchRecord>,
    pub restarts: usize,
    /// A non-root relaxation failed and the node was pruned.
    pub relaxation_failed: bool,
    pub relaxation_time: Duration,
}

fn dominated(bound: f64, ctx: &NodeContext<'_>) -> bool {
    ctx.options.prune_on_local_bound && ctx.incumbent.is_some_and(|inc| bound >= inc - PRUNE_SLACK)
}

/// Solves the root relaxation from up to `root_restarts` start points.
fn solve_root(node: &Node, ctx: &NodeContext<'_>) -> (NlpResult, usize) {
    let limit = ctx.options.root_restarts;
    let mut attempt = 1;
    loop {
        let start =
            root_restart(&node.lower, &node.upper, attempt, limit, ctx.options.seed).expect("attempt within limit");
        let problem = NlpProblem::with_bounds(ctx.model, node.lower.clone(), node.upper.clone(), start);
        let result = solve_nlp(&problem, &ctx.nlp_limits());
        if result.status == NlpStatus::LocallyOptimal || attempt == limit || ctx.expired() {
            return (result, (attempt - 1) as usize);
        }
        attempt += 1;
    }
}

/// Rounds the integer coordinates of an integer-feasible relaxation point,
/// keeping the unrounded point if rounding breaks feasibility.
fn integer_point(model: &Model, point: &[f64]) -> Option<(Vec<f64>, f64)> {
    let mut rounded = point.to_vec();
    for &j in model.integers() {
        rounded[j] = rounded[j].round();
    }
    [rounded, point.to_vec()].into_iter().find_map(|p| {
        if !model.is_feasible_solution(&p) {
            return None;
        }
        let obj = model.objective_value(&p).ok().filter(|v| v.is_finite())?;
        Some((p, obj))
    })
}

/// Solves one node's relaxation and decides its fate.
pub fn process_node(mut node: Node, ctx: &NodeContext<'_>) -> NodeReport {
    let mut report = NodeReport {
        id: node.id,
        parent: node.parent,
        depth: node.depth,
        key: node.bound,
        bound: None,
        outcome: NodeOutcome::PrunedInfeasible,
        updates: Vec::new(),
        branch: None,
        restarts: 0,
        relaxation_failed: false,
        relaxation_time: Duration::ZERO,
    };
    if node.is_empty_box() {
        return report;
    }
    if node.relaxation.is_none() && dominated(node.bound, ctx) {
        report.outcome = NodeOutcome::PrunedByBound;
        return report;
    }

    let relaxation = match node.relaxation.take() {
        Some(r) => r,
        None if node.is_root() => {
            let (r, restarts) = solve_root(&node, ctx);
            report.restarts = restarts;
            r
        }
        None => {
            let problem = NlpProblem::with_bounds(
                ctx.model,
                node.lower.clone(),
                node.upper.clone(),
                node.warm_start.clone(),
            );
            solve_nlp(&problem, &ctx.nlp_limits())
        }
    };
    report.relaxation_time = relaxation.wall_time;
    match relaxation.status {
        NlpStatus::LocallyOptimal => {}
        _ if ctx.expired() => {
            report.outcome = NodeOutcome::Cancelled(node);
            return report;
        }
        NlpStatus::Infeasible => return report,
        _ if node.is_root() => {
            report.outcome = NodeOutcome::RootFailed;
            return report;
        }
        _ => {
            report.relaxation_failed = true;
            return report;
        }
    }

    let bound = relaxation.objective;
    report.bound = Some(bound);
    if let Some(origin) = node.origin.as_ref().filter(|o| o.record) {
        report.updates.push(PseudoCostUpdate {
            var: origin.var,
            direction: origin.direction,
            degradation: bound - origin.parent_bound,
            fraction: origin.fraction,
        });
    }
    if dominated(bound, ctx) {
        report.outcome = NodeOutcome::PrunedByBound;
        return report;
    }

    let candidates = fractional_candidates(ctx.model, &relaxation.point, ctx.options.integrality_tolerance);
    if candidates.is_empty() {
        report.outcome = match integer_point(ctx.model, &relaxation.point) {
            Some((point, objective)) => NodeOutcome::IntegerFeasible { point, objective },
            // Within tolerances by the solver's measure but not ours.
            None => NodeOutcome::PrunedInfeasible,
        };
        return report;
    }

    node.bound = bound;
    node.relaxation = Some(relaxation);
    let decision = select_branch_variable(&node, &candidates, ctx.options.branching, ctx);
    report.updates.extend(decision.updates);
    if decision.prune {
        return report;
    }
    report.branch = Some(BranchRecord {
        node: node.id,
        var: decision.var,
        value: decision.value,
    });
    let (mut left, mut right) = branch(&node, decision.var, decision.value, ctx.options.integrality_tolerance)
        .expect("candidate is fractional");
    let mut children = Vec::with_capacity(2);
    let evals = match decision.children {
        Some((down, up)) => [Some(down), Some(up)],
        None => [None, None],
    };
    for (child, eval) in [(&mut left, &evals[0]), (&mut right, &evals[1])] {
        match eval {
            Some(ChildEval::Infeasible) => continue,
            Some(ChildEval::Solved(r)) => {
                child.bound = r.objective;
                child.relaxation = Some(r.clone());
                if let Some(o) = child.origin.as_mut() {
                    o.record = false;
                }
            }
            _ => {}
        }
        if !child.is_empty_box() {
            children.push(child.clone());
        }
    }
    report.outcome = NodeOutcome::Branched(children);
    report
}

/// Coordinator state shared by the sequential and parallel searches.
pub(crate) struct Search<'a> {
    pub model: &'a Model,
    pub options: &'a SolverOptions,
    pub table: PseudoCostTable,
    pub open: OpenSet,
    pub incumbent: Option<Incumbent>,
    pub started: Instant,
    pub deadline: Option<Instant>,
    next_id: u64,
    pub nodes: usize,
    restarts: usize,
    relaxation_failures: usize,
    root_failed: bool,
    branch_log: Vec<BranchRecord>,
    trace: Vec<NodeEvent>,
}

impl<'a> Search<'a> {
    pub fn new(
        model: &'a Model,
        options: &'a SolverOptions,
        started: Instant,
        deadline: Option<Instant>,
        root: Node,
    ) -> Self {
        let mut open = OpenSet::new(options.traversal);
        open.push(root);
        Search {
            model,
            options,
            table: PseudoCostTable::new(model.var_count()),
            open,
            incumbent: None,
            started,
            deadline,
            next_id: 1,
            nodes: 0,
            restarts: 0,
            relaxation_failures: 0,
            root_failed: false,
            branch_log: Vec::new(),
            trace: Vec::new(),
        }
    }

    pub fn context(&self) -> NodeContext<'_> {
        NodeContext {
            model: self.model,
            options: self.options,
            table: &self.table,
            incumbent: self.incumbent_objective(),
            deadline: self.deadline,
        }
    }

    pub fn incumbent_objective(&self) -> Option<f64> {
        self.incumbent.as_ref().map(|i| i.objective)
    }

    pub fn expired(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }

    /// Adopts `point` if it is feasible and strictly better. Returns whether
    /// it was adopted.
    pub fn offer(&mut self, point: Vec<f64>, objective: f64, node: Option<u64>, source: IncumbentSource) -> bool {
        if !self.model.is_feasible_solution(&point) {
            return false;
        }
        if self.incumbent_objective().is_some_and(|inc| objective >= inc) {
            return false;
        }
        self.incumbent = Some(Incumbent {
            point,
            objective,
            found_at: self.started.elapsed().as_secs_f64(),
            node,
            source,
        });
        true
    }

    /// The search can stop: the root failed or the gap is closed.
    pub fn done(&self, in_flight_bound: f64) -> bool {
        self.root_failed
            || gap(self.incumbent_objective(), self.best_bound(in_flight_bound)) <= self.options.gap_tolerance
    }

    fn best_bound(&self, in_flight_bound: f64) -> f64 {
        let open = self.open.min_bound().min(in_flight_bound);
        match self.incumbent_objective() {
            Some(inc) => open.min(inc),
            None => open,
        }
    }

    /// Folds a node report into the search state.
    pub fn integrate(&mut self, report: NodeReport) {
        let kind = report.outcome.event_kind();
        for u in &report.updates {
            self.table.apply(u);
        }
        let mut branched_on = None;
        match report.outcome {
            NodeOutcome::Cancelled(node) => {
                self.open.push(node);
                return;
            }
            NodeOutcome::RootFailed => self.root_failed = true,
            NodeOutcome::IntegerFeasible { point, objective } => {
                self.offer(point, objective, Some(report.id), IncumbentSource::TreeSearch);
            }
            NodeOutcome::Branched(children) => {
                branched_on = report.branch.map(|b| b.var);
                let mut numbered = Vec::with_capacity(children.len());
                for mut child in children {
                    child.id = self.next_id;
                    child.parent = Some(report.id);
                    self.next_id += 1;
                    numbered.push(child);
                }
                self.open.push_children(numbered);
            }
            NodeOutcome::PrunedInfeasible | NodeOutcome::PrunedByBound => {}
        }
        self.nodes += 1;
        self.restarts += report.restarts;
        self.relaxation_failures += usize::from(report.relaxation_failed);
        if let Some(b) = report.branch {
            self.branch_log.push(b);
        }
        if self.options.trace {
            self.trace.push(NodeEvent {
                id: report.id,
                parent: report.parent,
                depth: report.depth,
                key: report.key,
                bound: report.bound,
                kind,
                branched_on,
            });
        }
    }

    pub fn finish(self, timed_out: bool, in_flight_bound: f64, pump: Option<PumpReport>) -> SolveResult {
        let complete = !timed_out && !self.root_failed;
        let has_inc = self.incumbent.is_some();
        let status = match (self.root_failed, timed_out, has_inc) {
            (true, _, _) => SolveStatus::Error,
            (false, true, true) => SolveStatus::FeasibleTimeLimit,
            (false, true, false) => SolveStatus::NoSolutionTimeLimit,
            (false, false, true) => SolveStatus::Optimal,
            (false, false, false) => SolveStatus::InfeasibleOrUnbounded,
        };
        let best_bound = if complete && self.open.is_empty() && in_flight_bound == f64::INFINITY {
            self.incumbent_objective().unwrap_or(f64::INFINITY)
        } else {
            self.best_bound(in_flight_bound)
        };
        let inc = self.incumbent_objective();
        SolveResult {
            status,
            gap: gap(inc, best_bound),
            incumbent: self.incumbent,
            best_bound,
            nodes: self.nodes,
            wall_time: self.started.elapsed().as_secs_f64(),
            restarts: self.restarts,
            relaxation_failures: self.relaxation_failures,
            pump,
            branch_log: self.branch_log,
            trace: self.trace,
            sense: self.model.sense(),
        }
    }
}

pub(crate) fn deadline_after(start: Instant, seconds: f64) -> Option<Instant> {
    Duration::try_from_secs_f64(seconds)
        .ok()
        .and_then(|d| start.checked_add(d))
}

/// Root bounds with integer bounds rounded inward.
fn root_node(model: &Model, tolerance: f64) -> Node {
    let mut lower = model.lower().to_vec();
    let mut upper = model.upper().to_vec();
    for &j in model.integers() {
        lower[j] = (lower[j] - tolerance).ceil();
        upper[j] = (upper[j] + tolerance).floor();
    }
    Node::root(lower, upper)
}

/// Runs the branch-and-bound search. With `workers >= 2` the tree search is
/// parallel.
pub fn solve(model: &Model, options: &SolverOptions) -> SolveResult {
    let started = Instant::now();
    if options.validate().is_err() {
        return SolveResult::empty(model, SolveStatus::Error);
    }
    let deadline = deadline_after(started, options.time_limit);
    let root = root_node(model, options.integrality_tolerance);
    if root.is_empty_box() {
        let mut result = SolveResult::empty(model, SolveStatus::InfeasibleOrUnbounded);
        result.best_bound = f64::INFINITY;
        result.wall_time = started.elapsed().as_secs_f64();
        return result;
    }

    let mut search = Search::new(model, options, started, deadline, root.clone());
    let pump_report = match options.pump {
        super::PumpMode::Off => None,
        mode => {
            let remaining = deadline.map_or(f64::INFINITY, |d| {
                d.saturating_duration_since(Instant::now()).as_secs_f64()
            });
            let limit = options.pump_time_limit.min(remaining);
            let report = pump(model, &root.lower, &root.upper, mode, limit, options.seed);
            if let Some(inc) = &report.incumbent {
                search.offer(inc.point.clone(), inc.objective, None, IncumbentSource::FeasibilityPump);
            }
            Some(report)
        }
    };

    if options.workers >= 2 {
        return crate::parallel::run(search, pump_report);
    }
    loop {
        if search.done(f64::INFINITY) || search.open.is_empty() {
            return search.finish(false, f64::INFINITY, pump_report);
        }
        if search.expired() {
            return search.finish(true, f64::INFINITY, pump_report);
        }
        let node = search.open.next_node().expect("open set is non-empty");
        let report = process_node(node, &search.context());
        search.integrate(report);
    }
}

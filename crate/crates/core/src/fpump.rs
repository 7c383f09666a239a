//! Root feasibility pump.
//!
//! Alternates between an NLP that pulls the relaxation towards an integer
//! target and a rounding (or linear L1 projection) step that picks the next
//! target, until the two meet.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use web_time::Instant;

use crate::engine::{self, deadline_after, Incumbent, IncumbentSource, PumpMode, SolverOptions, Traversal};
use crate::model::{canonicalize, Expr, Model, RawConstraint, RawModel, Relation, Sense, Variable, INTEGRALITY_TOL};
use crate::nlp::{solve_nlp, NlpLimits, NlpProblem, NlpResult, NlpStatus};

pub const MAX_ITERATIONS: usize = 100;
/// Per-projection cap on the inner MIP solve.
pub const PROJECTION_TIME: f64 = 10.0;
pub const PROJECTION_GAP: f64 = 0.01;
/// Slack when rounding integer bounds inward.
const BOX_TOLERANCE: f64 = 1e-6;
/// Distance to the target below which the integers are fixed and the
/// continuous part re-solved for the true objective.
const SNAP_DISTANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PumpReport {
    pub mode: PumpMode,
    pub incumbent: Option<Incumbent>,
    pub iterations: usize,
    pub projections: usize,
    pub cycles: usize,
    /// Seconds spent in the pump.
    pub elapsed: f64,
    pub timed_out: bool,
}

impl PumpReport {
    pub fn found(&self) -> bool {
        self.incumbent.is_some()
    }
}

/// Breaks a cycle. Flips the `max(1, ⌈|I|/3⌉)` components with the largest
/// nonzero distance `|nlp_j - target_j|` one unit towards `nlp_j` (ties to
/// the lower index), skipping flips that leave the bounds. If the result is
/// still in `history`, one extra uniformly chosen in-bound unit flip is made.
/// All slices are indexed by position in the integer set.
pub fn perturb(
    target: &[i64],
    nlp: &[f64],
    lower: &[f64],
    upper: &[f64],
    history: &HashSet<Vec<i64>>,
    rng: &mut ChaCha8Rng,
) -> Vec<i64> {
    let n = target.len();
    let flips = n.div_ceil(3).max(1);
    let distance = |k: usize| (nlp[k] - target[k] as f64).abs();
    let mut order: Vec<usize> = (0..n).filter(|&k| distance(k) > 0.0).collect();
    order.sort_by(|&a, &b| distance(b).total_cmp(&distance(a)).then(a.cmp(&b)));

    let fits = |k: usize, v: i64| (v as f64) >= lower[k] && (v as f64) <= upper[k];
    let mut out = target.to_vec();
    let mut done = 0;
    for k in order {
        if done == flips {
            break;
        }
        let step = if nlp[k] > target[k] as f64 { 1 } else { -1 };
        if fits(k, target[k] + step) {
            out[k] = target[k] + step;
            done += 1;
        }
    }
    if done == 0 || history.contains(&out) {
        let moves: Vec<(usize, i64)> = (0..n)
            .flat_map(|k| [(k, -1), (k, 1)])
            .filter(|&(k, s)| fits(k, out[k] + s))
            .collect();
        if let Some(&(k, s)) = moves.choose(rng) {
            out[k] += s;
        }
    }
    out
}

struct Pump<'a> {
    model: &'a Model,
    lower: &'a [f64],
    upper: &'a [f64],
    deadline: Option<Instant>,
}

impl Pump<'_> {
    fn limits(&self) -> NlpLimits {
        match self.deadline {
            Some(d) => NlpLimits::with_budget(d.saturating_duration_since(Instant::now())),
            None => NlpLimits::default(),
        }
    }

    fn expired(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }

    fn remaining(&self) -> f64 {
        self.deadline.map_or(f64::INFINITY, |d| {
            d.saturating_duration_since(Instant::now()).as_secs_f64()
        })
    }

    fn solve(&self, model: &Model, lower: Vec<f64>, upper: Vec<f64>, start: Vec<f64>) -> NlpResult {
        solve_nlp(&NlpProblem::with_bounds(model, lower, upper, start), &self.limits())
    }

    /// A feasible point with integers set to `target`: first the rounded
    /// point itself, then the continuous part re-optimized.
    fn complete(&self, target: &[i64], point: &[f64]) -> Option<(Vec<f64>, f64)> {
        let integers = self.model.integers();
        let mut fixed = point.to_vec();
        let mut lower = self.lower.to_vec();
        let mut upper = self.upper.to_vec();
        for (k, &j) in integers.iter().enumerate() {
            fixed[j] = target[k] as f64;
            lower[j] = fixed[j];
            upper[j] = fixed[j];
        }
        let mut best = self.evaluate(fixed.clone());
        if integers.len() < self.model.var_count() && !self.expired() {
            let r = self.solve(self.model, lower, upper, fixed);
            if r.status == NlpStatus::LocallyOptimal {
                if let Some(c) = self.evaluate(r.point) {
                    if best.as_ref().is_none_or(|b| c.1 < b.1) {
                        best = Some(c);
                    }
                }
            }
        }
        best
    }

    fn evaluate(&self, point: Vec<f64>) -> Option<(Vec<f64>, f64)> {
        if !self.model.is_feasible_solution(&point) {
            return None;
        }
        let obj = self.model.objective_value(&point).ok().filter(|v| v.is_finite())?;
        Some((point, obj))
    }

    /// Nearest point in L1 distance over the integer variables, restricted
    /// to the model's linear constraints and solved by the tree search.
    fn project(&self, point: &[f64]) -> Option<Vec<i64>> {
        let integers = self.model.integers();
        let mut variables: Vec<Variable> = self
            .model
            .variables()
            .iter()
            .enumerate()
            .map(|(j, v)| Variable {
                lower: self.lower[j],
                upper: self.upper[j],
                ..v.clone()
            })
            .collect();
        let n = variables.len();
        let mut constraints: Vec<RawConstraint> = self
            .model
            .constraints()
            .iter()
            .filter(|c| c.is_linear())
            .map(|c| RawConstraint {
                expr: c.expr().clone(),
                relation: Relation::Le,
                rhs: 0.0,
            })
            .collect();
        for (k, &j) in integers.iter().enumerate() {
            let d = n + k;
            let span = self.upper[j] - self.lower[j];
            variables.push(Variable::continuous(format!("#d{k}"), 0.0, span));
            constraints.push(RawConstraint {
                expr: Expr::var(j) - Expr::var(d),
                relation: Relation::Le,
                rhs: point[j],
            });
            constraints.push(RawConstraint {
                expr: -Expr::var(j) - Expr::var(d),
                relation: Relation::Le,
                rhs: -point[j],
            });
        }
        let raw = RawModel {
            variables,
            sense: Sense::Minimize,
            objective: Expr::Sum((n..n + integers.len()).map(Expr::var).collect()),
            constraints,
        };
        let linear = canonicalize(&raw).ok()?;
        debug_assert!(linear.constraints().iter().all(|c| c.is_linear()));
        let options = SolverOptions {
            branching: engine::BranchingStrategy::PseudoCost,
            traversal: Traversal::BestFirst,
            gap_tolerance: PROJECTION_GAP,
            time_limit: PROJECTION_TIME.min(self.remaining()),
            pump: PumpMode::Off,
            workers: 1,
            ..SolverOptions::default()
        };
        let result = engine::solve(&linear, &options);
        let y = result.point()?;
        Some(integers.iter().map(|&j| y[j].round() as i64).collect())
    }
}

fn rounded(model: &Model, point: &[f64], lower: &[f64], upper: &[f64]) -> Vec<i64> {
    model
        .integers()
        .iter()
        .map(|&j| point[j].round().clamp(lower[j], upper[j]) as i64)
        .collect()
}

/// Runs the pump within `[lower, upper]` (intersected with the model's
/// bounds, integer bounds rounded inward) for at most `time_limit` seconds
/// and [`MAX_ITERATIONS`] iterations. Subsolver failures and empty boxes end
/// the pump without a result.
pub fn pump(model: &Model, lower: &[f64], upper: &[f64], mode: PumpMode, time_limit: f64, seed: u64) -> PumpReport {
    let started = Instant::now();
    let mut report = PumpReport {
        mode,
        incumbent: None,
        iterations: 0,
        projections: 0,
        cycles: 0,
        elapsed: 0.0,
        timed_out: false,
    };
    if mode == PumpMode::Off || time_limit.is_nan() || time_limit <= 0.0 {
        report.timed_out = mode != PumpMode::Off;
        return report;
    }
    let mut lower: Vec<f64> = lower.iter().zip(model.lower()).map(|(a, b)| a.max(*b)).collect();
    let mut upper: Vec<f64> = upper.iter().zip(model.upper()).map(|(a, b)| a.min(*b)).collect();
    for &j in model.integers() {
        lower[j] = (lower[j] - BOX_TOLERANCE).ceil();
        upper[j] = (upper[j] + BOX_TOLERANCE).floor();
    }
    if lower.iter().zip(&upper).any(|(l, u)| l > u) {
        report.elapsed = started.elapsed().as_secs_f64();
        return report;
    }
    let state = Pump {
        model,
        lower: &lower,
        upper: &upper,
        deadline: deadline_after(started, time_limit),
    };
    let found = run(&state, mode, seed, &mut report);
    report.elapsed = started.elapsed().as_secs_f64();
    report.timed_out = found.is_none() && state.expired();
    report.incumbent = found.map(|(point, objective)| {
        assert!(
            model.is_feasible_solution(&point),
            "pump produced an infeasible incumbent"
        );
        Incumbent {
            point,
            objective,
            found_at: report.elapsed,
            node: None,
            source: IncumbentSource::FeasibilityPump,
        }
    });
    report
}

fn run(state: &Pump<'_>, mode: PumpMode, seed: u64, report: &mut PumpReport) -> Option<(Vec<f64>, f64)> {
    let model = state.model;
    let integers = model.integers();
    let int_lower: Vec<f64> = integers.iter().map(|&j| state.lower[j]).collect();
    let int_upper: Vec<f64> = integers.iter().map(|&j| state.upper[j]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut history: HashSet<Vec<i64>> = HashSet::new();

    let start = engine::root_restart(state.lower, state.upper, 1, 1, seed).expect("first attempt");
    let first = state.solve(model, state.lower.to_vec(), state.upper.to_vec(), start);
    if first.status != NlpStatus::LocallyOptimal {
        return None;
    }
    let mut point = first.point;

    while report.iterations < MAX_ITERATIONS && !state.expired() {
        report.iterations += 1;
        let integral = integers
            .iter()
            .all(|&j| (point[j] - point[j].round()).abs() <= INTEGRALITY_TOL);
        let near = rounded(model, &point, state.lower, state.upper);
        if integral
            || integers
                .iter()
                .zip(&near)
                .all(|(&j, t)| (point[j] - *t as f64).abs() <= SNAP_DISTANCE)
        {
            if let Some(found) = state.complete(&near, &point) {
                return Some(found);
            }
        }

        let mut target = match mode {
            PumpMode::MipProjection => {
                report.projections += 1;
                state
                    .project(&point)
                    .unwrap_or_else(|| rounded(model, &point, state.lower, state.upper))
            }
            _ => near,
        };
        if history.contains(&target) {
            report.cycles += 1;
            let nlp: Vec<f64> = integers.iter().map(|&j| point[j]).collect();
            target = perturb(&target, &nlp, &int_lower, &int_upper, &history, &mut rng);
        }
        history.insert(target.clone());
        if let Some(found) = state.complete(&target, &point) {
            return Some(found);
        }
        if state.expired() {
            break;
        }

        let distance = Expr::Sum(
            integers
                .iter()
                .zip(&target)
                .map(|(&j, &t)| (Expr::var(j) - Expr::constant(t as f64)).powi(2))
                .collect(),
        );
        let step = state.solve(
            &model.with_objective(distance),
            state.lower.to_vec(),
            state.upper.to_vec(),
            point,
        );
        match step.status {
            NlpStatus::Infeasible | NlpStatus::NumericalError => return None,
            _ => point = step.point,
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::code_block;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn perturb_flips_the_farthest() {
        let out = perturb(
            &[1, 1, 1],
            &[1.4, 1.1, 0.7],
            &[0.0; 3],
            &[5.0; 3],
            &HashSet::new(),
            &mut rng(),
        );
        assert_eq!(out, vec![2, 1, 1]);
    }

    #[test]
    fn perturb_skips_out_of_bound_flips() {
        let out = perturb(
            &[5, 1, 1],
            &[5.4, 1.1, 0.7],
            &[0.0; 3],
            &[5.0; 3],
            &HashSet::new(),
            &mut rng(),
        );
        assert_eq!(out, vec![5, 1, 0]);
    }

    #[test]
    fn perturb_random_flip_is_seeded() {
        let target = [2, 2, 2];
        let a = perturb(&target, &[2.0; 3], &[0.0; 3], &[4.0; 3], &HashSet::new(), &mut rng());
        let b = perturb(&target, &[2.0; 3], &[0.0; 3], &[4.0; 3], &HashSet::new(), &mut rng());
        assert_eq!(a, b);
        let moved: i64 = a.iter().zip(&target).map(|(x, y)| (x - y).abs()).sum();
        assert_eq!(moved, 1);
    }

    #[test]
    fn zero_budget_returns_nothing() {
        let m = code_block();
        let r = pump(&m, m.lower(), m.upper(), PumpMode::Rounding, 0.0, 0);
        assert!(r.incumbent.is_none());
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn integer_box_without_integers_returns_nothing() {
        let m = code_block();
        let mut lower = m.lower().to_vec();
        let mut upper = m.upper().to_vec();
        lower[0] = 0.25;
        upper[0] = 0.75;
        let r = pump(&m, &lower, &upper, PumpMode::MipProjection, 10.0, 0);
        assert!(r.incumbent.is_none());
        assert!(!r.timed_out);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn code_block_pump_is_feasible() {
        let m = code_block();
        for mode in [PumpMode::Rounding, PumpMode::MipProjection] {
            let r = pump(&m, m.lower(), m.upper(), mode, 30.0, 0);
            let inc = r.incumbent.expect("pump finds a point");
            assert!(m.is_feasible_solution(&inc.point));
            // Canonical optimum is -184.
            assert!(inc.objective >= -184.0 - 1e-9);
        }
    }
}

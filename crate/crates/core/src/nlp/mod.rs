//! Local NLP subsolver for continuous relaxations.
//!
//! Relaxations are bound-constrained smooth problems with inequality
//! constraints `g(x) <= 0`. They are solved with an augmented-Lagrangian
//! outer loop whose subproblems are handled by a projected limited-memory
//! quasi-Newton method. Infeasibility is decided by a separate restoration
//! phase that minimizes the squared constraint violation.

mod boxmin;

use serde::{Deserialize, Serialize};
use web_time::{Duration, Instant};

use crate::model::{Model, TapeWorkspace};
use boxmin::{minimize_box, projected_gradient_norm, BoxOptions, BoxStatus, Smooth};

/// Projected-gradient (KKT) tolerance, relative to `max(1, |∇f|∞)`.
pub const OPTIMALITY_TOL: f64 = 1e-6;
/// Maximum constraint violation accepted as feasible.
pub const FEASIBILITY_TOL: f64 = 1e-6;
/// Penalty parameter cap.
pub const MAX_PENALTY: f64 = 1e8;
const INITIAL_PENALTY: f64 = 10.0;
/// Target margin used by the restoration phase so that restored points are
/// strictly inside the feasible set.
const RESTORATION_MARGIN: f64 = 1e-7;
/// Fallback KKT level accepted when the outer iteration budget runs out on a
/// feasible point.
const ACCEPTABLE_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NlpStatus {
    LocallyOptimal,
    Infeasible,
    IterationLimit,
    NumericalError,
}

impl NlpStatus {
    /// Statuses the tree search treats as a failed relaxation.
    pub fn is_failure(self) -> bool {
        matches!(self, NlpStatus::IterationLimit | NlpStatus::NumericalError)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NlpLimits {
    pub max_outer: usize,
    pub max_inner: usize,
    /// Wall-clock budget for this solve.
    pub time_budget: Option<Duration>,
}

impl Default for NlpLimits {
    fn default() -> Self {
        NlpLimits {
            max_outer: 50,
            max_inner: 500,
            time_budget: None,
        }
    }
}

impl NlpLimits {
    pub fn with_budget(budget: Duration) -> Self {
        NlpLimits {
            time_budget: Some(budget),
            ..NlpLimits::default()
        }
    }
}

/// A continuous relaxation: the model with node-local bounds and a start.
#[derive(Debug, Clone)]
pub struct NlpProblem<'a> {
    pub model: &'a Model,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub start: Vec<f64>,
}

impl<'a> NlpProblem<'a> {
    /// The relaxation over the model's own bounds.
    pub fn new(model: &'a Model, start: Vec<f64>) -> Self {
        NlpProblem {
            model,
            lower: model.lower().to_vec(),
            upper: model.upper().to_vec(),
            start,
        }
    }

    pub fn with_bounds(model: &'a Model, lower: Vec<f64>, upper: Vec<f64>, start: Vec<f64>) -> Self {
        debug_assert!(lower.iter().zip(model.lower()).all(|(a, b)| a >= b));
        debug_assert!(upper.iter().zip(model.upper()).all(|(a, b)| a <= b));
        NlpProblem {
            model,
            lower,
            upper,
            start,
        }
    }

    fn clipped_start(&self) -> Vec<f64> {
        self.start
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(x, (l, u))| {
                let x = if x.is_finite() { *x } else { 0.0 };
                x.clamp(*l, *u)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NlpResult {
    pub status: NlpStatus,
    pub point: Vec<f64>,
    /// Canonical objective at `point`.
    pub objective: f64,
    /// `max_c max(0, g_c(point))`.
    pub violation: f64,
    pub iterations: usize,
    pub wall_time: Duration,
}

struct Evaluator<'a> {
    model: &'a Model,
    ws: TapeWorkspace,
    values: Vec<f64>,
}

impl<'a> Evaluator<'a> {
    fn new(model: &'a Model) -> Self {
        Evaluator {
            model,
            ws: TapeWorkspace::default(),
            values: vec![0.0; model.constraints().len()],
        }
    }

    /// Fills `values` with g(x); returns the max violation, or `None` when
    /// any constraint cannot be evaluated.
    fn constraint_values(&mut self, x: &[f64]) -> Option<f64> {
        let mut worst: f64 = 0.0;
        for (i, c) in self.model.constraints().iter().enumerate() {
            let v = c.tape().value(x, &mut self.ws).ok()?;
            self.values[i] = v;
            worst = worst.max(v);
        }
        Some(worst)
    }

    fn objective(&mut self, x: &[f64]) -> Option<f64> {
        self.model.objective_tape().value(x, &mut self.ws).ok()
    }
}

/// `f(x) + 1/(2ρ) Σ [max(0, λ + ρ g)² − λ²]`
struct AugmentedLagrangian<'a> {
    eval: Evaluator<'a>,
    multipliers: Vec<f64>,
    penalty: f64,
}

impl Smooth for AugmentedLagrangian<'_> {
    fn eval(&mut self, x: &[f64], grad: &mut [f64]) -> Option<f64> {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let ev = &mut self.eval;
        let mut value = ev
            .model
            .objective_tape()
            .accumulate_gradient(x, 1.0, grad, &mut ev.ws)
            .ok()?;
        let rho = self.penalty;
        for (i, c) in ev.model.constraints().iter().enumerate() {
            let lambda = self.multipliers[i];
            let g = c.tape().value(x, &mut ev.ws).ok()?;
            let shifted = lambda + rho * g;
            if shifted > 0.0 {
                value += (shifted * shifted - lambda * lambda) / (2.0 * rho);
                c.tape().accumulate_gradient(x, shifted, grad, &mut ev.ws).ok()?;
            } else {
                value -= lambda * lambda / (2.0 * rho);
            }
        }
        value.is_finite().then_some(value)
    }
}

/// `Σ max(0, g + margin)²`
struct Restoration<'a> {
    eval: Evaluator<'a>,
}

impl Smooth for Restoration<'_> {
    fn eval(&mut self, x: &[f64], grad: &mut [f64]) -> Option<f64> {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let ev = &mut self.eval;
        let mut value = 0.0;
        for c in ev.model.constraints() {
            let g = c.tape().value(x, &mut ev.ws).ok()? + RESTORATION_MARGIN;
            if g > 0.0 {
                value += g * g;
                c.tape().accumulate_gradient(x, 2.0 * g, grad, &mut ev.ws).ok()?;
            }
        }
        value.is_finite().then_some(value)
    }
}

fn finish(status: NlpStatus, model: &Model, point: Vec<f64>, iterations: usize, started: Instant) -> NlpResult {
    let objective = model.objective_value(&point).unwrap_or(f64::NAN);
    let violation = model.max_violation(&point);
    let status = if status == NlpStatus::LocallyOptimal && !objective.is_finite() {
        NlpStatus::NumericalError
    } else {
        status
    };
    NlpResult {
        status,
        point,
        objective,
        violation,
        iterations,
        wall_time: started.elapsed(),
    }
}

fn deadline(started: Instant, limits: &NlpLimits) -> Option<Instant> {
    limits.time_budget.map(|b| started + b)
}

fn restore(problem: &NlpProblem<'_>, x: &mut [f64], limits: &NlpLimits, started: Instant) -> Result<(usize, f64), ()> {
    let mut obj = Restoration {
        eval: Evaluator::new(problem.model),
    };
    let opts = BoxOptions {
        max_iter: limits.max_inner * 4,
        tol: 1e-14,
        memory: 10,
        deadline: deadline(started, limits),
    };
    let outcome = minimize_box(&mut obj, x, &problem.lower, &problem.upper, opts).map_err(|_| ())?;
    let violation = obj.eval.constraint_values(x).ok_or(())?;
    Ok((outcome.iterations, violation))
}

/// Minimizes the squared constraint violation `Σ max(g_c, 0)²` within the
/// bounds and reports the violation reached. The status is
/// `LocallyOptimal` when the point is feasible and `Infeasible` otherwise.
pub fn restoration_solve(problem: &NlpProblem<'_>) -> NlpResult {
    restoration_solve_with(problem, &NlpLimits::default())
}

pub fn restoration_solve_with(problem: &NlpProblem<'_>, limits: &NlpLimits) -> NlpResult {
    let started = Instant::now();
    let mut x = problem.clipped_start();
    match restore(problem, &mut x, limits, started) {
        Ok((iterations, violation)) => {
            let status = if violation <= FEASIBILITY_TOL {
                NlpStatus::LocallyOptimal
            } else {
                NlpStatus::Infeasible
            };
            finish(status, problem.model, x, iterations, started)
        }
        Err(()) => finish(NlpStatus::NumericalError, problem.model, x, 0, started),
    }
}

/// Solves the relaxation from the (clipped) start point.
///
/// An infeasible start first goes through restoration; if that stalls above
/// the feasibility tolerance the problem is declared `Infeasible`. From a
/// feasible point the augmented-Lagrangian loop runs until the projected
/// Lagrangian gradient and the violation are both within tolerance.
pub fn solve_nlp(problem: &NlpProblem<'_>, limits: &NlpLimits) -> NlpResult {
    let started = Instant::now();
    let model = problem.model;
    let mut x = problem.clipped_start();
    let mut iterations = 0;

    let mut eval = Evaluator::new(model);
    let start_violation = match eval.constraint_values(&x) {
        Some(v) if eval.objective(&x).is_some() => v,
        _ => f64::INFINITY,
    };
    if start_violation > FEASIBILITY_TOL {
        match restore(problem, &mut x, limits, started) {
            Ok((its, violation)) => {
                iterations += its;
                if violation > FEASIBILITY_TOL {
                    let timed_out = deadline(started, limits).is_some_and(|d| Instant::now() >= d);
                    let status = if timed_out {
                        NlpStatus::IterationLimit
                    } else {
                        NlpStatus::Infeasible
                    };
                    return finish(status, model, x, iterations, started);
                }
            }
            Err(()) => return finish(NlpStatus::NumericalError, model, x, iterations, started),
        }
    }

    let m = model.constraints().len();
    let mut al = AugmentedLagrangian {
        eval: Evaluator::new(model),
        multipliers: vec![0.0; m],
        penalty: INITIAL_PENALTY,
    };
    let mut grad = vec![0.0; model.var_count()];
    let mut previous_violation = f64::INFINITY;
    let mut kkt = f64::INFINITY;
    let mut violation = f64::INFINITY;
    let mut scale = 1.0;

    for outer in 0..limits.max_outer {
        grad.iter_mut().for_each(|g| *g = 0.0);
        if model
            .objective_tape()
            .accumulate_gradient(&x, 1.0, &mut grad, &mut al.eval.ws)
            .is_err()
        {
            return finish(NlpStatus::NumericalError, model, x, iterations, started);
        }
        scale = grad.iter().fold(1.0_f64, |a, g| a.max(g.abs()));
        let inner_tol = (0.5 * OPTIMALITY_TOL * scale).max(1e-2 * scale * 0.1_f64.powi(outer as i32));
        let opts = BoxOptions {
            max_iter: limits.max_inner,
            tol: inner_tol,
            memory: 10,
            deadline: deadline(started, limits),
        };
        let outcome = match minimize_box(&mut al, &mut x, &problem.lower, &problem.upper, opts) {
            Ok(o) => o,
            Err(_) => return finish(NlpStatus::NumericalError, model, x, iterations, started),
        };
        iterations += outcome.iterations;

        let Some(v) = al.eval.constraint_values(&x) else {
            return finish(NlpStatus::NumericalError, model, x, iterations, started);
        };
        violation = v.max(0.0);
        for i in 0..m {
            al.multipliers[i] = (al.multipliers[i] + al.penalty * al.eval.values[i]).max(0.0);
        }
        kkt = lagrangian_pg(
            model,
            &x,
            &al.multipliers,
            &problem.lower,
            &problem.upper,
            &mut al.eval.ws,
        )
        .unwrap_or(f64::INFINITY);
        if violation <= FEASIBILITY_TOL && kkt <= OPTIMALITY_TOL * scale {
            return finish(NlpStatus::LocallyOptimal, model, x, iterations, started);
        }
        if outcome.status == BoxStatus::Timeout {
            break;
        }
        if violation > FEASIBILITY_TOL && violation > 0.25 * previous_violation {
            al.penalty = (al.penalty * 10.0).min(MAX_PENALTY);
        }
        previous_violation = violation;
    }

    let timed_out = deadline(started, limits).is_some_and(|d| Instant::now() >= d);
    if violation <= FEASIBILITY_TOL && kkt <= ACCEPTABLE_TOL * scale && !timed_out {
        return finish(NlpStatus::LocallyOptimal, model, x, iterations, started);
    }
    if violation > FEASIBILITY_TOL && !timed_out {
        // Decide between infeasible and stuck via restoration from here.
        if let Ok((its, restored)) = restore(problem, &mut x.clone(), limits, started) {
            iterations += its;
            if restored > FEASIBILITY_TOL {
                return finish(NlpStatus::Infeasible, model, x, iterations, started);
            }
        }
    }
    finish(NlpStatus::IterationLimit, model, x, iterations, started)
}

/// Projected-gradient norm of `∇f + Σ λ_c ∇g_c`.
fn lagrangian_pg(
    model: &Model,
    x: &[f64],
    multipliers: &[f64],
    lower: &[f64],
    upper: &[f64],
    ws: &mut TapeWorkspace,
) -> Option<f64> {
    let mut grad = vec![0.0; x.len()];
    model.objective_tape().accumulate_gradient(x, 1.0, &mut grad, ws).ok()?;
    for (c, &lambda) in model.constraints().iter().zip(multipliers) {
        if lambda > 0.0 {
            c.tape().accumulate_gradient(x, lambda, &mut grad, ws).ok()?;
        }
    }
    Some(projected_gradient_norm(x, &grad, lower, upper))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::code_block;
    use crate::model::{canonicalize, Expr, RawConstraint, RawModel, Relation, Sense, Variable};

    fn single(lower: f64, upper: f64, objective: Expr, constraints: Vec<RawConstraint>) -> Model {
        canonicalize(&RawModel {
            variables: vec![Variable::continuous("x0", lower, upper)],
            sense: Sense::Minimize,
            objective,
            constraints,
        })
        .unwrap()
    }

    #[test]
    fn unconstrained_quadratic() {
        let m = single(-1.0, 1.0, Expr::var(0).powi(2), vec![]);
        let r = solve_nlp(&NlpProblem::new(&m, vec![0.7]), &NlpLimits::default());
        assert_eq!(r.status, NlpStatus::LocallyOptimal);
        assert!(r.point[0].abs() < 1e-6);
        assert!(r.objective.abs() < 1e-12);
    }

    fn empty_feasible_set() -> Model {
        single(
            0.0,
            1.0,
            Expr::var(0),
            vec![RawConstraint {
                expr: Expr::var(0) + Expr::Const(1.0),
                relation: Relation::Le,
                rhs: 0.0,
            }],
        )
    }

    #[test]
    fn empty_feasible_set_is_infeasible() {
        let m = empty_feasible_set();
        let r = solve_nlp(&NlpProblem::new(&m, vec![0.5]), &NlpLimits::default());
        assert_eq!(r.status, NlpStatus::Infeasible);
    }

    #[test]
    fn restoration_closest_point() {
        let m = empty_feasible_set();
        let r = restoration_solve(&NlpProblem::new(&m, vec![0.5]));
        assert_eq!(r.status, NlpStatus::Infeasible);
        assert_eq!(r.point, vec![0.0]);
        assert!((r.violation - 1.0).abs() < 1e-12);
    }

    #[test]
    fn restoration_keeps_feasible_start() {
        let m = code_block();
        let r = restoration_solve(&NlpProblem::new(&m, vec![1.0, 0.0, 0.0, 1.0, 1.0]));
        assert_eq!(r.status, NlpStatus::LocallyOptimal);
        assert_eq!(r.violation, 0.0);
        assert_eq!(r.point, vec![1.0, 0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn restoration_at_fixed_infeasible_assignment() {
        // All variables fixed to 10: the only point in the box is infeasible
        // with g = (50 - 6, 100·Σw - 300) = (44, 10900).
        let m = code_block();
        let p = NlpProblem::with_bounds(&m, vec![10.0; 5], vec![10.0; 5], vec![5.0; 5]);
        let r = restoration_solve(&p);
        assert_eq!(r.status, NlpStatus::Infeasible);
        assert_eq!(r.point, vec![10.0; 5]);
        assert_eq!(r.violation, 10_900.0);
        assert_eq!(m.infeasibility(&r.point), 44.0_f64.powi(2) + 10_900.0_f64.powi(2));
    }

    #[test]
    fn start_point_is_clipped() {
        let m = single(2.0, 3.0, Expr::var(0).powi(2), vec![]);
        let r = solve_nlp(&NlpProblem::new(&m, vec![-50.0]), &NlpLimits::default());
        assert_eq!(r.status, NlpStatus::LocallyOptimal);
        assert_eq!(r.point, vec![2.0]);
    }

    #[test]
    fn domain_error_at_start_is_numerical() {
        let m = single(-2.0, -1.0, Expr::var(0).ln(), vec![]);
        let r = solve_nlp(&NlpProblem::new(&m, vec![-1.5]), &NlpLimits::default());
        assert_eq!(r.status, NlpStatus::NumericalError);
    }

    #[test]
    fn deterministic() {
        let m = code_block();
        let p = NlpProblem::new(&m, vec![5.0; 5]);
        let a = solve_nlp(&p, &NlpLimits::default());
        let b = solve_nlp(&p, &NlpLimits::default());
        assert_eq!(a.point, b.point);
        assert_eq!(a.iterations, b.iterations);
    }

    /// Dual function of the continuous Code Block relaxation (maximize form):
    /// q(μ) = 6μ₁ + 300μ₂ + Σᵢ max_{x∈[0,10]} (vᵢ − μ₁)x − μ₂wᵢx².
    fn dual(mu1: f64, mu2: f64) -> f64 {
        use crate::model::fixtures::{VALUES, WEIGHTS};
        let mut q = 6.0 * mu1 + 300.0 * mu2;
        for i in 0..5 {
            let a = VALUES[i] - mu1;
            let x: f64 = if mu2 > 0.0 {
                (a / (2.0 * mu2 * WEIGHTS[i])).clamp(0.0, 10.0)
            } else if a > 0.0 {
                10.0
            } else {
                0.0
            };
            q += a * x - mu2 * WEIGHTS[i] * x * x;
        }
        q
    }

    /// Minimizes the convex dual by repeated grid refinement.
    fn relaxation_oracle() -> f64 {
        let (mut c1, mut c2, mut r1, mut r2) = (25.0, 2.5, 25.0, 2.5);
        let mut best = f64::INFINITY;
        for _ in 0..60 {
            let mut arg = (c1, c2);
            for a in 0..=40 {
                for b in 0..=40 {
                    let m1 = (c1 - r1 + 2.0 * r1 * a as f64 / 40.0).max(0.0);
                    let m2 = (c2 - r2 + 2.0 * r2 * b as f64 / 40.0).max(0.0);
                    let q = dual(m1, m2);
                    if q < best {
                        best = q;
                        arg = (m1, m2);
                    }
                }
            }
            (c1, c2) = arg;
            r1 *= 0.5;
            r2 *= 0.5;
        }
        -best
    }

    #[test]
    fn code_block_relaxation_matches_dual_oracle() {
        let oracle = relaxation_oracle();
        // Frozen from the oracle above (and an independent SQP run).
        assert!((oracle - (-192.875_543_176)).abs() < 1e-6, "oracle {oracle}");
        let m = code_block();
        let r = solve_nlp(&NlpProblem::new(&m, vec![5.0; 5]), &NlpLimits::default());
        assert_eq!(r.status, NlpStatus::LocallyOptimal);
        assert!((r.objective - oracle).abs() <= 1e-4, "{} vs {oracle}", r.objective);
        assert!(r.violation <= 1e-6);
        assert!(m.max_bound_violation(&r.point) <= 1e-8);
    }
}

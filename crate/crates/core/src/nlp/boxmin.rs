//! Bound-constrained minimization by projected limited-memory quasi-Newton
//! steps with a backtracking (Armijo) line search along the projection arc.

use std::collections::VecDeque;

use web_time::Instant;

/// A smooth function with gradient. Returns `None` when the function cannot
/// be evaluated (domain error or non-finite value) at `x`.
pub(crate) trait Smooth {
    fn eval(&mut self, x: &[f64], grad: &mut [f64]) -> Option<f64>;
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct BoxOptions {
    pub max_iter: usize,
    /// Stop when the projected-gradient infinity norm falls below this.
    pub tol: f64,
    pub memory: usize,
    pub deadline: Option<Instant>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum BoxStatus {
    Converged,
    IterationLimit,
    /// No further decrease possible at working precision.
    Stalled,
    Timeout,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct BoxOutcome {
    pub status: BoxStatus,
    pub iterations: usize,
}

/// The objective could not be evaluated at the starting point.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StartFailure;

pub(crate) fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((xi, l), u) in x.iter_mut().zip(lower).zip(upper) {
        *xi = xi.clamp(*l, *u);
    }
}

pub(crate) fn projected_gradient_norm(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    let mut norm: f64 = 0.0;
    for j in 0..x.len() {
        let step = (x[j] - g[j]).clamp(lower[j], upper[j]) - x[j];
        norm = norm.max(step.abs());
    }
    norm
}

fn dot_masked(a: &[f64], b: &[f64], free: &[bool]) -> f64 {
    a.iter()
        .zip(b)
        .zip(free)
        .filter(|(_, f)| **f)
        .map(|((x, y), _)| x * y)
        .sum()
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// Minimizes `f` over the box starting from `x` (projected first). `x` holds
/// the final iterate on return.
pub(crate) fn minimize_box<F: Smooth>(
    f: &mut F,
    x: &mut [f64],
    lower: &[f64],
    upper: &[f64],
    opts: BoxOptions,
) -> Result<BoxOutcome, StartFailure> {
    let n = x.len();
    project(x, lower, upper);
    let mut g = vec![0.0; n];
    let mut fx = f.eval(x, &mut g).ok_or(StartFailure)?;

    let mut memory: VecDeque<Pair> = VecDeque::with_capacity(opts.memory);
    let mut free = vec![true; n];
    let mut dir = vec![0.0; n];
    let mut alphas = vec![0.0; opts.memory];
    let mut trial = vec![0.0; n];
    let mut g_trial = vec![0.0; n];

    let mut iterations = 0;
    loop {
        let pg = projected_gradient_norm(x, &g, lower, upper);
        let outcome = |status| BoxOutcome { status, iterations };
        if pg <= opts.tol {
            return Ok(outcome(BoxStatus::Converged));
        }
        if iterations >= opts.max_iter {
            return Ok(outcome(BoxStatus::IterationLimit));
        }
        if opts.deadline.is_some_and(|d| Instant::now() >= d) {
            return Ok(outcome(BoxStatus::Timeout));
        }
        iterations += 1;

        for j in 0..n {
            let at_lower = x[j] <= lower[j] && g[j] > 0.0;
            let at_upper = x[j] >= upper[j] && g[j] < 0.0;
            free[j] = lower[j] < upper[j] && !at_lower && !at_upper;
        }

        let mut steepest = memory.is_empty();
        if !steepest {
            // Two-loop recursion restricted to the free variables.
            for j in 0..n {
                dir[j] = if free[j] { g[j] } else { 0.0 };
            }
            for (k, pair) in memory.iter().enumerate().rev() {
                let a = pair.rho * dot_masked(&pair.s, &dir, &free);
                alphas[k] = a;
                for j in 0..n {
                    if free[j] {
                        dir[j] -= a * pair.y[j];
                    }
                }
            }
            let last = memory.back().unwrap();
            let yy = dot_masked(&last.y, &last.y, &free);
            let gamma = if yy > 0.0 {
                dot_masked(&last.s, &last.y, &free) / yy
            } else {
                1.0
            };
            let gamma = if gamma.is_finite() && gamma > 0.0 { gamma } else { 1.0 };
            for d in dir.iter_mut() {
                *d *= gamma;
            }
            for (k, pair) in memory.iter().enumerate() {
                let b = pair.rho * dot_masked(&pair.y, &dir, &free);
                for j in 0..n {
                    if free[j] {
                        dir[j] += pair.s[j] * (alphas[k] - b);
                    }
                }
            }
            for d in dir.iter_mut() {
                *d = -*d;
            }
            let slope = dot_masked(&g, &dir, &free);
            if slope.is_nan() || slope >= 0.0 || dir.iter().any(|d| !d.is_finite()) {
                steepest = true;
            }
        }

        let mut accepted = false;
        for attempt in 0..2 {
            if steepest {
                let gmax = (0..n).filter(|&j| free[j]).map(|j| g[j].abs()).fold(0.0, f64::max);
                let scale = if memory.is_empty() && gmax > 1.0 {
                    1.0 / gmax
                } else {
                    1.0
                };
                for j in 0..n {
                    dir[j] = if free[j] { -g[j] * scale } else { 0.0 };
                }
            }
            let mut step = 1.0;
            for _ in 0..60 {
                for j in 0..n {
                    trial[j] = (x[j] + step * dir[j]).clamp(lower[j], upper[j]);
                }
                let mut decrease = 0.0;
                let mut moved = false;
                for j in 0..n {
                    let s = trial[j] - x[j];
                    decrease += g[j] * s;
                    moved |= s != 0.0;
                }
                if !moved {
                    break;
                }
                if decrease < 0.0 {
                    if let Some(ft) = f.eval(&trial, &mut g_trial) {
                        if ft <= fx + 1e-4 * decrease {
                            debug_assert!(ft <= fx, "line search increased the merit value");
                            accepted = true;
                            let mut s = vec![0.0; n];
                            let mut y = vec![0.0; n];
                            for j in 0..n {
                                s[j] = trial[j] - x[j];
                                y[j] = g_trial[j] - g[j];
                            }
                            let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
                            let yy: f64 = y.iter().map(|v| v * v).sum();
                            if sy > 1e-12 * yy && sy > 0.0 {
                                if memory.len() == opts.memory {
                                    memory.pop_front();
                                }
                                memory.push_back(Pair { s, y, rho: 1.0 / sy });
                            }
                            let stalled = (fx - ft).abs() <= 1e-15 * (1.0 + fx.abs());
                            x.copy_from_slice(&trial);
                            g.copy_from_slice(&g_trial);
                            fx = ft;
                            if stalled {
                                let pg = projected_gradient_norm(x, &g, lower, upper);
                                let status = if pg <= opts.tol {
                                    BoxStatus::Converged
                                } else {
                                    BoxStatus::Stalled
                                };
                                return Ok(BoxOutcome { status, iterations });
                            }
                            break;
                        }
                    }
                }
                step *= 0.5;
            }
            if accepted || (steepest && attempt == 0 && memory.is_empty()) {
                break;
            }
            // Quasi-Newton direction failed: drop the memory and retry along
            // the projected steepest descent direction.
            memory.clear();
            steepest = true;
        }
        if !accepted {
            let pg = projected_gradient_norm(x, &g, lower, upper);
            return Ok(BoxOutcome {
                status: if pg <= opts.tol {
                    BoxStatus::Converged
                } else {
                    BoxStatus::Stalled
                },
                iterations,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Rosenbrock;

    impl Smooth for Rosenbrock {
        fn eval(&mut self, x: &[f64], g: &mut [f64]) -> Option<f64> {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            Some((1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2))
        }
    }

    fn opts() -> BoxOptions {
        BoxOptions {
            max_iter: 2000,
            tol: 1e-9,
            memory: 8,
            deadline: None,
        }
    }

    #[test]
    fn unconstrained_rosenbrock() {
        let mut x = vec![-1.2, 1.0];
        let inf = f64::INFINITY;
        let out = minimize_box(&mut Rosenbrock, &mut x, &[-inf, -inf], &[inf, inf], opts()).unwrap();
        assert_eq!(out.status, BoxStatus::Converged);
        assert!((x[0] - 1.0).abs() < 1e-6 && (x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn active_upper_bound() {
        // Minimum of Rosenbrock with x0 <= 0.5 lies on the bound at (0.5, 0.25).
        let mut x = vec![-1.2, 1.0];
        let out = minimize_box(&mut Rosenbrock, &mut x, &[-2.0, -2.0], &[0.5, 2.0], opts()).unwrap();
        assert_eq!(out.status, BoxStatus::Converged);
        assert_eq!(x[0], 0.5);
        assert!((x[1] - 0.25).abs() < 1e-7);
    }

    #[test]
    fn start_outside_domain_fails() {
        struct Never;
        impl Smooth for Never {
            fn eval(&mut self, _: &[f64], _: &mut [f64]) -> Option<f64> {
                None
            }
        }
        let mut x = vec![0.0];
        assert!(minimize_box(&mut Never, &mut x, &[0.0], &[1.0], opts()).is_err());
    }
}

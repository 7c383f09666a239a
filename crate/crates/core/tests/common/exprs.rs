//! Random expressions and a finite-difference reference gradient.

use nlbb::model::{Expr, Func};
use rand::Rng;

const EXPONENTS: [f64; 6] = [2.0, 3.0, -1.0, 0.5, 1.5, -2.0];
const FUNCS: [Func; 5] = [Func::Exp, Func::Log, Func::Sin, Func::Cos, Func::Sqrt];

/// Random tree of depth at most `depth` over `vars` variables.
pub fn random_expr<R: Rng>(rng: &mut R, depth: usize, vars: usize) -> Expr {
    if depth <= 1 || rng.gen_bool(0.2) {
        return if rng.gen_bool(0.7) {
            Expr::Var(rng.gen_range(0..vars))
        } else {
            Expr::Const(rng.gen_range(-3.0..3.0))
        };
    }
    let sub = |rng: &mut R| random_expr(rng, depth - 1, vars);
    match rng.gen_range(0..6) {
        0 => Expr::Sum((0..rng.gen_range(2..=3)).map(|_| sub(rng)).collect()),
        1 => Expr::Product((0..rng.gen_range(2..=3)).map(|_| sub(rng)).collect()),
        2 => Expr::Pow(Box::new(sub(rng)), EXPONENTS[rng.gen_range(0..EXPONENTS.len())]),
        3 => Expr::Neg(Box::new(sub(rng))),
        4 => Expr::Div(Box::new(sub(rng)), Box::new(sub(rng))),
        _ => Expr::Unary(FUNCS[rng.gen_range(0..FUNCS.len())], Box::new(sub(rng))),
    }
}

/// The point is away from every singularity of `e`: all intermediate values
/// are at most 1e3 in magnitude and every denominator, log/sqrt argument and
/// fractional-power base is at least 0.1 away from its domain boundary.
/// Pairs failing this are resampled rather than compared.
pub fn well_conditioned(e: &Expr, x: &[f64]) -> bool {
    let Ok(v) = e.evaluate(x) else { return false };
    if v.abs() > 1e3 {
        return false;
    }
    let ok = match e {
        Expr::Div(_, d) => d.evaluate(x).is_ok_and(|d| d.abs() >= 0.1),
        Expr::Unary(Func::Log | Func::Sqrt, a) => a.evaluate(x).is_ok_and(|a| a >= 0.1),
        Expr::Pow(b, p) if p.fract() != 0.0 || *p < 0.0 => {
            b.evaluate(x)
                .is_ok_and(|b| if p.fract() != 0.0 { b >= 0.1 } else { b.abs() >= 0.1 })
        }
        _ => true,
    };
    ok && e.children().into_iter().all(|c| well_conditioned(c, x))
}

/// Central differences with step `h`.
pub fn central_difference(e: &Expr, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            let mut hi = x.to_vec();
            let mut lo = x.to_vec();
            hi[j] += h;
            lo[j] -= h;
            (e.evaluate(&hi).unwrap() - e.evaluate(&lo).unwrap()) / (2.0 * h)
        })
        .collect()
}

/// Largest componentwise `|a - b| / max(1, |a|)`.
pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(a, b)| (a - b).abs() / a.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Draws a well-conditioned (expression, point) pair over `vars` variables.
pub fn random_pair<R: Rng>(rng: &mut R, vars: usize) -> (Expr, Vec<f64>) {
    loop {
        let depth = rng.gen_range(1..=6);
        let e = random_expr(rng, depth, vars);
        let x: Vec<f64> = (0..vars).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let h = 1e-6;
        let stencil_ok = (0..vars).all(|j| {
            [h, -h].iter().all(|d| {
                let mut p = x.clone();
                p[j] += d;
                well_conditioned(&e, &p)
            })
        });
        if well_conditioned(&e, &x) && stencil_ok {
            return (e, x);
        }
    }
}

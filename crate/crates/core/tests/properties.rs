mod common;

use common::exprs::{central_difference, max_relative_error, well_conditioned};
use nlbb::model::{
    canonicalize, detect_linear, fold, gradient, Expr, Func, Linearity, RawConstraint, RawModel, Relation, Sense,
    Variable,
};
use proptest::prelude::*;

const VARS: usize = 3;

fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        3 => (0..VARS).prop_map(Expr::Var),
        1 => (-3.0..3.0f64).prop_map(Expr::Const),
    ];
    leaf.prop_recursive(5, 64, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..=3).prop_map(Expr::Sum),
            prop::collection::vec(inner.clone(), 2..=3).prop_map(Expr::Product),
            (inner.clone(), prop::sample::select(vec![2.0, 3.0, -1.0, 0.5, 1.5]))
                .prop_map(|(b, p)| Expr::Pow(Box::new(b), p)),
            inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Div(Box::new(a), Box::new(b))),
            (
                prop::sample::select(vec![Func::Exp, Func::Log, Func::Sin, Func::Cos, Func::Sqrt]),
                inner
            )
                .prop_map(|(f, e)| Expr::Unary(f, Box::new(e))),
        ]
    })
}

fn arb_point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, VARS)
}

/// Affine expressions built from sums, scaled variables and negation.
fn arb_affine() -> impl Strategy<Value = (Expr, [f64; VARS], f64)> {
    (prop::array::uniform3(-5i32..5), -5i32..5).prop_map(|(c, k)| {
        let terms: Vec<Expr> = (0..VARS)
            .map(|j| Expr::Const(c[j] as f64) * Expr::var(j))
            .chain([Expr::Const(k as f64)])
            .collect();
        let e = Expr::Sum(vec![
            Expr::Sum(terms[..2].to_vec()),
            Expr::Neg(Box::new(Expr::Neg(Box::new(Expr::Sum(terms[2..].to_vec()))))),
        ]);
        (e, c.map(f64::from), k as f64)
    })
}

fn model_with(objective: Expr, sense: Sense, constraint: Expr) -> RawModel {
    RawModel {
        variables: (0..VARS)
            .map(|j| Variable::continuous(format!("v{j}"), -2.0, 2.0))
            .collect(),
        sense,
        objective,
        constraints: vec![RawConstraint {
            expr: constraint,
            relation: Relation::Ge,
            rhs: 1.0,
        }],
    }
}

proptest! {
    #[test]
    fn gradient_matches_central_differences(e in arb_expr(), x in arb_point()) {
        let h = 1e-6;
        let stencil_ok = (0..VARS).all(|j| [h, -h].iter().all(|d| {
            let mut p = x.clone();
            p[j] += d;
            well_conditioned(&e, &p)
        }));
        prop_assume!(well_conditioned(&e, &x) && stencil_ok);
        let g = gradient(&e, &x, VARS).unwrap();
        let fd = central_difference(&e, &x, h);
        prop_assert!(max_relative_error(&g, &fd) <= 1e-5, "{e}: {g:?} vs {fd:?}");
    }

    #[test]
    fn fold_is_idempotent_and_value_preserving(e in arb_expr(), x in arb_point()) {
        let f = fold(&e);
        prop_assert_eq!(fold(&f), f.clone());
        if let (Ok(a), Ok(b)) = (e.evaluate(&x), f.evaluate(&x)) {
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{e} -> {f}: {a} vs {b}");
        }
    }

    #[test]
    fn canonicalize_is_idempotent(obj in arb_expr(), con in arb_expr(), max in any::<bool>()) {
        let sense = if max { Sense::Maximize } else { Sense::Minimize };
        let m = canonicalize(&model_with(obj, sense, con)).unwrap();
        prop_assert_eq!(canonicalize(&m.to_raw()).unwrap(), m);
    }

    #[test]
    fn maximize_negates(obj in arb_expr(), con in arb_expr(), x in arb_point()) {
        let max = canonicalize(&model_with(obj.clone(), Sense::Maximize, con.clone())).unwrap();
        let min = canonicalize(&model_with(obj.clone(), Sense::Minimize, con)).unwrap();
        if let (Ok(a), Ok(b), Ok(raw)) = (max.objective_value(&x), min.objective_value(&x), obj.evaluate(&x)) {
            prop_assert!((a + b).abs() <= 1e-9 * a.abs().max(1.0));
            prop_assert!((max.to_original_sense(a) - raw).abs() <= 1e-9 * raw.abs().max(1.0));
        }
    }

    #[test]
    fn affine_expressions_are_detected_exactly((e, coeffs, constant) in arb_affine()) {
        let Linearity::Linear(form) = detect_linear(&e) else {
            return Err(TestCaseError::fail(format!("{e} not detected as linear")));
        };
        for (j, c) in coeffs.iter().enumerate() {
            prop_assert_eq!(form.coeff(j), *c);
        }
        prop_assert_eq!(form.constant, constant);
    }

    #[test]
    fn nonlinear_terms_are_not_linear(j in 0..VARS, p in prop::sample::select(vec![2.0, 3.0, 0.5])) {
        let e = Expr::var(j) + Expr::var(j).powf(p);
        prop_assert!(!detect_linear(&e).is_linear());
    }
}

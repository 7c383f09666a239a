mod common;

use common::{corpus_path, enumerate, read, ORACLE_SUITE};
use nlbb::engine::*;
use nlbb::io::{load_instance, ResultFile};
use nlbb::nlp::{solve_nlp, NlpLimits, NlpProblem, NlpStatus};

fn no_pump() -> SolverOptions {
    SolverOptions {
        pump: PumpMode::Off,
        ..SolverOptions::default()
    }
}

#[test]
fn oracle_suite_with_defaults() {
    for name in ORACLE_SUITE {
        let (best, _) = enumerate(&read(name)).expect("suite instances are feasible");
        let model = load_instance(corpus_path(name)).unwrap();
        let r = solve(&model, &SolverOptions::default());
        assert_eq!(r.status, SolveStatus::Optimal, "{name}");
        let obj = r.objective().unwrap();
        assert!((obj - best).abs() <= 1e-6, "{name}: {obj} vs oracle {best}");
        assert!(model.is_feasible_solution(r.point().unwrap()));
    }
}

#[test]
fn code_block_optimum_and_sense() {
    let (best, point) = enumerate(&read("codeblock1")).unwrap();
    assert_eq!(best, 184.0);
    assert_eq!(point, vec![0.0, 0.0, 1.0, 2.0, 3.0]);
    let model = load_instance(corpus_path("codeblock1")).unwrap();
    let r = solve(&model, &SolverOptions::default());
    assert_eq!(r.objective(), Some(184.0));
    assert_eq!(r.incumbent.unwrap().objective, -184.0);
}

#[test]
fn infeasible_instances() {
    for name in ["lattice_gap", "infeasible_box"] {
        let model = load_instance(corpus_path(name)).unwrap();
        let r = solve(&model, &SolverOptions::default());
        assert_eq!(r.status, SolveStatus::InfeasibleOrUnbounded, "{name}");
        assert!(r.incumbent.is_none());
        assert!(r.nodes <= 1, "{name}: {}", r.nodes);
    }
    assert!(enumerate(&read("lattice_gap")).is_none());
}

#[test]
fn restart_regression() {
    let model = load_instance(corpus_path("codeblock1")).unwrap();
    let start = root_restart(model.lower(), model.upper(), 2, 3, 0).unwrap();
    let frozen = [
        3.3222035320557834,
        9.052618083345067,
        6.345102688843008,
        0.722091690864526,
        6.839665736374499,
    ];
    assert_eq!(start, frozen);
    assert_eq!(
        root_restart(model.lower(), model.upper(), 1, 3, 0).unwrap(),
        vec![5.0; 5]
    );
}

/// Strong branching at the root of the Code Block instance picks the
/// variable maximizing the product of child improvements, computed here by
/// solving every child pair directly.
#[test]
fn strong_root_matches_child_enumeration() {
    let model = load_instance(corpus_path("codeblock1")).unwrap();
    let limits = NlpLimits::default();
    let root = solve_nlp(&NlpProblem::new(&model, vec![5.0; 5]), &limits);
    assert_eq!(root.status, NlpStatus::LocallyOptimal);

    let mut best: Option<(f64, usize)> = None;
    for j in 0..5 {
        let v = root.point[j];
        if (v - v.round()).abs() <= 1e-6 {
            continue;
        }
        let mut improvements = [0.0; 2];
        for (side, (lo, hi)) in [(0.0, v.floor()), (v.floor() + 1.0, 10.0)].into_iter().enumerate() {
            let mut lower = model.lower().to_vec();
            let mut upper = model.upper().to_vec();
            lower[j] = lo;
            upper[j] = hi;
            let child = solve_nlp(
                &NlpProblem::with_bounds(&model, lower, upper, root.point.clone()),
                &limits,
            );
            improvements[side] = match child.status {
                NlpStatus::Infeasible => f64::INFINITY,
                _ => child.objective - root.objective,
            };
        }
        let score = improvements[0].max(1e-6) * improvements[1].max(1e-6);
        if best.is_none_or(|(s, _)| score > s) {
            best = Some((score, j));
        }
    }
    let (_, expected) = best.unwrap();
    assert_eq!(expected, 4);

    let options = SolverOptions {
        branching: BranchingStrategy::Strong,
        ..no_pump()
    };
    let r = solve(&model, &options);
    assert_eq!(r.branch_log[0].node, 0);
    assert_eq!(r.branch_log[0].var, expected);
}

#[test]
fn root_branching_regression_per_strategy() {
    let model = load_instance(corpus_path("codeblock1")).unwrap();
    for (b, var) in [
        (BranchingStrategy::MostInfeasible, 1),
        (BranchingStrategy::PseudoCost, 1),
        (BranchingStrategy::Strong, 4),
        (BranchingStrategy::Reliability, 4),
        (BranchingStrategy::StrongRootThenPseudo, 4),
    ] {
        let r = solve(
            &model,
            &SolverOptions {
                branching: b,
                ..no_pump()
            },
        );
        assert_eq!(r.branch_log[0].var, var, "{b:?}");
    }
}

#[test]
fn sequential_determinism() {
    let model = load_instance(corpus_path("wide_ball")).unwrap();
    let options = SolverOptions::default();
    let a = solve(&model, &options);
    let b = solve(&model, &options);
    assert_eq!(a.nodes, b.nodes);
    assert_eq!(a.branch_log, b.branch_log);
    let fa = ResultFile::new(&model, &a, &options).without_timing().to_json();
    let fb = ResultFile::new(&model, &b, &options).without_timing().to_json();
    assert_eq!(fa, fb);
}

#[test]
fn best_first_bounds_do_not_decrease() {
    let model = load_instance(corpus_path("wide_ball")).unwrap();
    let options = SolverOptions {
        trace: true,
        ..no_pump()
    };
    let r = solve(&model, &options);
    assert_eq!(r.trace.len(), r.nodes);
    for w in r.trace.windows(2) {
        assert!(w[1].key >= w[0].key - 1e-7, "{:?} then {:?}", w[0], w[1]);
    }
}

#[test]
fn disabling_bound_pruning_never_helps() {
    for name in ["codeblock1", "quad_target", "reciprocal"] {
        let model = load_instance(corpus_path(name)).unwrap();
        let on = solve(&model, &no_pump());
        let off = solve(
            &model,
            &SolverOptions {
                prune_on_local_bound: false,
                ..no_pump()
            },
        );
        let (a, b) = (on.incumbent.unwrap().objective, off.incumbent.unwrap().objective);
        assert!(b >= a - 1e-6, "{name}: {b} < {a}");
        assert!(off.nodes >= on.nodes, "{name}");
    }
}

#[test]
fn mixed_and_nonconvex_instances_return_feasible_points() {
    for name in ["mixed_convex", "nonconvex_wave"] {
        let model = load_instance(corpus_path(name)).unwrap();
        for workers in [1, 3] {
            let r = solve(
                &model,
                &SolverOptions {
                    workers,
                    ..SolverOptions::default()
                },
            );
            assert_eq!(r.status, SolveStatus::Optimal, "{name}");
            assert!(model.is_feasible_solution(r.point().unwrap()), "{name}");
        }
    }
}

#[test]
fn pump_finds_code_block_point() {
    let model = load_instance(corpus_path("codeblock1")).unwrap();
    let r = nlbb::fpump::pump(&model, model.lower(), model.upper(), PumpMode::Rounding, 60.0, 0);
    let inc = r.incumbent.expect("pump succeeds on the code block");
    assert!(model.is_feasible_solution(&inc.point));
    assert!(-inc.objective <= 184.0 + 1e-9);
}

#[test]
fn integral_root_pump_needs_no_projection() {
    let model = load_instance(corpus_path("ball_slack")).unwrap();
    let r = nlbb::fpump::pump(&model, model.lower(), model.upper(), PumpMode::MipProjection, 60.0, 0);
    assert!(r.found());
    assert_eq!((r.iterations, r.projections), (1, 0));
}

//! Coordinator/worker tree search.
//!
//! The calling thread owns the open set, incumbent and pseudo-cost table.
//! `workers - 1` threads receive nodes over a channel, solve them with
//! [`process_node`] and send back reports, which the coordinator folds in
//! arrival order. Workers see the incumbent objective through an atomic
//! snapshot and the pseudo-costs through a shared immutable copy that is
//! replaced whenever the table changes.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender};
use web_time::{Duration, Instant};

use crate::engine::{
    process_node, Node, NodeContext, NodeOutcome, NodeReport, PseudoCostTable, Search, SolveResult, SolverOptions,
};
use crate::fpump::PumpReport;
use crate::model::Model;

struct WorkItem {
    node: Node,
    table: Arc<PseudoCostTable>,
}

/// Canonical incumbent objective shared with workers; `+inf` when none.
struct SharedBest(AtomicU64);

impl SharedBest {
    fn new(value: Option<f64>) -> Self {
        SharedBest(AtomicU64::new(value.unwrap_or(f64::INFINITY).to_bits()))
    }

    fn get(&self) -> Option<f64> {
        Some(f64::from_bits(self.0.load(Ordering::Acquire))).filter(|v| v.is_finite())
    }

    fn set(&self, value: f64) {
        self.0.store(value.to_bits(), Ordering::Release);
    }
}

/// Report for a node whose worker panicked: pruned and counted as a failure.
fn failure_report(id: u64, parent: Option<u64>, depth: u32, key: f64) -> NodeReport {
    NodeReport {
        id,
        parent,
        depth,
        key,
        bound: None,
        outcome: NodeOutcome::PrunedInfeasible,
        updates: Vec::new(),
        branch: None,
        restarts: 0,
        relaxation_failed: true,
        relaxation_time: Duration::ZERO,
    }
}

fn worker(
    model: &Model,
    options: &SolverOptions,
    deadline: Option<Instant>,
    best: &SharedBest,
    work: Receiver<WorkItem>,
    reports: Sender<NodeReport>,
) {
    for item in work {
        let (id, parent, depth, key) = (item.node.id, item.node.parent, item.node.depth, item.node.bound);
        let ctx = NodeContext {
            model,
            options,
            table: &item.table,
            incumbent: best.get(),
            deadline,
        };
        let report = catch_unwind(AssertUnwindSafe(|| process_node(item.node, &ctx)))
            .unwrap_or_else(|_| failure_report(id, parent, depth, key));
        if reports.send(report).is_err() {
            return;
        }
    }
}

/// Counters checked at the end of a parallel run.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
struct Accounting {
    dispatched: usize,
    cancelled: usize,
}

/// Runs the tree search of `search` with `options.workers - 1` threads.
pub(crate) fn run(mut search: Search<'_>, pump: Option<PumpReport>) -> SolveResult {
    let model = search.model;
    let options = search.options;
    let deadline = search.deadline;
    let threads = options.workers.saturating_sub(1).max(1);
    let best = SharedBest::new(search.incumbent_objective());

    let (work_tx, work_rx) = unbounded::<WorkItem>();
    let (report_tx, report_rx) = unbounded::<NodeReport>();

    thread::scope(|scope| {
        for _ in 0..threads {
            let work = work_rx.clone();
            let reports = report_tx.clone();
            let best = &best;
            scope.spawn(move || worker(model, options, deadline, best, work, reports));
        }
        drop(report_tx);

        let mut in_flight: HashMap<u64, f64> = HashMap::new();
        let mut snapshot = Arc::new(search.table.clone());
        let mut counts = Accounting::default();
        let in_flight_bound = |m: &HashMap<u64, f64>| m.values().copied().fold(f64::INFINITY, f64::min);
        let mut timed_out = false;

        loop {
            if search.done(in_flight_bound(&in_flight)) {
                break;
            }
            if search.expired() {
                timed_out = true;
                break;
            }
            while in_flight.len() < threads {
                let Some(node) = search.open.next_node() else { break };
                if snapshot.as_ref() != &search.table {
                    snapshot = Arc::new(search.table.clone());
                }
                in_flight.insert(node.id, node.bound);
                counts.dispatched += 1;
                work_tx
                    .send(WorkItem {
                        node,
                        table: Arc::clone(&snapshot),
                    })
                    .expect("workers alive");
            }
            if in_flight.is_empty() {
                break;
            }
            let received = match deadline {
                Some(d) => match report_rx.recv_timeout(d.saturating_duration_since(Instant::now())) {
                    Ok(r) => Some(r),
                    Err(RecvTimeoutError::Timeout) => None,
                    Err(RecvTimeoutError::Disconnected) => unreachable!("coordinator holds the work sender"),
                },
                None => Some(report_rx.recv().expect("workers alive")),
            };
            if let Some(report) = received {
                fold(&mut search, &best, &mut in_flight, &mut counts, report);
            }
        }

        // Drain: every dispatched node reports exactly once.
        drop(work_tx);
        while !in_flight.is_empty() {
            let report = report_rx.recv().expect("in-flight node reports");
            fold(&mut search, &best, &mut in_flight, &mut counts, report);
        }
        debug_assert_eq!(search.nodes, counts.dispatched - counts.cancelled);
        search.finish(timed_out, f64::INFINITY, pump)
    })
}

fn fold(
    search: &mut Search<'_>,
    best: &SharedBest,
    in_flight: &mut HashMap<u64, f64>,
    counts: &mut Accounting,
    report: NodeReport,
) {
    in_flight.remove(&report.id);
    if matches!(report.outcome, NodeOutcome::Cancelled(_)) {
        counts.cancelled += 1;
    }
    search.integrate(report);
    if let Some(obj) = search.incumbent_objective() {
        best.set(obj);
    }
}

#[cfg(test)]
mod tests {
    use crate::engine::{solve, PumpMode, SolveStatus, SolverOptions};
    use crate::model::fixtures::code_block;
    use crate::model::{canonicalize, Expr, RawModel, Sense, Variable};

    #[test]
    fn matches_sequential_on_code_block() {
        let model = code_block();
        for workers in [2, 4] {
            let o = SolverOptions {
                workers,
                pump: PumpMode::Off,
                ..SolverOptions::default()
            };
            let r = solve(&model, &o);
            assert_eq!(r.status, SolveStatus::Optimal);
            assert!((r.objective().unwrap() - 184.0).abs() < 1e-6);
        }
    }

    #[test]
    fn integral_root_is_one_node() {
        let raw = RawModel {
            variables: vec![Variable::integer("a", 1.0, 1.0)],
            sense: Sense::Minimize,
            objective: Expr::var(0).powi(2),
            constraints: vec![],
        };
        let o = SolverOptions {
            workers: 2,
            pump: PumpMode::Off,
            ..SolverOptions::default()
        };
        let r = solve(&canonicalize(&raw).unwrap(), &o);
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_eq!(r.nodes, 1);
    }

    #[test]
    fn zero_time_limit() {
        let o = SolverOptions {
            workers: 4,
            time_limit: 0.0,
            pump: PumpMode::Off,
            ..SolverOptions::default()
        };
        let r = solve(&code_block(), &o);
        assert_eq!(r.status, SolveStatus::NoSolutionTimeLimit);
        assert_eq!(r.nodes, 0);
    }
}

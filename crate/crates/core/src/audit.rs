//! Inline checks of the structural guarantees of each algorithm, evaluated
//! on recorded traces.

use serde::Serialize;

use crate::deadline::r_l;
use crate::engine::EngineTrace;
use crate::model::{cost_of_schedule, Instance, NodeId, WeightedTree};
use crate::offline::NodeServiceTimes;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub time: f64,
    pub check: &'static str,
    pub detail: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} at t={}: {}", self.check, self.time, self.detail)
    }
}

fn le(a: f64, b: f64, rel: f64) -> bool {
    a <= b + rel * b.abs().max(1.0)
}

pub const REL_TOL: f64 = 1e-6;

fn feasibility(inst: &Instance, trace: &EngineTrace, out: &mut Vec<Violation>) -> Option<f64> {
    match cost_of_schedule(inst, &trace.schedule) {
        Ok(c) => Some(c.total),
        Err(e) => {
            out.push(Violation {
                time: f64::NAN,
                check: "feasible",
                detail: e.to_string(),
            });
            None
        }
    }
}

/// Deadline algorithm: feasibility and `weight(X) <= R_L * weight(q)` for
/// every service, with `D` the depth of the tree it ran on.
pub fn check_deadline_trace(
    inst: &Instance,
    tree: &WeightedTree,
    trace: &EngineTrace,
    l: f64,
) -> Vec<Violation> {
    let mut out = Vec::new();
    feasibility(inst, trace, &mut out);
    let bound = r_l(l, tree.max_depth());
    for (t, plan) in trace.plans() {
        let plan = plan.inner.as_deref().unwrap_or(plan);
        for part in &plan.parts {
            let w = tree.weight_of(&part.nodes());
            let q = tree.weight(part.quasi_root);
            if !le(w, bound * q, REL_TOL) {
                out.push(Violation {
                    time: t,
                    check: "service-weight",
                    detail: format!("weight {w} exceeds {bound} x {q}"),
                });
            }
        }
    }
    out
}

/// General algorithm: cost at most twice the service cost, the extension
/// bound `weight(C + E) <= R_L * weight(C)`, maturity ordering inside every
/// critical subtree, and the quasi-root maturing strictly later after each
/// service.
pub fn check_general_trace(inst: &Instance, trace: &EngineTrace, l: f64) -> Vec<Violation> {
    let tree = &inst.tree;
    let mut out = Vec::new();
    if let Some(total) = feasibility(inst, trace, &mut out) {
        let scost = trace.schedule.scost(tree);
        if !le(total, 2.0 * scost, REL_TOL) {
            out.push(Violation {
                time: f64::NAN,
                check: "cost-vs-scost",
                detail: format!("cost {total} exceeds 2 x scost {scost}"),
            });
        }
    }
    let bound = r_l(l, tree.max_depth());
    for (t, plan) in trace.plans() {
        for part in &plan.parts {
            let c = tree.weight_of(&part.core);
            let w = tree.weight_of(&part.nodes());
            if !le(w, bound * c, REL_TOL) {
                out.push(Violation {
                    time: t,
                    check: "extension-weight",
                    detail: format!("weight(C+E) {w} exceeds {bound} x weight(C) {c}"),
                });
            }
            if let Some(mu_q) = part.maturity_before {
                for &(u, mu) in &part.core_maturity {
                    if !(mu <= mu_q + 1e-9 * mu_q.abs().max(1.0)) {
                        out.push(Violation {
                            time: t,
                            check: "maturity-order",
                            detail: format!("mu({u}) = {mu} exceeds mu(q) = {mu_q}"),
                        });
                    }
                }
            }
            if let Some(after) = part.maturity_after {
                if !(after > t) {
                    out.push(Violation {
                        time: t,
                        check: "maturity-advances",
                        detail: format!("quasi-root {} matures again at {after}", part.quasi_root),
                    });
                }
            }
        }
    }
    out
}

/// Level-by-level output: nested per-node times and a feasible schedule.
pub fn check_lbl(inst: &Instance, times: &NodeServiceTimes) -> Vec<Violation> {
    let mut out = Vec::new();
    if !times.is_nested(&inst.tree) {
        let bad: Vec<NodeId> = inst
            .tree
            .nodes()
            .filter(|&v| {
                inst.tree
                    .parent(v)
                    .is_some_and(|p| times.of(v).iter().any(|t| !times.of(p).contains(t)))
            })
            .collect();
        out.push(Violation {
            time: f64::NAN,
            check: "nesting",
            detail: format!("nodes {bad:?}"),
        });
    }
    if let Err(e) = cost_of_schedule(inst, &times.to_schedule(&inst.tree)) {
        out.push(Violation {
            time: f64::NAN,
            check: "feasible",
            detail: e.to_string(),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deadline::DeadlineAlgorithm;
    use crate::engine::run;
    use crate::general::GeneralAlgorithm;
    use crate::model::Request;

    #[test]
    fn clean_runs_have_no_violations() {
        let tree =
            WeightedTree::from_parent_weights(&[(0, 4.0), (1, 2.0), (1, 1.0), (2, 0.5)]).unwrap();
        let reqs = vec![
            Request::deadline(0, NodeId(4), 0.0, 2.0, 1.0).unwrap(),
            Request::deadline(1, NodeId(3), 0.5, 3.0, 1.0).unwrap(),
        ];
        let inst = Instance::new(tree.clone(), reqs, 5.0).unwrap();
        let trace = run(&mut DeadlineAlgorithm::new(2.0), &inst).unwrap();
        assert_eq!(check_deadline_trace(&inst, &tree, &trace, 2.0), vec![]);

        let reqs = vec![
            Request::linear(0, NodeId(4), 0.0),
            Request::linear(1, NodeId(3), 0.5),
        ];
        let inst = Instance::new(tree, reqs, 20.0).unwrap();
        let trace = run(&mut GeneralAlgorithm::new(), &inst).unwrap();
        assert_eq!(check_general_trace(&inst, &trace, 2.0), vec![]);
    }
}

//! Online algorithm for deadline instances on L-decreasing trees.
//!
//! Whenever a pending request reaches its deadline the algorithm serves a
//! tree grown level by level: every node `v` already chosen above depth `i`
//! adds its most urgent depth-`i` candidates (children of chosen depth
//! `i - 1` nodes inside `v`'s subtree) up to weight `weight(v)`. Urgency is
//! the earliest pending deadline in a node's subtree.

use crate::engine::{
    urgent_select_by, Decomposition, OnlineAlgorithm, PlannedService, UrgentPick, View,
};
use crate::model::{NodeId, NodeSet, Request, WeightedTree};

/// Subtree-minimum urgency key: `(deadline, request id)`. Ordering by the
/// pair realizes the distinct-deadline assumption deterministically.
pub type DeadlineKey = (f64, u64);

const NO_DEADLINE: DeadlineKey = (f64::INFINITY, u64::MAX);

/// `d^t(v)` for every node: the earliest pending deadline in the subtree.
pub fn node_deadlines(tree: &WeightedTree, pending: &[Request]) -> Vec<DeadlineKey> {
    let mut key = vec![NO_DEADLINE; tree.len()];
    for r in pending {
        if let Some(d) = r.deadline_time() {
            let k = (d, r.rid);
            if lt(k, key[r.node.0]) {
                key[r.node.0] = k;
            }
        }
    }
    for v in tree.postorder() {
        if let Some(p) = tree.parent(v) {
            if lt(key[v.0], key[p.0]) {
                key[p.0] = key[v.0];
            }
        }
    }
    key
}

/// Earliest pending deadline in the subtree of `v`, `+inf` if none.
pub fn node_deadline(tree: &WeightedTree, pending: &[Request], v: NodeId) -> f64 {
    node_deadlines(tree, pending)[v.0].0
}

fn lt(a: DeadlineKey, b: DeadlineKey) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// Grows the service tree for the component rooted at `quasi_root`.
pub fn build_service_deadline(
    tree: &WeightedTree,
    quasi_root: NodeId,
    urgency: &[DeadlineKey],
) -> Decomposition {
    let core: NodeSet = [NodeId::ROOT, quasi_root].into();
    let mut chosen = core.clone();
    let mut picks = Vec::new();
    for depth in 2..=tree.max_depth() {
        // Z^i: children of chosen nodes at depth i - 1
        let frontier: Vec<NodeId> = chosen
            .iter()
            .filter(|&&v| tree.depth(v) == depth - 1)
            .flat_map(|&v| tree.children(v).iter().copied())
            .collect();
        if frontier.is_empty() {
            break;
        }
        let anchors: Vec<NodeId> = chosen
            .iter()
            .copied()
            .filter(|&v| tree.depth(v) < depth)
            .collect();
        let mut added = NodeSet::new();
        for v in anchors {
            let local: Vec<NodeId> = frontier
                .iter()
                .copied()
                .filter(|&u| tree.is_ancestor(v, u))
                .collect();
            let pick =
                urgent_select_by(&local, tree.weight(v), |u| urgency[u.0], |u| tree.weight(u));
            if pick.is_empty() {
                continue;
            }
            added.extend(pick.iter().copied());
            picks.push(UrgentPick {
                anchor: v,
                depth,
                nodes: pick.into_iter().collect(),
            });
        }
        chosen.extend(added);
    }
    Decomposition {
        quasi_root,
        core,
        picks,
        core_maturity: Vec::new(),
        maturity_before: None,
        maturity_after: None,
    }
}

/// The deadline-driven online algorithm. Each child of the root is handled
/// as an independent quasi-root component.
#[derive(Clone, Debug)]
pub struct DeadlineAlgorithm {
    pub l: f64,
    warned: bool,
}

impl DeadlineAlgorithm {
    pub fn new(l: f64) -> Self {
        Self { l, warned: false }
    }
}

/// Per-service bound `(2 + 1/L)^(D-1)` on L-decreasing trees.
pub fn r_l(l: f64, depth: usize) -> f64 {
    (2.0 + 1.0 / l).powi(depth.saturating_sub(1) as i32)
}

impl OnlineAlgorithm for DeadlineAlgorithm {
    fn name(&self) -> String {
        format!("deadline(L={})", self.l)
    }

    fn next_trigger(&mut self, _t: f64, view: &View) -> Option<f64> {
        view.pending
            .iter()
            .filter_map(|r| r.deadline_time())
            .min_by(f64::total_cmp)
    }

    fn build_service(&mut self, _t: f64, view: &View) -> PlannedService {
        let tree = view.tree;
        if !self.warned && !tree.is_l_decreasing(self.l) {
            log::warn!(
                "tree is not {}-decreasing; service bounds do not apply",
                self.l
            );
            self.warned = true;
        }
        let urgency = node_deadlines(tree, view.pending);
        // the expiring request is the one with the smallest key overall
        let trigger = view
            .pending
            .iter()
            .filter_map(|r| r.deadline_time().map(|d| ((d, r.rid), r.node)))
            .min_by(|a, b| a.0 .0.total_cmp(&b.0 .0).then(a.0 .1.cmp(&b.0 .1)));
        let Some((_, node)) = trigger else {
            return PlannedService::plain([NodeId::ROOT].into());
        };
        let q = tree
            .component_of(node)
            .expect("requests sit below the root");
        let part = build_service_deadline(tree, q, &urgency);
        PlannedService {
            nodes: part.nodes(),
            parts: vec![part],
            inner: None,
        }
    }

    fn on_horizon(&mut self, _t: f64, view: &View) -> Option<NodeSet> {
        let nodes: Vec<NodeId> = view.pending.iter().map(|r| r.node).collect();
        Some(view.tree.spanning_subtree(&nodes))
    }
}

//! Maturity times, critical subtrees and the online algorithm for
//! continuous waiting costs.
//!
//! For a pending set `P`, the surplus function of `v` is
//! `best_v(t) = w_P({v}, t) + sum over children u of max(0, best_u(t) - weight(u))`,
//! which equals the maximum over subtrees `Z` rooted at `v` of
//! `w_P(Z, t) - weight(Z - {v})`. The maturity time of `v` is the earliest
//! `t` with `best_v(t) >= weight(v)`.

use crate::engine::{
    urgent_select, Decomposition, OnlineAlgorithm, PlannedService, UrgentPick, View,
};
use crate::error::{MlapError, Result};
use crate::model::{NodeId, NodeSet, Request, WeightedTree, EPS_TIME};
use crate::plf::{earliest_crossing_by, Plf};

/// Surplus functions and maturity times of every node for one pending set.
#[derive(Clone, Debug)]
pub struct Maturities {
    /// Exact surplus functions; `None` when some pending cost is not
    /// piecewise linear and the pointwise fallback is in use.
    exact: Option<Vec<Plf>>,
    mu: Vec<f64>,
    pending: Vec<Request>,
}

impl Maturities {
    pub fn compute(tree: &WeightedTree, pending: &[Request]) -> Self {
        match surplus_functions(tree, pending) {
            Some(best) => {
                let mu = tree
                    .nodes()
                    .map(|v| {
                        if v == NodeId::ROOT {
                            return f64::INFINITY;
                        }
                        best[v.0]
                            .earliest_crossing(tree.weight(v), 0.0, f64::INFINITY)
                            .unwrap_or(f64::INFINITY)
                    })
                    .collect();
                Self {
                    exact: Some(best),
                    mu,
                    pending: pending.to_vec(),
                }
            }
            None => {
                let mu = tree
                    .nodes()
                    .map(|v| {
                        if v == NodeId::ROOT {
                            f64::INFINITY
                        } else {
                            maturity_by_bisection(tree, pending, v)
                        }
                    })
                    .collect();
                Self {
                    exact: None,
                    mu,
                    pending: pending.to_vec(),
                }
            }
        }
    }

    pub fn is_exact(&self) -> bool {
        self.exact.is_some()
    }

    pub fn maturity(&self, v: NodeId) -> f64 {
        self.mu[v.0]
    }

    pub fn all(&self) -> &[f64] {
        &self.mu
    }

    /// `best_v(t)`.
    pub fn surplus(&self, tree: &WeightedTree, v: NodeId, t: f64) -> f64 {
        match &self.exact {
            Some(best) => best[v.0].eval(t),
            None => surplus_at(tree, &self.pending, v, t),
        }
    }

    /// The critical subtree of `v`, rebuilt top-down at `t = mu(v)`: a child
    /// `u` joins when `best_u(t) >= weight(u)`.
    pub fn critical_subtree(&self, tree: &WeightedTree, v: NodeId) -> Result<NodeSet> {
        let t = self.maturity(v);
        if !t.is_finite() {
            return Err(MlapError::NotMature(v));
        }
        let mut out = NodeSet::new();
        let mut stack = vec![v];
        while let Some(u) = stack.pop() {
            out.insert(u);
            for &c in tree.children(u) {
                if covers(self.surplus(tree, c, t), tree.weight(c)) {
                    stack.push(c);
                }
            }
        }
        Ok(out)
    }
}

fn covers(surplus: f64, weight: f64) -> bool {
    surplus >= weight - 1e-12 * weight.max(1.0)
}

/// Exact surplus functions, bottom up. `None` if some pending request has a
/// cost without a piecewise-linear form.
pub fn surplus_functions(tree: &WeightedTree, pending: &[Request]) -> Option<Vec<Plf>> {
    let mut own: Vec<Vec<Plf>> = vec![Vec::new(); tree.len()];
    for r in pending {
        own[r.node.0].push(r.plf()?);
    }
    let mut best: Vec<Plf> = vec![Plf::zero(); tree.len()];
    for v in tree.postorder() {
        let mut f = Plf::sum(own[v.0].iter());
        for &c in tree.children(v) {
            let excess = best[c.0].excess_over(tree.weight(c));
            if !excess.is_zero() {
                f = f.add(&excess);
            }
        }
        best[v.0] = f;
    }
    Some(best)
}

/// `best_v(t)` evaluated directly from the request costs.
pub fn surplus_at(tree: &WeightedTree, pending: &[Request], v: NodeId, t: f64) -> f64 {
    let own: f64 = pending
        .iter()
        .filter(|r| r.node == v)
        .map(|r| r.eval(t))
        .sum();
    own + tree
        .children(v)
        .iter()
        .map(|&c| (surplus_at(tree, pending, c, t) - tree.weight(c)).max(0.0))
        .sum::<f64>()
}

fn maturity_by_bisection(tree: &WeightedTree, pending: &[Request], v: NodeId) -> f64 {
    let in_subtree: Vec<Request> = pending
        .iter()
        .filter(|r| tree.is_ancestor(v, r.node))
        .cloned()
        .collect();
    if in_subtree.is_empty() {
        return f64::INFINITY;
    }
    let f = |t: f64| surplus_at(tree, &in_subtree, v, t);
    let target = tree.weight(v);
    let mut hi = in_subtree
        .iter()
        .map(|r| match &r.cost {
            crate::model::MonotoneCost::Deadline { deadline, .. } => *deadline,
            crate::model::MonotoneCost::Pwl { points } => points.last().map_or(r.arrival, |p| p.0),
            crate::model::MonotoneCost::Linear => r.arrival,
        })
        .fold(0.0, f64::max)
        + 1.0;
    while f(hi) < target {
        hi *= 2.0;
        if hi > 1e15 {
            return f64::INFINITY;
        }
    }
    earliest_crossing_by(f, target, 0.0, hi, EPS_TIME / 16.0).unwrap_or(f64::INFINITY)
}

/// Maturity time of `v` with respect to `pending`.
pub fn maturity(tree: &WeightedTree, pending: &[Request], v: NodeId) -> f64 {
    Maturities::compute(tree, pending).maturity(v)
}

/// Critical subtree of `v` with respect to `pending`.
pub fn critical_subtree(tree: &WeightedTree, pending: &[Request], v: NodeId) -> Result<NodeSet> {
    Maturities::compute(tree, pending).critical_subtree(tree, v)
}

/// Builds `C ∪ E` for the component of `quasi_root`, whose maturity must be
/// finite.
pub fn build_service_general(
    tree: &WeightedTree,
    mats: &Maturities,
    quasi_root: NodeId,
) -> Result<Decomposition> {
    let critical = mats.critical_subtree(tree, quasi_root)?;
    let mut core = critical.clone();
    core.insert(NodeId::ROOT);
    let mut extra = NodeSet::new();
    let mut picks = Vec::new();
    for depth in 2..=tree.max_depth() {
        let mut frontier: Vec<NodeId> = core
            .iter()
            .chain(extra.iter())
            .filter(|&&v| tree.depth(v) == depth - 1)
            .flat_map(|&v| tree.children(v).iter().copied())
            .filter(|u| !core.contains(u))
            .collect();
        if frontier.is_empty() {
            continue;
        }
        let mut anchors: Vec<NodeId> = core
            .iter()
            .chain(extra.iter())
            .copied()
            .filter(|&v| tree.depth(v) < depth)
            .collect();
        anchors.sort_by_key(|&v| (tree.depth(v), v));
        for v in anchors {
            let local: Vec<NodeId> = frontier
                .iter()
                .copied()
                .filter(|&u| tree.is_ancestor(v, u))
                .collect();
            let pick = urgent_select(&local, tree.weight(v), |u| mats.maturity(u), tree);
            if pick.is_empty() {
                continue;
            }
            frontier.retain(|u| !pick.contains(u));
            extra.extend(pick.iter().copied());
            picks.push(UrgentPick {
                anchor: v,
                depth,
                nodes: pick.into_iter().collect(),
            });
        }
    }
    Ok(Decomposition {
        quasi_root,
        core_maturity: critical.iter().map(|&u| (u, mats.maturity(u))).collect(),
        core,
        picks,
        maturity_before: Some(mats.maturity(quasi_root)),
        maturity_after: None,
    })
}

/// Online algorithm for continuous costs: serve `C ∪ E` whenever a
/// quasi-root matures; at the horizon serve the smallest tree spanning all
/// pending requests.
#[derive(Clone, Debug, Default)]
pub struct GeneralAlgorithm {
    cache: Option<(u64, Maturities)>,
    /// `(t, mu(q))` for every component at every trigger query.
    pub maturity_log: Vec<(f64, f64)>,
}

impl GeneralAlgorithm {
    pub fn new() -> Self {
        Self::default()
    }

    fn maturities(&mut self, view: &View) -> &Maturities {
        let stale = self
            .cache
            .as_ref()
            .is_none_or(|(g, _)| *g != view.generation);
        if stale {
            self.cache = Some((
                view.generation,
                Maturities::compute(view.tree, view.pending),
            ));
        }
        &self.cache.as_ref().unwrap().1
    }
}

impl OnlineAlgorithm for GeneralAlgorithm {
    fn name(&self) -> String {
        "general".into()
    }

    fn next_trigger(&mut self, t: f64, view: &View) -> Option<f64> {
        let tree = view.tree;
        let mus: Vec<f64> = {
            let mats = self.maturities(view);
            tree.children(NodeId::ROOT)
                .iter()
                .map(|&q| mats.maturity(q))
                .collect()
        };
        for &mu in &mus {
            if mu.is_finite() {
                self.maturity_log.push((t, mu));
            }
        }
        mus.into_iter()
            .filter(|m| m.is_finite())
            .min_by(f64::total_cmp)
    }

    fn build_service(&mut self, t: f64, view: &View) -> PlannedService {
        let tree = view.tree;
        let mats = self.maturities(view).clone();
        let mut parts = Vec::new();
        for &q in tree.children(NodeId::ROOT) {
            let mu = mats.maturity(q);
            if !(mu.is_finite() && mu <= t + EPS_TIME) {
                continue;
            }
            let mut part = build_service_general(tree, &mats, q).expect("quasi-root is mature");
            let nodes = part.nodes();
            let rest: Vec<Request> = view
                .pending
                .iter()
                .filter(|r| !(nodes.contains(&r.node) && r.arrival <= t))
                .cloned()
                .collect();
            part.maturity_after = Some(maturity(tree, &rest, q));
            parts.push(part);
        }
        let mut nodes: NodeSet = [NodeId::ROOT].into();
        for p in &parts {
            nodes.extend(p.nodes());
        }
        PlannedService {
            nodes,
            parts,
            inner: None,
        }
    }

    fn on_horizon(&mut self, _t: f64, view: &View) -> Option<NodeSet> {
        let nodes: Vec<NodeId> = view.pending.iter().map(|r| r.node).collect();
        Some(view.tree.spanning_subtree(&nodes))
    }
}

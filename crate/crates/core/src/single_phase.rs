//! Single-phase instances: every request arrives at time 0 and the whole
//! instance expires at a time `theta` unknown to the algorithm.
//!
//! At a fixed time `t` the optimum is a single service; `opt(t)` is the
//! cheapest `weight(X) + waiting(T - X, t)` over service trees `X`, attained
//! by the maximal covered subtree computed bottom-up.

use crate::error::{MlapError, Result};
use crate::model::{
    Instance, MonotoneCost, NodeId, NodeSet, Request, Schedule, WeightedTree, EPS_TIME,
};

#[derive(Clone, Debug, PartialEq)]
pub struct SinglePhaseInstance {
    pub tree: WeightedTree,
    pub requests: Vec<Request>,
    /// Latest expiration the adversary may pick.
    pub horizon: f64,
}

impl SinglePhaseInstance {
    pub fn new(tree: WeightedTree, requests: Vec<Request>, horizon: f64) -> Result<Self> {
        let inst = Instance::new(tree, requests, horizon)?;
        Self::from_instance(&inst)
    }

    pub fn from_instance(inst: &Instance) -> Result<Self> {
        for r in &inst.requests {
            if r.arrival != 0.0 {
                return Err(MlapError::InvalidRequest {
                    rid: r.rid,
                    reason: format!("single-phase requests arrive at 0, not {}", r.arrival),
                });
            }
            if !r.cost.is_continuous() {
                return Err(MlapError::UnsupportedCostKind(r.cost.kind_name().into()));
            }
        }
        Ok(Self {
            tree: inst.tree.clone(),
            requests: inst.requests.clone(),
            horizon: inst.horizon,
        })
    }

    pub fn to_instance(&self) -> Instance {
        Instance {
            tree: self.tree.clone(),
            requests: self.requests.clone(),
            horizon: self.horizon,
        }
    }

    /// `waiting({v}, t)` for every node.
    pub fn node_waiting(&self, t: f64) -> Vec<f64> {
        let mut w = vec![0.0; self.tree.len()];
        for r in &self.requests {
            w[r.node.0] += r.eval(t);
        }
        w
    }

    pub fn waiting_outside(&self, x: &NodeSet, t: f64) -> f64 {
        self.requests
            .iter()
            .filter(|r| !x.contains(&r.node))
            .map(|r| r.eval(t))
            .sum()
    }

    /// `weight(X) + waiting(T - X, t)`.
    pub fn cost_at(&self, x: &NodeSet, t: f64) -> f64 {
        self.tree.weight_of(x) + self.waiting_outside(x, t)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoveredResult {
    pub nodes: NodeSet,
    pub surplus: f64,
}

/// Maximal covered subtree rooted at `v` at time `t`: a child joins when its
/// own surplus pays for its edge.
pub fn cov_subtree(sp: &SinglePhaseInstance, v: NodeId, t: f64) -> CoveredResult {
    cov_from(&sp.tree, &sp.node_waiting(t), v)
}

fn cov_from(tree: &WeightedTree, waiting: &[f64], v: NodeId) -> CoveredResult {
    let mut nodes: NodeSet = [v].into();
    let mut surplus = waiting[v.0];
    for &u in tree.children(v) {
        let child = cov_from(tree, waiting, u);
        if child.surplus >= tree.weight(u) {
            surplus += child.surplus - tree.weight(u);
            nodes.extend(child.nodes);
        }
    }
    CoveredResult { nodes, surplus }
}

/// `(O^t, opt(t))`.
pub fn opt_single_phase(sp: &SinglePhaseInstance, t: f64) -> (NodeSet, f64) {
    let x = cov_subtree(sp, NodeId::ROOT, t).nodes;
    let cost = sp.cost_at(&x, t);
    (x, cost)
}

#[derive(Clone, Debug, PartialEq)]
pub enum OptimalityViolation {
    /// The part of `X` below `node` waits less than it costs.
    Undercovered {
        node: NodeId,
        waiting: f64,
        weight: f64,
    },
    /// A subtree hanging off `X` waits more than it costs.
    Uncovered {
        subtree: NodeSet,
        waiting: f64,
        weight: f64,
    },
}

/// Checks both optimality conditions for the service tree `x` at time `t`
/// and returns the first violation found.
pub fn check_optimality(
    sp: &SinglePhaseInstance,
    x: &NodeSet,
    t: f64,
    eps: f64,
) -> std::result::Result<(), OptimalityViolation> {
    let tree = &sp.tree;
    let waiting = sp.node_waiting(t);
    let slack = |w: f64| eps * w.max(1.0);
    for &v in x {
        let part: Vec<NodeId> = tree
            .subtree(v)
            .into_iter()
            .filter(|u| x.contains(u))
            .collect();
        let w: f64 = part.iter().map(|u| waiting[u.0]).sum();
        let l: f64 = part.iter().map(|&u| tree.weight(u)).sum();
        if w < l - slack(l) {
            return Err(OptimalityViolation::Undercovered {
                node: v,
                waiting: w,
                weight: l,
            });
        }
    }
    let hangs_off = |z: &NodeId| !x.contains(z) && tree.parent(*z).is_some_and(|p| x.contains(&p));
    for z in tree.nodes().filter(hangs_off) {
        let best = cov_from(tree, &waiting, z);
        let l = tree.weight_of(&best.nodes);
        let w: f64 = best.nodes.iter().map(|u| waiting[u.0]).sum();
        if w > l + slack(l) {
            return Err(OptimalityViolation::Uncovered {
                subtree: best.nodes,
                waiting: w,
                weight: l,
            });
        }
    }
    Ok(())
}

/// Earliest `t` in `[0, horizon]` with `opt(t) >= c`.
///
/// Between consecutive breakpoints of the waiting costs every candidate cost
/// is linear in `t`, so `opt` is concave there and the iteration
/// `t <- root of cost(O^t, .) = c` climbs to the crossing from the left in
/// finitely many steps.
pub fn opt_threshold(sp: &SinglePhaseInstance, c: f64) -> Result<Option<f64>> {
    let mut knots = vec![0.0, sp.horizon];
    for r in &sp.requests {
        let plf = r
            .plf()
            .ok_or_else(|| MlapError::UnsupportedCostKind(r.cost.kind_name().into()))?;
        knots.extend(plf.breakpoints().filter(|&b| b > 0.0 && b < sp.horizon));
    }
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let opt = |t: f64| opt_single_phase(sp, t).1;
    if opt(0.0) >= c {
        return Ok(Some(0.0));
    }
    if opt(sp.horizon) < c {
        return Ok(None);
    }
    // first knot reaching c; opt is non-decreasing
    let k = knots.partition_point(|&b| opt(b) < c);
    let (lo, hi) = (knots[k - 1], knots[k]);
    let mut t = lo;
    for _ in 0..256 {
        let (x, value) = opt_single_phase(sp, t);
        if value >= c {
            return Ok(Some(t));
        }
        let slope = (sp.waiting_outside(&x, hi) - sp.waiting_outside(&x, t)) / (hi - t);
        if slope <= 0.0 {
            break;
        }
        let next = t + (c - value) / slope;
        if !(next > t) || next > hi {
            break;
        }
        if opt(next) >= c - 1e-12 * c.abs().max(1.0) {
            return Ok(Some(next));
        }
        t = next;
    }
    Ok(crate::plf::earliest_crossing_by(
        opt,
        c,
        t,
        hi,
        EPS_TIME / 16.0,
    ))
}

/// One planned doubling service.
#[derive(Clone, Debug, PartialEq)]
pub struct DoublingStep {
    pub time: f64,
    pub nodes: NodeSet,
}

/// The doubling strategy's complete plan. It does not depend on the
/// expiration time, so one plan serves an entire sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct DoublingPlan {
    /// Factor that brings the lightest edge to weight 2.
    pub scale: f64,
    /// Threshold crossing times `t_0 < t_1 < ...`, original time units.
    pub thresholds: Vec<f64>,
    pub steps: Vec<DoublingStep>,
}

impl DoublingPlan {
    pub fn new(sp: &SinglePhaseInstance) -> Result<Self> {
        let min_w = sp.tree.min_weight();
        let scale = if min_w.is_finite() && min_w > 0.0 {
            2.0 / min_w
        } else {
            1.0
        };
        // threshold 2^i in scaled units is 2^i / scale in original ones
        let mut thresholds = Vec::new();
        let mut level = 1.0 / scale;
        while let Some(t) = opt_threshold(sp, level)? {
            thresholds.push(t);
            level *= 2.0;
            if thresholds.len() > 2048 {
                return Err(MlapError::NoProgress { time: t });
            }
        }
        let mut steps = Vec::new();
        let mut served = vec![false; sp.requests.len()];
        for (i, &t) in thresholds.iter().enumerate() {
            let target = thresholds.get(i + 1).copied().unwrap_or(sp.horizon);
            let (x, _) = opt_single_phase(sp, target);
            let mut useful = false;
            for (k, r) in sp.requests.iter().enumerate() {
                if !served[k] && x.contains(&r.node) {
                    served[k] = true;
                    useful = true;
                }
            }
            if useful {
                steps.push(DoublingStep { time: t, nodes: x });
            }
        }
        Ok(Self {
            scale,
            thresholds,
            steps,
        })
    }

    /// Cost paid if the instance expires right after time `theta`.
    pub fn cost_at(&self, sp: &SinglePhaseInstance, theta: f64) -> f64 {
        let mut total = 0.0;
        let mut served = vec![false; sp.requests.len()];
        for s in self.steps.iter().filter(|s| s.time <= theta + EPS_TIME) {
            total += sp.tree.weight_of(&s.nodes);
            for (k, r) in sp.requests.iter().enumerate() {
                if !served[k] && s.nodes.contains(&r.node) {
                    served[k] = true;
                    total += r.eval(s.time);
                }
            }
        }
        for (k, r) in sp.requests.iter().enumerate() {
            if !served[k] {
                total += r.eval(theta);
            }
        }
        total
    }

    pub fn schedule_until(&self, theta: f64) -> Schedule {
        let mut s = Schedule::new();
        for step in self.steps.iter().filter(|s| s.time <= theta + EPS_TIME) {
            s.push(step.time, step.nodes.clone());
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DoublingRun {
    pub theta: f64,
    pub schedule: Schedule,
    pub alg_cost: f64,
    pub opt_cost: f64,
    pub ratio: f64,
}

pub fn ratio_of(alg: f64, opt: f64) -> f64 {
    if opt > 0.0 {
        alg / opt
    } else if alg <= 0.0 {
        1.0
    } else {
        f64::INFINITY
    }
}

pub fn doubling_run(sp: &SinglePhaseInstance, theta: f64) -> Result<DoublingRun> {
    let plan = DoublingPlan::new(sp)?;
    Ok(evaluate_plan(sp, &plan, theta))
}

pub fn evaluate_plan(sp: &SinglePhaseInstance, plan: &DoublingPlan, theta: f64) -> DoublingRun {
    let alg_cost = plan.cost_at(sp, theta);
    let opt_cost = opt_single_phase(sp, theta).1;
    DoublingRun {
        theta,
        schedule: plan.schedule_until(theta),
        alg_cost,
        opt_cost,
        ratio: ratio_of(alg_cost, opt_cost),
    }
}

/// Expiration times that stress the plan: each threshold time, just before
/// it, and an even grid over `[0, horizon]`.
pub fn adversary_thetas(plan: &DoublingPlan, horizon: f64, grid: usize) -> Vec<f64> {
    let mut out: Vec<f64> = (0..=grid)
        .map(|k| horizon * k as f64 / grid.max(1) as f64)
        .collect();
    for &t in &plan.thresholds {
        out.push(t);
        out.push((t - 1e-7 * t.max(1.0)).max(0.0));
    }
    out.retain(|t| *t <= horizon);
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// Stacks `k` scaled copies of a linear single-phase instance: copy `i`
/// arrives at `(1 - m^-i) theta` with its cost multiplied by `m^i`.
pub fn nested_phase_embed(
    sp: &SinglePhaseInstance,
    k: usize,
    m: f64,
    theta: f64,
) -> Result<Instance> {
    if k == 0 || !(m > 1.0) || !(theta.is_finite() && theta >= 0.0) {
        return Err(MlapError::BadParams(format!(
            "need K >= 1, M > 1, theta >= 0 (got {k}, {m}, {theta})"
        )));
    }
    if let Some(r) = sp.requests.iter().find(|r| r.cost != MonotoneCost::Linear) {
        return Err(MlapError::UnsupportedCostKind(r.cost.kind_name().into()));
    }
    let n = sp.requests.len() as u64;
    let mut requests = Vec::with_capacity(k * sp.requests.len());
    for i in 0..k {
        let factor = m.powi(i as i32);
        let arrival = (1.0 - 1.0 / factor) * theta;
        for (j, r) in sp.requests.iter().enumerate() {
            requests.push(Request::weighted(
                i as u64 * n + j as u64,
                r.node,
                arrival,
                MonotoneCost::Linear,
                r.weight * factor,
            )?);
        }
    }
    Instance::new(sp.tree.clone(), requests, theta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pwl(rid: u64, node: usize, points: &[(f64, f64)]) -> Request {
        Request::new(
            rid,
            NodeId(node),
            0.0,
            MonotoneCost::Pwl {
                points: points.to_vec(),
            },
        )
        .unwrap()
    }

    fn edge_with_linear(weight: f64, horizon: f64) -> SinglePhaseInstance {
        let tree = WeightedTree::single_edge(weight).unwrap();
        SinglePhaseInstance::new(tree, vec![Request::linear(0, NodeId(1), 0.0)], horizon).unwrap()
    }

    fn ids(v: &[usize]) -> NodeSet {
        v.iter().map(|&i| NodeId(i)).collect()
    }

    #[test]
    fn covered_subtree_examples() {
        let tree = WeightedTree::path(&[5.0, 2.0]).unwrap();
        // waiting 1 at q and 3 at u at time 1
        let sp = SinglePhaseInstance::new(
            tree.clone(),
            vec![
                pwl(0, 1, &[(0.0, 0.0), (1.0, 1.0)]),
                pwl(1, 2, &[(0.0, 0.0), (1.0, 3.0)]),
            ],
            5.0,
        )
        .unwrap();
        assert_eq!(
            cov_subtree(&sp, NodeId(2), 1.0),
            CoveredResult {
                nodes: ids(&[2]),
                surplus: 3.0
            }
        );
        assert_eq!(
            cov_subtree(&sp, NodeId(1), 1.0),
            CoveredResult {
                nodes: ids(&[1, 2]),
                surplus: 2.0
            }
        );
        let sp = SinglePhaseInstance::new(
            tree,
            vec![
                pwl(0, 1, &[(0.0, 0.0), (1.0, 1.0)]),
                pwl(1, 2, &[(0.0, 0.0), (1.0, 1.0)]),
            ],
            5.0,
        )
        .unwrap();
        assert_eq!(
            cov_subtree(&sp, NodeId(1), 1.0),
            CoveredResult {
                nodes: ids(&[1]),
                surplus: 1.0
            }
        );
    }

    #[test]
    fn opt_on_single_edge() {
        let sp = edge_with_linear(2.0, 10.0);
        assert_eq!(opt_single_phase(&sp, 1.5), (ids(&[0]), 1.5));
        assert_eq!(opt_single_phase(&sp, 2.0), (ids(&[0, 1]), 2.0));
        let empty =
            SinglePhaseInstance::new(WeightedTree::single_edge(2.0).unwrap(), vec![], 1.0).unwrap();
        assert_eq!(opt_single_phase(&empty, 1.0), (ids(&[0]), 0.0));
    }

    #[test]
    fn everything_mature_serves_whole_tree() {
        let tree = WeightedTree::from_parent_weights(&[(0, 1.0), (1, 1.0), (1, 1.0)]).unwrap();
        let reqs = (1..=3)
            .map(|v| Request::linear(v as u64, NodeId(v), 0.0))
            .collect();
        let sp = SinglePhaseInstance::new(tree, reqs, 100.0).unwrap();
        let (x, cost) = opt_single_phase(&sp, 50.0);
        assert_eq!(x, ids(&[0, 1, 2, 3]));
        assert_eq!(cost, 3.0);
    }

    #[test]
    fn optimality_checker_witnesses() {
        let tree = WeightedTree::from_parent_weights(&[(0, 1.0), (1, 1.0), (1, 5.0)]).unwrap();
        let reqs = vec![Request::linear(0, NodeId(2), 0.0)];
        let sp = SinglePhaseInstance::new(tree, reqs, 100.0).unwrap();
        let t = 10.0;
        let (x, _) = opt_single_phase(&sp, t);
        assert_eq!(check_optimality(&sp, &x, t, 1e-9), Ok(()));
        assert!(matches!(
            check_optimality(&sp, &ids(&[0]), t, 1e-9),
            Err(OptimalityViolation::Uncovered { .. })
        ));
        assert!(matches!(
            check_optimality(&sp, &ids(&[0, 1, 2, 3]), t, 1e-9),
            Err(OptimalityViolation::Undercovered {
                node: NodeId(3),
                ..
            })
        ));
    }

    #[test]
    fn threshold_search() {
        let sp = edge_with_linear(2.0, 10.0);
        assert_eq!(opt_threshold(&sp, 1.0).unwrap(), Some(1.0));
        assert_eq!(opt_threshold(&sp, 2.0).unwrap(), Some(2.0));
        assert_eq!(opt_threshold(&sp, 2.5).unwrap(), None);
    }

    #[test]
    fn threshold_search_concave_piece() {
        // opt(t) = min(4t, 1 + 3t, 2 + t, 3)
        let tree = WeightedTree::from_parent_weights(&[(0, 1.0), (0, 2.0)]).unwrap();
        let reqs = vec![
            Request::linear(0, NodeId(1), 0.0),
            Request::weighted(1, NodeId(2), 0.0, MonotoneCost::Linear, 3.0).unwrap(),
        ];
        let sp = SinglePhaseInstance::new(tree, reqs, 10.0).unwrap();
        let t = opt_threshold(&sp, 2.5).unwrap().unwrap();
        assert!((t - 0.625).abs() < 1e-12, "{t}");
        let t = opt_threshold(&sp, 2.9).unwrap().unwrap();
        assert!((t - 0.9).abs() < 1e-12, "{t}");
    }

    #[test]
    fn one_doubling_round() {
        let sp = edge_with_linear(2.0, 100.0);
        let run = doubling_run(&sp, 100.0).unwrap();
        assert_eq!(run.schedule.len(), 1);
        assert_eq!(run.schedule.services[0].time, 1.0);
        assert_eq!(run.alg_cost, 3.0);
        assert_eq!(run.opt_cost, 2.0);
        assert_eq!(run.ratio, 1.5);
    }

    #[test]
    fn early_expiration_is_free_of_services() {
        let sp = edge_with_linear(2.0, 100.0);
        let run = doubling_run(&sp, 0.5).unwrap();
        assert!(run.schedule.is_empty());
        assert_eq!(run.alg_cost, 0.5);
        assert_eq!(run.ratio, 1.0);
    }

    #[test]
    fn sweep_stays_within_four() {
        let tree =
            WeightedTree::from_parent_weights(&[(0, 3.0), (1, 1.5), (1, 7.0), (0, 2.5), (4, 4.0)])
                .unwrap();
        let reqs = vec![
            Request::linear(0, NodeId(2), 0.0),
            Request::weighted(1, NodeId(3), 0.0, MonotoneCost::Linear, 0.3).unwrap(),
            pwl(2, 5, &[(0.0, 0.0), (2.0, 1.0), (6.0, 9.0)]),
            Request::weighted(3, NodeId(4), 0.0, MonotoneCost::Linear, 2.0).unwrap(),
        ];
        let sp = SinglePhaseInstance::new(tree, reqs, 40.0).unwrap();
        let plan = DoublingPlan::new(&sp).unwrap();
        for theta in adversary_thetas(&plan, sp.horizon, 400) {
            let run = evaluate_plan(&sp, &plan, theta);
            assert!(run.ratio <= 4.0 + 1e-9, "theta {theta}: {run:?}");
        }
    }

    #[test]
    fn deadline_costs_are_rejected() {
        let tree = WeightedTree::single_edge(1.0).unwrap();
        let r = Request::deadline(0, NodeId(1), 0.0, 1.0, 1.0).unwrap();
        assert!(matches!(
            SinglePhaseInstance::new(tree, vec![r], 2.0),
            Err(MlapError::UnsupportedCostKind(_))
        ));
    }

    #[test]
    fn nested_phases() {
        let sp = edge_with_linear(2.0, 1.0);
        let one = nested_phase_embed(&sp, 1, 10.0, 1.0).unwrap();
        assert_eq!(one.requests, sp.requests);
        let two = nested_phase_embed(&sp, 2, 10.0, 1.0).unwrap();
        assert_eq!(two.requests.len(), 2);
        assert!((two.requests[1].arrival - 0.9).abs() < 1e-15);
        assert_eq!(two.requests[1].weight, 10.0);
        let bad = SinglePhaseInstance::new(
            WeightedTree::single_edge(1.0).unwrap(),
            vec![pwl(0, 1, &[(0.0, 0.0), (1.0, 1.0)])],
            1.0,
        )
        .unwrap();
        assert!(matches!(
            nested_phase_embed(&bad, 2, 10.0, 1.0),
            Err(MlapError::UnsupportedCostKind(_))
        ));
    }
}

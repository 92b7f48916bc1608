//! Tree and instance transformations: reparenting into an L-decreasing
//! tree, lifting services back, and embeddings of discrete-time and
//! discontinuous-cost instances into the continuous model.

use serde::{Deserialize, Serialize};

use crate::engine::{OnlineAlgorithm, PlannedService, View};
use crate::error::{MlapError, Result};
use crate::model::{Instance, MonotoneCost, NodeId, NodeSet, Request, Schedule, WeightedTree};

/// A reparented copy of a tree with the same node ids and weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedTree {
    pub tree: WeightedTree,
    pub original: WeightedTree,
    pub l: f64,
}

/// Hangs every node below its lowest proper ancestor of weight at least
/// `l` times its own, or below the root if there is none.
pub fn to_l_decreasing(tree: &WeightedTree, l: f64) -> Result<ReducedTree> {
    if !(l >= 1.0 && l.is_finite()) {
        return Err(MlapError::BadParams(format!(
            "L must be at least 1, got {l}"
        )));
    }
    let mut parent = vec![None; tree.len()];
    let mut weight = vec![0.0; tree.len()];
    for u in tree.nodes().skip(1) {
        weight[u.0] = tree.weight(u);
        let mut w = tree.parent(u);
        while let Some(a) = w {
            if a == NodeId::ROOT || tree.weight(a) >= l * tree.weight(u) {
                break;
            }
            w = tree.parent(a);
        }
        parent[u.0] = w;
    }
    Ok(ReducedTree {
        tree: WeightedTree::build(parent, weight),
        original: tree.clone(),
        l,
    })
}

impl ReducedTree {
    /// Adds, for every node of `x`, the original path up to its new parent.
    pub fn lift(&self, x: &NodeSet) -> Result<NodeSet> {
        if !self.tree.is_service_tree(x) {
            return Err(MlapError::InvalidServiceTree { time: f64::NAN });
        }
        let mut out = x.clone();
        for &u in x {
            let Some(top) = self.tree.parent(u) else {
                continue;
            };
            let mut a = self.original.parent(u);
            while let Some(v) = a {
                if v == top {
                    break;
                }
                out.insert(v);
                a = self.original.parent(v);
            }
        }
        Ok(out)
    }

    /// `(D - 1) L + 1`, the lifting inflation bound on the original depth `D`.
    pub fn lift_bound(&self) -> f64 {
        (self.original.max_depth().saturating_sub(1)) as f64 * self.l + 1.0
    }
}

pub fn lift_service(reduced: &ReducedTree, x: &NodeSet) -> Result<NodeSet> {
    reduced.lift(x)
}

/// Runs an algorithm on the reduced tree and issues every service it makes,
/// lifted to the original tree, at the same time.
pub struct LiftedAlgorithm<A> {
    pub inner: A,
    pub reduced: ReducedTree,
    /// Pending set as the inner algorithm would see it.
    shadow: Vec<Request>,
    last_inner: Option<NodeSet>,
}

impl<A: OnlineAlgorithm> LiftedAlgorithm<A> {
    pub fn new(inner: A, reduced: ReducedTree) -> Self {
        Self {
            inner,
            reduced,
            shadow: Vec::new(),
            last_inner: None,
        }
    }

    fn inner_view<'a>(tree: &'a WeightedTree, shadow: &'a [Request], generation: u64) -> View<'a> {
        View {
            tree,
            pending: shadow,
            generation,
        }
    }
}

pub fn wrap_algorithm<A: OnlineAlgorithm>(
    inner: A,
    tree: &WeightedTree,
    l: f64,
) -> Result<LiftedAlgorithm<A>> {
    Ok(LiftedAlgorithm::new(inner, to_l_decreasing(tree, l)?))
}

impl<A: OnlineAlgorithm> OnlineAlgorithm for LiftedAlgorithm<A> {
    fn name(&self) -> String {
        format!("lifted[{}]", self.inner.name())
    }

    fn on_arrival(&mut self, request: &Request, t: f64) {
        self.shadow.push(request.clone());
        self.inner.on_arrival(request, t);
    }

    fn next_trigger(&mut self, t: f64, view: &View) -> Option<f64> {
        let inner_view = Self::inner_view(&self.reduced.tree, &self.shadow, view.generation);
        self.inner.next_trigger(t, &inner_view)
    }

    fn build_service(&mut self, t: f64, view: &View) -> PlannedService {
        let inner_view = Self::inner_view(&self.reduced.tree, &self.shadow, view.generation);
        let plan = self.inner.build_service(t, &inner_view);
        let nodes = self
            .reduced
            .lift(&plan.nodes)
            .expect("inner algorithm emits service trees");
        self.last_inner = Some(plan.nodes.clone());
        PlannedService {
            nodes,
            parts: Vec::new(),
            inner: Some(Box::new(plan)),
        }
    }

    fn on_service(&mut self, t: f64, _nodes: &NodeSet, _served: &[Request]) {
        if let Some(inner_nodes) = self.last_inner.take() {
            let served = crate::engine::take_served(&mut self.shadow, &inner_nodes, t);
            self.inner.on_service(t, &inner_nodes, &served);
        }
    }

    fn on_horizon(&mut self, t: f64, view: &View) -> Option<NodeSet> {
        let inner_view = Self::inner_view(&self.reduced.tree, &self.shadow, view.generation);
        let inner = self.inner.on_horizon(t, &inner_view)?;
        let lifted = self.reduced.lift(&inner).ok()?;
        // the inner algorithm only knows its own pending set
        let outer: Vec<NodeId> = view.pending.iter().map(|r| r.node).collect();
        let mut nodes = lifted;
        nodes.extend(self.reduced.original.spanning_subtree(&outer));
        self.last_inner = Some(inner);
        Some(nodes)
    }
}

/// Deadline penalties set to the weight of the path from the request's node
/// to the root, which no schedule gains from paying.
pub fn encode_deadlines(inst: &Instance) -> Result<Instance> {
    let mut requests = inst.requests.clone();
    for r in &mut requests {
        match &mut r.cost {
            MonotoneCost::Deadline { penalty, .. } => *penalty = inst.tree.path_weight(r.node),
            other => return Err(MlapError::UnsupportedCostKind(other.kind_name().into())),
        }
    }
    Instance::new(inst.tree.clone(), requests, inst.horizon)
}

/// A request with waiting costs sampled at integer times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteRequest {
    pub rid: u64,
    pub node: NodeId,
    pub arrival: u64,
    /// Cost at `arrival, arrival + 1, ...`.
    pub samples: Vec<f64>,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteInstance {
    pub tree: WeightedTree,
    pub requests: Vec<DiscreteRequest>,
    pub horizon: u64,
}

/// Linear interpolation between integer samples, constant after the last.
/// A nonzero sample at the arrival is subtracted: it is paid by every
/// schedule and the continuous model needs zero cost at arrival.
pub fn embed_discrete(inst: &DiscreteInstance) -> Result<Instance> {
    let mut requests = Vec::with_capacity(inst.requests.len());
    for r in &inst.requests {
        if r.samples.windows(2).any(|w| w[1] < w[0]) || r.samples.iter().any(|s| !s.is_finite()) {
            return Err(MlapError::NonMonotoneSamples { rid: r.rid });
        }
        let base = r.samples.first().copied().unwrap_or(0.0);
        let a = r.arrival as f64;
        let mut points: Vec<(f64, f64)> = r
            .samples
            .iter()
            .enumerate()
            .map(|(k, &s)| (a + k as f64, s - base))
            .collect();
        if points.is_empty() {
            points.push((a, 0.0));
        }
        requests.push(Request::weighted(
            r.rid,
            r.node,
            a,
            MonotoneCost::Pwl { points },
            r.weight,
        )?);
    }
    Instance::new(inst.tree.clone(), requests, inst.horizon as f64)
}

/// Disjoint time intervals `[h, h + eps]` inserted into the time axis.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GapSet {
    gaps: Vec<(f64, f64)>,
}

impl GapSet {
    /// Gaps sharing a start collapse into the first one given.
    pub fn new(gaps: Vec<(f64, f64)>) -> Result<Self> {
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(gaps.len());
        for (h, e) in gaps {
            if !(h.is_finite() && e.is_finite() && e > 0.0) {
                return Err(MlapError::BadParams(format!(
                    "gap ({h}, {e}) needs a finite start and positive length"
                )));
            }
            if !out.iter().any(|g| g.0 == h) {
                out.push((h, e));
            }
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self { gaps: out })
    }

    pub fn gaps(&self) -> &[(f64, f64)] {
        &self.gaps
    }

    pub fn is_empty(&self) -> bool {
        self.gaps.is_empty()
    }

    /// `t` plus the lengths of all gaps starting strictly before `t`.
    pub fn shift(&self, t: f64) -> f64 {
        t + self
            .gaps
            .iter()
            .filter(|g| g.0 < t)
            .map(|g| g.1)
            .sum::<f64>()
    }

    pub fn length_at(&self, h: f64) -> Option<f64> {
        self.gaps.iter().find(|g| g.0 == h).map(|g| g.1)
    }

    pub fn shift_schedule(&self, s: &Schedule) -> Schedule {
        Schedule {
            services: s
                .services
                .iter()
                .map(|x| crate::model::Service {
                    time: self.shift(x.time),
                    nodes: x.nodes.clone(),
                })
                .collect(),
        }
    }
}

/// One gap at every deadline, a thousandth of the way to the next event.
pub fn default_gaps(inst: &Instance) -> GapSet {
    let mut events: Vec<f64> = vec![inst.horizon];
    for r in &inst.requests {
        events.push(r.arrival);
        events.extend(r.deadline_time());
        if let Some(f) = r.plf() {
            events.extend(f.breakpoints());
        }
    }
    events.sort_by(f64::total_cmp);
    events.dedup();
    let mut starts: Vec<f64> = inst
        .requests
        .iter()
        .filter_map(|r| r.deadline_time())
        .collect();
    starts.sort_by(f64::total_cmp);
    starts.dedup();
    let gaps = starts
        .into_iter()
        .map(|h| {
            let next = events.iter().copied().find(|&e| e > h);
            (h, 1e-3 * next.map_or(1.0, |n| n - h))
        })
        .collect();
    GapSet::new(gaps).expect("gap lengths are positive")
}

/// Replaces every cost jump by a linear ramp over the gap that starts at the
/// jump, shifting all later times by the gaps before them. The result is a
/// continuous instance on which `shift` maps schedules cost-preservingly.
pub fn stretch(inst: &Instance, gaps: &GapSet) -> Result<Instance> {
    let horizon = gaps.shift(inst.horizon) + gaps.length_at(inst.horizon).unwrap_or(0.0);
    let mut requests = Vec::with_capacity(inst.requests.len());
    for r in &inst.requests {
        let a = r.arrival;
        let mut knots: Vec<f64> = vec![a, inst.horizon];
        match &r.cost {
            MonotoneCost::Linear => {}
            MonotoneCost::Deadline { deadline, .. } => {
                if gaps.length_at(*deadline).is_none() {
                    return Err(MlapError::MissingGap(*deadline));
                }
                knots.push(*deadline);
            }
            MonotoneCost::Pwl { points } => knots.extend(points.iter().map(|p| p.0)),
        }
        knots.extend(gaps.gaps().iter().map(|g| g.0));
        knots.retain(|&t| t >= a);
        knots.sort_by(f64::total_cmp);
        knots.dedup();
        let mut points = Vec::with_capacity(2 * knots.len());
        for &t in &knots {
            let left = r.cost.eval(a, t);
            points.push((gaps.shift(t), left));
            if let Some(e) = gaps.length_at(t) {
                let right = match &r.cost {
                    MonotoneCost::Deadline { deadline, penalty } if *deadline == t => *penalty,
                    _ => left,
                };
                points.push((gaps.shift(t) + e, right));
            }
        }
        let mut cost = MonotoneCost::Pwl { points };
        if r.cost == MonotoneCost::Linear && gaps.is_empty() {
            cost = MonotoneCost::Linear;
        }
        requests.push(Request::weighted(
            r.rid,
            r.node,
            gaps.shift(a),
            cost,
            r.weight,
        )?);
    }
    Instance::new(inst.tree.clone(), requests, horizon)
}

//! Weighted rooted trees, requests, services, schedules and cost accounting.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{MlapError, Result};
use crate::plf::{interpolate, Plf};

/// Absolute tolerance for comparing computed times.
pub const EPS_TIME: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);

    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub type NodeSet = BTreeSet<NodeId>;

/// One non-root node in the serialized tree description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: usize,
    pub parent: usize,
    pub weight: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TreeSpec {
    pub nodes: Vec<NodeSpec>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub nodes: usize,
    pub depth: usize,
    pub quasi_root: Option<NodeId>,
}

/// Checks the structural assumptions on a tree description: dense ids,
/// acyclic parent links reaching the root, positive weights and, when
/// `require_quasi_root` is set, a root with exactly one child.
pub fn validate_tree(spec: &TreeSpec, require_quasi_root: bool) -> Result<ValidationReport> {
    let n = spec.nodes.len() + 1;
    let mut parent = vec![None; n];
    let mut weight = vec![0.0; n];
    for node in &spec.nodes {
        if node.id == 0 || node.id >= n {
            return Err(MlapError::UnknownNode(NodeId(node.id)));
        }
        if parent[node.id].is_some() {
            return Err(MlapError::DuplicateNode(NodeId(node.id)));
        }
        if node.parent >= n {
            return Err(MlapError::UnknownNode(NodeId(node.parent)));
        }
        if !(node.weight > 0.0) || !node.weight.is_finite() {
            return Err(MlapError::NonPositiveWeight {
                node: NodeId(node.id),
                weight: node.weight,
            });
        }
        parent[node.id] = Some(node.parent);
        weight[node.id] = node.weight;
    }
    if let Some(missing) = (1..n).find(|&i| parent[i].is_none()) {
        return Err(MlapError::MissingNode(NodeId(missing)));
    }
    // depth by memoized walk; a walk longer than n steps means a cycle
    let mut depth: Vec<Option<usize>> = vec![None; n];
    depth[0] = Some(0);
    for start in 1..n {
        let mut path = Vec::new();
        let mut cur = start;
        while depth[cur].is_none() {
            path.push(cur);
            if path.len() > n {
                return Err(MlapError::CycleDetected(NodeId(start)));
            }
            cur = parent[cur].expect("non-root has a parent");
        }
        let mut d = depth[cur].unwrap();
        for &v in path.iter().rev() {
            d += 1;
            depth[v] = Some(d);
        }
    }
    let root_children: Vec<usize> = (1..n).filter(|&i| parent[i] == Some(0)).collect();
    if require_quasi_root && root_children.len() != 1 {
        return Err(MlapError::MultipleRootChildren(root_children.len()));
    }
    Ok(ValidationReport {
        nodes: n,
        depth: depth.iter().map(|d| d.unwrap()).max().unwrap_or(0),
        quasi_root: (root_children.len() == 1).then(|| NodeId(root_children[0])),
    })
}

/// A rooted tree with positive weights on non-root nodes. Node 0 is the root.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedTree {
    parent: Vec<Option<NodeId>>,
    weight: Vec<f64>,
    children: Vec<Vec<NodeId>>,
    depth: Vec<usize>,
    max_depth: usize,
    // Euler intervals for ancestor queries
    tin: Vec<usize>,
    tout: Vec<usize>,
}

impl WeightedTree {
    /// Entry `k` of `nodes` describes node `k + 1` as `(parent, weight)`.
    pub fn from_parent_weights(nodes: &[(usize, f64)]) -> Result<Self> {
        let spec = TreeSpec {
            nodes: nodes
                .iter()
                .enumerate()
                .map(|(k, &(parent, weight))| NodeSpec {
                    id: k + 1,
                    parent,
                    weight,
                })
                .collect(),
        };
        Self::from_spec(&spec)
    }

    pub fn from_spec(spec: &TreeSpec) -> Result<Self> {
        validate_tree(spec, false)?;
        let n = spec.nodes.len() + 1;
        let mut parent = vec![None; n];
        let mut weight = vec![0.0; n];
        for node in &spec.nodes {
            parent[node.id] = Some(NodeId(node.parent));
            weight[node.id] = node.weight;
        }
        Ok(Self::build(parent, weight))
    }

    /// Single edge root -> q.
    pub fn single_edge(weight: f64) -> Result<Self> {
        Self::from_parent_weights(&[(0, weight)])
    }

    /// Path root -> 1 -> 2 -> ... with the given weights from the top down.
    pub fn path(weights: &[f64]) -> Result<Self> {
        let nodes: Vec<(usize, f64)> = weights.iter().enumerate().map(|(k, &w)| (k, w)).collect();
        Self::from_parent_weights(&nodes)
    }

    pub(crate) fn build(parent: Vec<Option<NodeId>>, weight: Vec<f64>) -> Self {
        let n = parent.len();
        let mut children = vec![Vec::new(); n];
        for (v, p) in parent.iter().enumerate() {
            if let Some(p) = p {
                children[p.0].push(NodeId(v));
            }
        }
        let mut depth = vec![0; n];
        let mut tin = vec![0; n];
        let mut tout = vec![0; n];
        let mut clock = 0;
        // iterative DFS: (node, entered)
        let mut stack = vec![(NodeId::ROOT, false)];
        while let Some((v, entered)) = stack.pop() {
            if entered {
                tout[v.0] = clock;
                continue;
            }
            tin[v.0] = clock;
            clock += 1;
            stack.push((v, true));
            for &c in children[v.0].iter().rev() {
                depth[c.0] = depth[v.0] + 1;
                stack.push((c, false));
            }
        }
        let max_depth = depth.iter().copied().max().unwrap_or(0);
        Self {
            parent,
            weight,
            children,
            depth,
            max_depth,
            tin,
            tout,
        }
    }

    pub fn to_spec(&self) -> TreeSpec {
        TreeSpec {
            nodes: (1..self.len())
                .map(|v| NodeSpec {
                    id: v,
                    parent: self.parent[v].unwrap().0,
                    weight: self.weight[v],
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() <= 1
    }

    pub fn root(&self) -> NodeId {
        NodeId::ROOT
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.len()).map(NodeId)
    }

    pub fn contains(&self, v: NodeId) -> bool {
        v.0 < self.len()
    }

    pub fn parent(&self, v: NodeId) -> Option<NodeId> {
        self.parent[v.0]
    }

    pub fn weight(&self, v: NodeId) -> f64 {
        self.weight[v.0]
    }

    pub fn children(&self, v: NodeId) -> &[NodeId] {
        &self.children[v.0]
    }

    pub fn depth(&self, v: NodeId) -> usize {
        self.depth[v.0]
    }

    /// Maximum node depth, `D`.
    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn quasi_root(&self) -> Option<NodeId> {
        match self.children(NodeId::ROOT) {
            [q] => Some(*q),
            _ => None,
        }
    }

    /// True when `a` is `b` or an ancestor of `b`.
    pub fn is_ancestor(&self, a: NodeId, b: NodeId) -> bool {
        self.tin[a.0] <= self.tin[b.0] && self.tout[b.0] <= self.tout[a.0]
    }

    /// The child of the root whose subtree holds `v` (`None` for the root).
    pub fn component_of(&self, v: NodeId) -> Option<NodeId> {
        let mut cur = v;
        loop {
            match self.parent(cur) {
                None => return None,
                Some(NodeId::ROOT) => return Some(cur),
                Some(p) => cur = p,
            }
        }
    }

    /// Nodes of the subtree rooted at `v` in preorder.
    pub fn subtree(&self, v: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![v];
        while let Some(u) = stack.pop() {
            out.push(u);
            stack.extend(self.children(u).iter().rev());
        }
        out
    }

    /// All nodes ordered so that children come before their parents.
    pub fn postorder(&self) -> Vec<NodeId> {
        let mut order = self.subtree(NodeId::ROOT);
        order.reverse();
        order
    }

    /// Sum of weights on the path from `v` up to the root.
    pub fn path_weight(&self, v: NodeId) -> f64 {
        let mut total = 0.0;
        let mut cur = Some(v);
        while let Some(u) = cur {
            total += self.weight(u);
            cur = self.parent(u);
        }
        total
    }

    /// Total weight of a node set.
    pub fn set_weight<'a>(&self, set: impl IntoIterator<Item = &'a NodeId>) -> Result<f64> {
        let mut total = 0.0;
        for &v in set {
            if !self.contains(v) {
                return Err(MlapError::UnknownNode(v));
            }
            total += self.weight(v);
        }
        Ok(total)
    }

    /// Weight of a set already known to contain only tree nodes.
    pub fn weight_of(&self, set: &NodeSet) -> f64 {
        set.iter().map(|&v| self.weight(v)).sum()
    }

    pub fn is_service_tree(&self, set: &NodeSet) -> bool {
        set.contains(&NodeId::ROOT)
            && set
                .iter()
                .all(|&v| self.contains(v) && self.parent(v).is_none_or(|p| set.contains(&p)))
    }

    /// Smallest service tree containing every node in `nodes`.
    pub fn spanning_subtree<'a>(&self, nodes: impl IntoIterator<Item = &'a NodeId>) -> NodeSet {
        let mut out = NodeSet::new();
        out.insert(NodeId::ROOT);
        for &v in nodes {
            let mut cur = Some(v);
            while let Some(u) = cur {
                if !out.insert(u) {
                    break;
                }
                cur = self.parent(u);
            }
        }
        out
    }

    pub fn is_l_decreasing(&self, l: f64) -> bool {
        (1..self.len()).all(|v| {
            let p = self.parent[v].unwrap();
            p == NodeId::ROOT || self.weight(p) >= l * self.weight[v]
        })
    }

    pub fn min_weight(&self) -> f64 {
        self.weight[1..]
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let weight = self.weight.iter().map(|w| w * factor).collect();
        Self::build(self.parent.clone(), weight)
    }
}

/// A non-decreasing waiting-cost function. Values are per unit of request
/// weight; all kinds evaluate to zero up to the arrival time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MonotoneCost {
    /// `t - arrival`.
    Linear,
    /// Zero through the deadline, `penalty` strictly after it.
    Deadline { deadline: f64, penalty: f64 },
    /// Linear interpolation between `(time, value)` points, constant after
    /// the last one.
    Pwl { points: Vec<(f64, f64)> },
}

impl MonotoneCost {
    pub fn eval(&self, arrival: f64, t: f64) -> f64 {
        if t <= arrival {
            return 0.0;
        }
        match self {
            MonotoneCost::Linear => t - arrival,
            MonotoneCost::Deadline { deadline, penalty } => {
                if t <= *deadline {
                    0.0
                } else {
                    *penalty
                }
            }
            MonotoneCost::Pwl { points } => interpolate(points, 0.0, t),
        }
    }

    /// Exact piecewise-linear form; `None` for the discontinuous deadline kind.
    pub fn to_plf(&self, arrival: f64) -> Option<Plf> {
        match self {
            MonotoneCost::Linear => Some(Plf::ramp(arrival, 1.0)),
            MonotoneCost::Deadline { .. } => None,
            MonotoneCost::Pwl { points } => {
                let mut pts: Vec<(f64, f64)> = vec![(arrival, 0.0)];
                pts.extend(points.iter().copied().filter(|p| p.0 > arrival));
                Some(Plf::from_points(pts, 0.0))
            }
        }
    }

    pub fn is_continuous(&self) -> bool {
        !matches!(self, MonotoneCost::Deadline { .. })
    }

    pub fn deadline(&self) -> Option<f64> {
        match self {
            MonotoneCost::Deadline { deadline, .. } => Some(*deadline),
            _ => None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            MonotoneCost::Linear => "linear",
            MonotoneCost::Deadline { .. } => "deadline",
            MonotoneCost::Pwl { .. } => "pwl",
        }
    }

    fn validate(&self, arrival: f64) -> std::result::Result<(), String> {
        match self {
            MonotoneCost::Linear => Ok(()),
            MonotoneCost::Deadline { deadline, penalty } => {
                if !(deadline.is_finite() && *deadline >= arrival) {
                    return Err(format!("deadline {deadline} precedes arrival {arrival}"));
                }
                if !(penalty.is_finite() && *penalty >= 0.0) {
                    return Err(format!("penalty {penalty} must be finite and non-negative"));
                }
                Ok(())
            }
            MonotoneCost::Pwl { points } => {
                if points.is_empty() {
                    return Err("piecewise-linear cost needs at least one point".into());
                }
                for w in points.windows(2) {
                    if !(w[1].0 > w[0].0) {
                        return Err("breakpoint times must strictly increase".into());
                    }
                    if w[1].1 < w[0].1 {
                        return Err("breakpoint values must not decrease".into());
                    }
                }
                if points
                    .iter()
                    .any(|p| !p.0.is_finite() || !p.1.is_finite() || p.1 < 0.0)
                {
                    return Err("breakpoints must be finite and non-negative".into());
                }
                let at_arrival = interpolate(points, 0.0, arrival);
                if at_arrival != 0.0 {
                    return Err(format!(
                        "cost is {at_arrival} at arrival {arrival}; continuity needs 0"
                    ));
                }
                Ok(())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub rid: u64,
    pub node: NodeId,
    pub arrival: f64,
    pub cost: MonotoneCost,
    /// Multiplicity; the waiting cost is `weight * cost(t)`.
    pub weight: f64,
}

impl Request {
    pub fn new(rid: u64, node: NodeId, arrival: f64, cost: MonotoneCost) -> Result<Self> {
        Self::weighted(rid, node, arrival, cost, 1.0)
    }

    pub fn weighted(
        rid: u64,
        node: NodeId,
        arrival: f64,
        cost: MonotoneCost,
        weight: f64,
    ) -> Result<Self> {
        let bad = |reason: String| MlapError::InvalidRequest { rid, reason };
        if !(arrival.is_finite() && arrival >= 0.0) {
            return Err(bad(format!(
                "arrival {arrival} must be finite and non-negative"
            )));
        }
        if !(weight.is_finite() && weight > 0.0) {
            return Err(bad(format!("weight {weight} must be positive")));
        }
        cost.validate(arrival).map_err(bad)?;
        Ok(Self {
            rid,
            node,
            arrival,
            cost,
            weight,
        })
    }

    pub fn linear(rid: u64, node: NodeId, arrival: f64) -> Self {
        Self::new(rid, node, arrival, MonotoneCost::Linear).expect("valid linear request")
    }

    pub fn deadline(
        rid: u64,
        node: NodeId,
        arrival: f64,
        deadline: f64,
        penalty: f64,
    ) -> Result<Self> {
        Self::new(
            rid,
            node,
            arrival,
            MonotoneCost::Deadline { deadline, penalty },
        )
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.weight * self.cost.eval(self.arrival, t)
    }

    pub fn plf(&self) -> Option<Plf> {
        self.cost.to_plf(self.arrival).map(|f| f.scale(self.weight))
    }

    pub fn deadline_time(&self) -> Option<f64> {
        self.cost.deadline()
    }
}

/// Evaluates the waiting cost of a request at time `t`.
pub fn eval_cost(request: &Request, t: f64) -> f64 {
    request.eval(t)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Service {
    pub time: f64,
    pub nodes: NodeSet,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub services: Vec<Service>,
}

impl Schedule {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, time: f64, nodes: NodeSet) {
        self.services.push(Service { time, nodes });
    }

    pub fn len(&self) -> usize {
        self.services.len()
    }

    pub fn is_empty(&self) -> bool {
        self.services.is_empty()
    }

    /// Sorts by time and merges services whose times differ by at most `eps`.
    pub fn normalized(&self, eps: f64) -> Schedule {
        let mut services = self.services.clone();
        services.sort_by(|a, b| a.time.total_cmp(&b.time));
        let mut out: Vec<Service> = Vec::with_capacity(services.len());
        for s in services {
            match out.last_mut() {
                Some(last) if s.time - last.time <= eps => last.nodes.extend(s.nodes),
                _ => out.push(s),
            }
        }
        Schedule { services: out }
    }

    pub fn scost(&self, tree: &WeightedTree) -> f64 {
        self.services.iter().map(|s| tree.weight_of(&s.nodes)).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub tree: WeightedTree,
    pub requests: Vec<Request>,
    pub horizon: f64,
}

impl Instance {
    pub fn new(tree: WeightedTree, requests: Vec<Request>, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon >= 0.0) {
            return Err(MlapError::BadParams(format!(
                "horizon {horizon} must be finite and non-negative"
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for r in &requests {
            let bad = |reason: String| MlapError::InvalidRequest { rid: r.rid, reason };
            if !seen.insert(r.rid) {
                return Err(bad("duplicate request id".into()));
            }
            if !tree.contains(r.node) {
                return Err(MlapError::UnknownNode(r.node));
            }
            if r.node == NodeId::ROOT {
                return Err(bad("requests must sit at non-root nodes".into()));
            }
            if r.arrival > horizon {
                return Err(bad(format!(
                    "arrival {} after horizon {horizon}",
                    r.arrival
                )));
            }
            if let Some(d) = r.deadline_time() {
                if d > horizon {
                    return Err(bad(format!("deadline {d} after horizon {horizon}")));
                }
            }
        }
        Ok(Self {
            tree,
            requests,
            horizon,
        })
    }

    pub fn is_deadline_instance(&self) -> bool {
        self.requests.iter().all(|r| r.deadline_time().is_some())
    }

    pub fn is_continuous(&self) -> bool {
        self.requests.iter().all(|r| r.cost.is_continuous())
    }

    /// Waiting cost at time `t` of all requests located in `nodes`.
    pub fn waiting_in(&self, nodes: &NodeSet, t: f64) -> f64 {
        self.requests
            .iter()
            .filter(|r| nodes.contains(&r.node))
            .map(|r| r.eval(t))
            .sum()
    }
}

/// How missed deadlines are priced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CostMode {
    /// A deadline request served after its deadline makes the schedule infeasible.
    #[default]
    Strict,
    /// Missed deadlines pay the stored penalty.
    Penalty,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostBreakdown {
    pub scost: f64,
    pub wcost: f64,
    pub total: f64,
    /// Serve time per request, in instance order.
    pub serve_times: Vec<f64>,
}

pub fn cost_of_schedule(instance: &Instance, schedule: &Schedule) -> Result<CostBreakdown> {
    cost_of_schedule_with(instance, schedule, CostMode::Strict)
}

pub fn cost_of_schedule_with(
    instance: &Instance,
    schedule: &Schedule,
    mode: CostMode,
) -> Result<CostBreakdown> {
    let tree = &instance.tree;
    let mut services: Vec<&Service> = schedule.services.iter().collect();
    services.sort_by(|a, b| a.time.total_cmp(&b.time));
    for s in &services {
        if !tree.is_service_tree(&s.nodes) {
            return Err(MlapError::InvalidServiceTree { time: s.time });
        }
    }
    let scost = services.iter().map(|s| tree.weight_of(&s.nodes)).sum();
    let mut wcost = 0.0;
    let mut serve_times = Vec::with_capacity(instance.requests.len());
    for r in &instance.requests {
        let served = services
            .iter()
            .find(|s| s.time >= r.arrival && s.nodes.contains(&r.node))
            .map(|s| s.time)
            .ok_or_else(|| {
                MlapError::InfeasibleSchedule(format!("request {} is never served", r.rid))
            })?;
        if mode == CostMode::Strict {
            if let Some(d) = r.deadline_time() {
                if served > d + EPS_TIME {
                    return Err(MlapError::InfeasibleSchedule(format!(
                        "request {} served at {served} after its deadline {d}",
                        r.rid
                    )));
                }
            }
        }
        wcost += r.eval(served);
        serve_times.push(served);
    }
    Ok(CostBreakdown {
        scost,
        wcost,
        total: scost + wcost,
        serve_times,
    })
}

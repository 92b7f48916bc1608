//! Offline algorithms: the level-by-level approximation for deadline
//! instances, interval stabbing, and exact oracles over a time grid.

use serde::{Deserialize, Serialize};

use crate::error::{MlapError, Result};
use crate::model::{Instance, NodeId, NodeSet, Schedule, WeightedTree, EPS_TIME};

/// Smallest subset of `candidates` hitting every interval `[a, d]`, by the
/// earliest-deadline greedy: an unhit interval takes the largest candidate
/// not after its deadline.
pub fn hitting_set_min(intervals: &[(f64, f64)], candidates: &[f64]) -> Result<Vec<f64>> {
    let mut cands = candidates.to_vec();
    cands.sort_by(f64::total_cmp);
    let mut order = intervals.to_vec();
    order.sort_by(|x, y| x.1.total_cmp(&y.1).then(x.0.total_cmp(&y.0)));
    let mut picked: Vec<f64> = Vec::new();
    for (a, d) in order {
        if picked.last().is_some_and(|&p| p >= a) {
            continue;
        }
        let k = cands.partition_point(|&c| c <= d);
        match k.checked_sub(1).map(|i| cands[i]) {
            Some(c) if c >= a => picked.push(c),
            _ => return Err(MlapError::UnstabbableInterval { a, d }),
        }
    }
    Ok(picked)
}

/// Service times per node; `S_v` is a subset of `S_parent(v)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeServiceTimes {
    pub times: Vec<Vec<f64>>,
}

impl NodeServiceTimes {
    pub fn of(&self, v: NodeId) -> &[f64] {
        &self.times[v.0]
    }

    pub fn is_nested(&self, tree: &WeightedTree) -> bool {
        tree.nodes().all(|v| match tree.parent(v) {
            Some(p) => self.times[v.0].iter().all(|t| self.times[p.0].contains(t)),
            None => true,
        })
    }

    /// One service per root time, dropping services that reach no edge.
    pub fn to_schedule(&self, tree: &WeightedTree) -> Schedule {
        let mut schedule = Schedule::new();
        for &t in &self.times[NodeId::ROOT.0] {
            let nodes: NodeSet = tree
                .nodes()
                .filter(|v| self.times[v.0].contains(&t))
                .collect();
            if nodes.len() > 1 {
                schedule.push(t, nodes);
            }
        }
        schedule
    }
}

/// Level-by-level stabbing for deadline instances: the root gets every
/// deadline, each other node the fewest parent times that hit the windows of
/// all requests in its subtree.
pub fn lbl_times(inst: &Instance) -> Result<NodeServiceTimes> {
    let tree = &inst.tree;
    let mut windows: Vec<Vec<(f64, f64)>> = vec![Vec::new(); tree.len()];
    let mut deadlines = Vec::new();
    for r in &inst.requests {
        let d = r
            .deadline_time()
            .ok_or_else(|| MlapError::UnsupportedCostKind(r.cost.kind_name().into()))?;
        deadlines.push(d);
        let mut v = Some(r.node);
        while let Some(u) = v {
            windows[u.0].push((r.arrival, d));
            v = tree.parent(u);
        }
    }
    deadlines.sort_by(f64::total_cmp);
    deadlines.dedup();
    let mut times = vec![Vec::new(); tree.len()];
    times[NodeId::ROOT.0] = deadlines;
    for v in tree.subtree(NodeId::ROOT).into_iter().skip(1) {
        if windows[v.0].is_empty() {
            continue;
        }
        let parent = tree.parent(v).expect("non-root");
        times[v.0] = hitting_set_min(&windows[v.0], &times[parent.0])?;
    }
    Ok(NodeServiceTimes { times })
}

pub fn lbl(inst: &Instance) -> Result<Schedule> {
    Ok(lbl_times(inst)?.to_schedule(&inst.tree))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grid {
    Deadlines,
    /// Arrival times; exact for every monotone cost since a service can move
    /// back to the latest arrival among the requests it serves.
    Arrivals,
    /// Arrivals plus every breakpoint of piecewise-linear costs.
    Breakpoints,
    Custom(Vec<f64>),
}

impl Grid {
    pub fn times(&self, inst: &Instance) -> Vec<f64> {
        let mut out: Vec<f64> = match self {
            Grid::Deadlines => inst
                .requests
                .iter()
                .filter_map(|r| r.deadline_time())
                .collect(),
            Grid::Arrivals => inst.requests.iter().map(|r| r.arrival).collect(),
            Grid::Breakpoints => {
                let mut v: Vec<f64> = inst.requests.iter().map(|r| r.arrival).collect();
                for r in &inst.requests {
                    if let Some(f) = r.plf() {
                        v.extend(f.breakpoints());
                    }
                    v.extend(r.deadline_time());
                }
                v
            }
            Grid::Custom(ts) => ts.clone(),
        };
        out.retain(|&t| t >= 0.0 && t <= inst.horizon);
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult {
    pub schedule: Schedule,
    pub cost: f64,
    pub grid: Vec<f64>,
}

pub const DEFAULT_ORACLE_LIMIT: f64 = 1e7;

/// Cheapest schedule whose services all happen at grid times.
///
/// A schedule is the same thing as nested per-node time sets, so the search
/// runs bottom-up over subsets of the grid: each node picks a subset of its
/// parent's set, paying its weight per time plus the waiting cost of its own
/// requests. Work is `nodes * 2^|grid| * |grid|`, checked against `limit`.
pub fn brute_force_opt(inst: &Instance, grid: &Grid, limit: f64) -> Result<OracleResult> {
    let times = grid.times(inst);
    let tree = &inst.tree;
    let g = times.len();
    let states = tree.len() as f64 * 2f64.powi(g as i32) * (g.max(1) as f64);
    if g > 24 || states > limit {
        return Err(MlapError::OracleTooLarge { states, limit });
    }
    let full = (1usize << g) - 1;
    let masks = 1usize << g;
    // own[v][S]: waiting cost of v's requests when v is served exactly at S
    let mut own = vec![vec![0.0f64; masks]; tree.len()];
    for r in &inst.requests {
        let row = &mut own[r.node.0];
        for (s, cell) in row.iter_mut().enumerate() {
            let first = (0..g).find(|&b| s >> b & 1 == 1 && times[b] >= r.arrival);
            *cell += match first {
                Some(b) => {
                    let t = times[b];
                    if r.deadline_time().is_some_and(|d| t > d + EPS_TIME) {
                        f64::INFINITY
                    } else {
                        r.eval(t)
                    }
                }
                None => f64::INFINITY,
            };
        }
    }
    // best[v][S]: min over submasks S' of S of the subtree cost with S_v = S'
    let mut best: Vec<Vec<f64>> = vec![Vec::new(); tree.len()];
    let mut arg: Vec<Vec<usize>> = vec![Vec::new(); tree.len()];
    for v in tree.postorder() {
        if v == NodeId::ROOT {
            continue;
        }
        let w = tree.weight(v);
        let mut f: Vec<f64> = (0..masks)
            .map(|s| {
                let mut c = w * s.count_ones() as f64 + own[v.0][s];
                for &u in tree.children(v) {
                    c += best[u.0][s];
                }
                c
            })
            .collect();
        let mut a: Vec<usize> = (0..masks).collect();
        for b in 0..g {
            for s in 0..masks {
                if s >> b & 1 == 1 && f[s ^ (1 << b)] < f[s] {
                    f[s] = f[s ^ (1 << b)];
                    a[s] = a[s ^ (1 << b)];
                }
            }
        }
        best[v.0] = f;
        arg[v.0] = a;
    }
    let cost: f64 = tree
        .children(NodeId::ROOT)
        .iter()
        .map(|&u| best[u.0][full])
        .sum();
    if !cost.is_finite() {
        return Err(MlapError::InfeasibleSchedule(
            "no schedule on this grid serves every request".into(),
        ));
    }
    let mut chosen = vec![0usize; tree.len()];
    chosen[NodeId::ROOT.0] = full;
    for v in tree.subtree(NodeId::ROOT).into_iter().skip(1) {
        let p = tree.parent(v).expect("non-root");
        chosen[v.0] = arg[v.0][chosen[p.0]];
    }
    let mut schedule = Schedule::new();
    for (b, &t) in times.iter().enumerate() {
        let nodes: NodeSet = tree.nodes().filter(|v| chosen[v.0] >> b & 1 == 1).collect();
        if nodes.len() > 1 {
            schedule.push(t, nodes);
        }
    }
    Ok(OracleResult {
        schedule,
        cost,
        grid: times,
    })
}

/// All subtrees rooted at `v`, or `OracleTooLarge` past `limit`.
pub fn rooted_subtrees(tree: &WeightedTree, v: NodeId, limit: usize) -> Result<Vec<NodeSet>> {
    let mut acc: Vec<NodeSet> = vec![[v].into()];
    for &u in tree.children(v) {
        let below = rooted_subtrees(tree, u, limit)?;
        let size = acc.len() * (below.len() + 1);
        if size > limit {
            return Err(MlapError::OracleTooLarge {
                states: size as f64,
                limit: limit as f64,
            });
        }
        let mut next = Vec::with_capacity(size);
        for base in &acc {
            next.push(base.clone());
            for sub in &below {
                let mut s = base.clone();
                s.extend(sub.iter().copied());
                next.push(s);
            }
        }
        acc = next;
    }
    Ok(acc)
}

/// Literal enumeration of one service tree (or none) per grid time. Only for
/// cross-checking [`brute_force_opt`] on tiny inputs.
pub fn exhaustive_opt(inst: &Instance, grid: &Grid, limit: f64) -> Result<OracleResult> {
    let times = grid.times(inst);
    let trees = rooted_subtrees(&inst.tree, NodeId::ROOT, limit as usize)?;
    let states = (trees.len() as f64).powi(times.len() as i32);
    if states > limit {
        return Err(MlapError::OracleTooLarge { states, limit });
    }
    let mut pick = vec![0usize; times.len()];
    let mut best: Option<(Schedule, f64)> = None;
    loop {
        let mut schedule = Schedule::new();
        for (b, &k) in pick.iter().enumerate() {
            if trees[k].len() > 1 {
                schedule.push(times[b], trees[k].clone());
            }
        }
        if let Ok(c) = crate::model::cost_of_schedule(inst, &schedule) {
            if best.as_ref().is_none_or(|b| c.total < b.1) {
                best = Some((schedule, c.total));
            }
        }
        let mut i = 0;
        while i < pick.len() {
            pick[i] += 1;
            if pick[i] < trees.len() {
                break;
            }
            pick[i] = 0;
            i += 1;
        }
        if i == pick.len() {
            break;
        }
    }
    let (schedule, cost) = best.ok_or_else(|| {
        MlapError::InfeasibleSchedule("no schedule on this grid serves every request".into())
    })?;
    Ok(OracleResult {
        schedule,
        cost,
        grid: times,
    })
}

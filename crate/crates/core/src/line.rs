//! Aggregation on the half-line: services are prefixes `[0, x]` costing `x`.

use serde::{Deserialize, Serialize};

use crate::error::{MlapError, Result};
use crate::model::{Instance, MonotoneCost, NodeId, Request, WeightedTree, EPS_TIME};
use crate::single_phase::ratio_of;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineRequest {
    pub rid: u64,
    pub position: f64,
    pub arrival: f64,
    pub cost: MonotoneCost,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

impl LineRequest {
    pub fn eval(&self, t: f64) -> f64 {
        self.weight * self.cost.eval(self.arrival, t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineInstance {
    pub requests: Vec<LineRequest>,
    pub horizon: f64,
}

impl LineInstance {
    pub fn new(requests: Vec<LineRequest>, horizon: f64) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for r in &requests {
            let bad = |reason: String| MlapError::InvalidRequest { rid: r.rid, reason };
            if !seen.insert(r.rid) {
                return Err(bad("duplicate request id".into()));
            }
            if !(r.position.is_finite() && r.position >= 0.0) {
                return Err(bad(format!(
                    "position {} must be finite and non-negative",
                    r.position
                )));
            }
            if !(r.arrival.is_finite() && r.arrival >= 0.0 && r.arrival <= horizon) {
                return Err(bad(format!("arrival {} outside [0, {horizon}]", r.arrival)));
            }
            if !(r.weight.is_finite() && r.weight > 0.0) {
                return Err(bad(format!("weight {} must be positive", r.weight)));
            }
            if let Some(d) = r.cost.deadline() {
                if d < r.arrival || d > horizon {
                    return Err(bad(format!(
                        "deadline {d} outside [{}, {horizon}]",
                        r.arrival
                    )));
                }
            }
        }
        Ok(Self { requests, horizon })
    }

    pub fn is_deadline_instance(&self) -> bool {
        self.requests.iter().all(|r| r.cost.deadline().is_some())
    }
}

/// Service of every request at position `<= from`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Delivery {
    pub time: f64,
    pub from: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LineCost {
    pub scost: f64,
    pub wcost: f64,
    pub total: f64,
}

/// Cost of a delivery list. Requests never served are infeasible; deadline
/// requests served late are infeasible as well.
pub fn line_cost(inst: &LineInstance, deliveries: &[Delivery]) -> Result<LineCost> {
    let mut sorted = deliveries.to_vec();
    sorted.sort_by(|a, b| a.time.total_cmp(&b.time));
    let scost = sorted.iter().map(|d| d.from).sum();
    let mut wcost = 0.0;
    for r in &inst.requests {
        let t = sorted
            .iter()
            .find(|d| d.time >= r.arrival && d.from >= r.position)
            .map(|d| d.time)
            .ok_or_else(|| {
                MlapError::InfeasibleSchedule(format!("request {} is never served", r.rid))
            })?;
        if let Some(d) = r.cost.deadline() {
            if t > d + EPS_TIME {
                return Err(MlapError::InfeasibleSchedule(format!(
                    "request {} served at {t} after its deadline {d}",
                    r.rid
                )));
            }
        }
        wcost += r.eval(t);
    }
    Ok(LineCost {
        scost,
        wcost,
        total: scost + wcost,
    })
}

/// One expiring request that made the algorithm deliver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineTrigger {
    pub time: f64,
    pub rid: u64,
    pub position: f64,
    pub arrival: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DlineRun {
    /// Deliveries with equal times merged.
    pub deliveries: Vec<Delivery>,
    pub triggers: Vec<LineTrigger>,
}

/// Whenever a pending request at `x` reaches its deadline, deliver from `2x`.
pub fn dline_run(inst: &LineInstance) -> Result<DlineRun> {
    if let Some(r) = inst.requests.iter().find(|r| r.cost.deadline().is_none()) {
        return Err(MlapError::UnsupportedCostKind(r.cost.kind_name().into()));
    }
    let mut order: Vec<&LineRequest> = inst.requests.iter().collect();
    order.sort_by(|a, b| {
        let (da, db) = (a.cost.deadline().unwrap(), b.cost.deadline().unwrap());
        da.total_cmp(&db).then(a.rid.cmp(&b.rid))
    });
    let mut served = std::collections::HashSet::new();
    let mut deliveries: Vec<Delivery> = Vec::new();
    let mut triggers = Vec::new();
    for r in order {
        if served.contains(&r.rid) {
            continue;
        }
        let t = r.cost.deadline().unwrap();
        let from = 2.0 * r.position;
        triggers.push(LineTrigger {
            time: t,
            rid: r.rid,
            position: r.position,
            arrival: r.arrival,
        });
        for q in &inst.requests {
            if q.arrival <= t && q.position <= from {
                served.insert(q.rid);
            }
        }
        match deliveries.last_mut() {
            Some(last) if last.time == t => last.from = last.from.max(from),
            _ => deliveries.push(Delivery { time: t, from }),
        }
    }
    Ok(DlineRun {
        deliveries,
        triggers,
    })
}

/// Optimum of a single-phase deadline instance expiring right after `theta`:
/// one delivery at time 0 from the farthest request whose deadline has passed.
pub fn line_oracle_deadline(inst: &LineInstance, theta: f64) -> f64 {
    inst.requests
        .iter()
        .filter(|r| r.cost.deadline().is_some_and(|d| d < theta))
        .map(|r| r.position)
        .fold(0.0, f64::max)
}

/// Optimum of any single-phase line instance expiring at `theta`: one
/// delivery at time 0, the rest wait until `theta`. Deadline requests that
/// expired before `theta` must be inside the delivery.
pub fn line_oracle_single_phase(inst: &LineInstance, theta: f64) -> f64 {
    let must = line_oracle_deadline(inst, theta);
    let mut cands: Vec<f64> = inst
        .requests
        .iter()
        .map(|r| r.position)
        .filter(|&x| x >= must)
        .collect();
    cands.push(must);
    cands
        .into_iter()
        .map(|x| {
            x + inst
                .requests
                .iter()
                .filter(|r| r.position > x)
                .map(|r| r.eval(theta))
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Exact optimum of a small deadline line instance. Service times range over
/// deadlines and delivery points over request positions.
pub fn line_brute_force(inst: &LineInstance, limit: f64) -> Result<(Vec<Delivery>, f64)> {
    if let Some(r) = inst.requests.iter().find(|r| r.cost.deadline().is_none()) {
        return Err(MlapError::UnsupportedCostKind(r.cost.kind_name().into()));
    }
    let mut times: Vec<f64> = inst
        .requests
        .iter()
        .filter_map(|r| r.cost.deadline())
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut points: Vec<f64> = inst.requests.iter().map(|r| r.position).collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    let choices = points.len() + 1;
    let states = (choices as f64).powi(times.len() as i32);
    if states > limit {
        return Err(MlapError::OracleTooLarge { states, limit });
    }
    let mut best: Option<(Vec<Delivery>, f64)> = None;
    let mut pick = vec![0usize; times.len()];
    loop {
        let deliveries: Vec<Delivery> = pick
            .iter()
            .zip(&times)
            .filter(|(&c, _)| c > 0)
            .map(|(&c, &t)| Delivery {
                time: t,
                from: points[c - 1],
            })
            .collect();
        let cost: f64 = deliveries.iter().map(|d| d.from).sum();
        if best.as_ref().is_none_or(|b| cost < b.1) && line_cost(inst, &deliveries).is_ok() {
            best = Some((deliveries, cost));
        }
        // odometer
        let mut i = 0;
        while i < pick.len() {
            pick[i] += 1;
            if pick[i] < choices {
                break;
            }
            pick[i] = 0;
            i += 1;
        }
        if i == pick.len() {
            break;
        }
    }
    Ok(best.unwrap_or((Vec::new(), 0.0)))
}

/// Requests at `1..=b` with deadline equal to the position.
pub fn gen_lb_mlapd(b: u32) -> Result<LineInstance> {
    if b == 0 {
        return Err(MlapError::BadParams("B must be at least 1".into()));
    }
    let requests = (1..=b)
        .map(|x| LineRequest {
            rid: (x - 1) as u64,
            position: x as f64,
            arrival: 0.0,
            cost: MonotoneCost::Deadline {
                deadline: x as f64,
                penalty: x as f64,
            },
            weight: 1.0,
        })
        .collect();
    LineInstance::new(requests, b as f64)
}

/// Linear requests at `1..=b` with multiplicity `6^(b - x)` at `x`.
pub fn gen_lb_mlapl(b: u32) -> Result<LineInstance> {
    if b == 0 {
        return Err(MlapError::BadParams("B must be at least 1".into()));
    }
    if b > 30 {
        return Err(MlapError::OverflowGuard(b));
    }
    let requests = (1..=b)
        .map(|x| LineRequest {
            rid: (x - 1) as u64,
            position: x as f64,
            arrival: 0.0,
            cost: MonotoneCost::Linear,
            weight: 6f64.powi((b - x) as i32),
        })
        .collect();
    LineInstance::new(requests, b as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StopPoint {
    pub theta: f64,
    pub alg: f64,
    pub opt: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdversaryReport {
    pub worst_ratio: f64,
    pub worst_theta: f64,
    pub stops: Vec<StopPoint>,
}

/// Evaluates an online delivery sequence on a single-phase instance at every
/// expiration right after one of its deliveries and keeps the worst ratio.
/// `eps_stop` defaults to a millionth of the smallest gap between events.
pub fn adaptive_adversary(
    inst: &LineInstance,
    deliveries: &[Delivery],
    eps_stop: Option<f64>,
) -> AdversaryReport {
    let mut sorted = deliveries.to_vec();
    sorted.sort_by(|a, b| a.time.total_cmp(&b.time));
    let eps = eps_stop.unwrap_or_else(|| default_eps_stop(inst, &sorted));
    let mut stops = Vec::new();
    for (k, d) in sorted.iter().enumerate() {
        if k + 1 < sorted.len() && sorted[k + 1].time == d.time {
            continue;
        }
        let theta = d.time + eps;
        let alg = cost_until(inst, &sorted, theta);
        let opt = line_oracle_single_phase(inst, theta);
        stops.push(StopPoint {
            theta,
            alg,
            opt,
            ratio: ratio_of(alg, opt),
        });
    }
    let (worst_ratio, worst_theta) = stops
        .iter()
        .map(|s| (s.ratio, s.theta))
        .fold((1.0, 0.0), |acc, x| if x.0 > acc.0 { x } else { acc });
    AdversaryReport {
        worst_ratio,
        worst_theta,
        stops,
    }
}

fn default_eps_stop(inst: &LineInstance, deliveries: &[Delivery]) -> f64 {
    let mut events: Vec<f64> = deliveries.iter().map(|d| d.time).collect();
    events.extend(inst.requests.iter().filter_map(|r| r.cost.deadline()));
    events.push(0.0);
    events.sort_by(f64::total_cmp);
    events.dedup();
    let gap = events
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    if gap.is_finite() {
        1e-6 * gap
    } else {
        1e-6
    }
}

/// Online cost if the instance expires at `theta`: deliveries up to `theta`
/// plus the waiting cost of everything they did not reach.
fn cost_until(inst: &LineInstance, sorted: &[Delivery], theta: f64) -> f64 {
    let active: Vec<&Delivery> = sorted.iter().filter(|d| d.time <= theta).collect();
    let mut total: f64 = active.iter().map(|d| d.from).sum();
    for r in &inst.requests {
        let served = active
            .iter()
            .find(|d| d.time >= r.arrival && d.from >= r.position);
        total += match served {
            Some(d) => r.eval(d.time),
            None => r.eval(theta),
        };
    }
    total
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BiddingTable {
    pub b: u64,
    pub ratio: f64,
    pub witness: Vec<u64>,
}

/// Best ratio over increasing integer sequences `x_1 < ... < x_m = b` of
/// `max_k (x_1 + ... + x_k) / (x_{k-1} + 1)` with `x_0 = 0`.
pub fn bidding_optimal_ratio(b: u64) -> Result<BiddingTable> {
    if b == 0 {
        return Err(MlapError::BadParams("B must be at least 1".into()));
    }
    let (mut lo, mut hi) = (1.0f64, b as f64);
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if bidding_feasible(b, mid).is_some() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let witness = bidding_feasible(b, hi).expect("upper end stays feasible");
    Ok(BiddingTable {
        b,
        ratio: bidding_ratio(&witness),
        witness,
    })
}

/// Sequence ending at `b` whose every ratio is at most `r`, if one exists.
fn bidding_feasible(b: u64, r: f64) -> Option<Vec<u64>> {
    let n = b as usize;
    // min_sum[y]: smallest prefix sum of a feasible sequence ending at y
    let mut min_sum = vec![u64::MAX; n + 1];
    let mut prev = vec![0usize; n + 1];
    min_sum[0] = 0;
    for y in 1..=n {
        for x in 0..y {
            let s = min_sum[x];
            if s == u64::MAX {
                continue;
            }
            let total = s + y as u64;
            if total as f64 <= r * (x as f64 + 1.0) && total < min_sum[y] {
                min_sum[y] = total;
                prev[y] = x;
            }
        }
    }
    if min_sum[n] == u64::MAX {
        return None;
    }
    let mut seq = Vec::new();
    let mut y = n;
    while y > 0 {
        seq.push(y as u64);
        y = prev[y];
    }
    seq.reverse();
    Some(seq)
}

/// Exact ratio of a bidding sequence.
pub fn bidding_ratio(seq: &[u64]) -> f64 {
    let mut sum = 0u64;
    let mut last = 0u64;
    let mut worst = 0.0f64;
    for &x in seq {
        sum += x;
        worst = worst.max(sum as f64 / (last + 1) as f64);
        last = x;
    }
    worst
}

/// A path whose nodes sit at the distinct positive request positions, edge
/// weights being the gaps. Requests at position 0 are dropped: they are free
/// to serve.
pub fn line_to_tree(inst: &LineInstance) -> Result<Instance> {
    let mut points: Vec<f64> = inst
        .requests
        .iter()
        .map(|r| r.position)
        .filter(|&x| x > 0.0)
        .collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    let mut weights = Vec::with_capacity(points.len());
    let mut last = 0.0;
    for &x in &points {
        weights.push(x - last);
        last = x;
    }
    let tree = WeightedTree::path(&weights)?;
    let mut requests = Vec::new();
    for r in inst.requests.iter().filter(|r| r.position > 0.0) {
        let k = points.partition_point(|&x| x < r.position);
        requests.push(Request::weighted(
            r.rid,
            NodeId(k + 1),
            r.arrival,
            r.cost.clone(),
            r.weight,
        )?);
    }
    Instance::new(tree, requests, inst.horizon)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dl(rid: u64, x: f64, d: f64) -> LineRequest {
        LineRequest {
            rid,
            position: x,
            arrival: 0.0,
            cost: MonotoneCost::Deadline {
                deadline: d,
                penalty: x,
            },
            weight: 1.0,
        }
    }

    fn froms(run: &DlineRun) -> Vec<(f64, f64)> {
        run.deliveries.iter().map(|d| (d.time, d.from)).collect()
    }

    #[test]
    fn dline_examples() {
        let inst = LineInstance::new(vec![dl(0, 5.0, 2.0)], 10.0).unwrap();
        assert_eq!(froms(&dline_run(&inst).unwrap()), vec![(2.0, 10.0)]);

        let inst = LineInstance::new(vec![dl(0, 1.0, 1.0), dl(1, 3.0, 2.0)], 10.0).unwrap();
        let run = dline_run(&inst).unwrap();
        assert_eq!(froms(&run), vec![(1.0, 2.0), (2.0, 6.0)]);
        assert_eq!(line_cost(&inst, &run.deliveries).unwrap().total, 8.0);
        assert_eq!(line_brute_force(&inst, 1e6).unwrap().1, 3.0);

        let inst = LineInstance::new(vec![dl(0, 1.0, 1.0), dl(1, 1.5, 3.0)], 10.0).unwrap();
        assert_eq!(froms(&dline_run(&inst).unwrap()), vec![(1.0, 2.0)]);
    }

    #[test]
    fn dline_rejects_linear() {
        let r = LineRequest {
            rid: 0,
            position: 1.0,
            arrival: 0.0,
            cost: MonotoneCost::Linear,
            weight: 1.0,
        };
        let inst = LineInstance::new(vec![r], 1.0).unwrap();
        assert!(matches!(
            dline_run(&inst),
            Err(MlapError::UnsupportedCostKind(_))
        ));
    }

    #[test]
    fn deadline_oracle() {
        let inst = gen_lb_mlapd(4).unwrap();
        assert_eq!(line_oracle_deadline(&inst, 2.5), 2.0);
        assert_eq!(line_oracle_deadline(&inst, 1.0), 0.0);
        assert_eq!(line_oracle_deadline(&inst, 9.0), 4.0);
        assert_eq!(line_oracle_single_phase(&inst, 2.5), 2.0);
    }

    #[test]
    fn lower_bound_families() {
        let d = gen_lb_mlapd(4).unwrap();
        let xs: Vec<(f64, f64)> = d
            .requests
            .iter()
            .map(|r| (r.position, r.cost.deadline().unwrap()))
            .collect();
        assert_eq!(xs, vec![(1.0, 1.0), (2.0, 2.0), (3.0, 3.0), (4.0, 4.0)]);
        assert_eq!(gen_lb_mlapd(1).unwrap().requests.len(), 1);
        let l = gen_lb_mlapl(3).unwrap();
        let ws: Vec<f64> = l.requests.iter().map(|r| r.weight).collect();
        assert_eq!(ws, vec![36.0, 6.0, 1.0]);
        assert_eq!(gen_lb_mlapl(1).unwrap().requests[0].weight, 1.0);
        let total: f64 = gen_lb_mlapl(10)
            .unwrap()
            .requests
            .iter()
            .map(|r| r.weight)
            .sum();
        assert_eq!(total, (6f64.powi(10) - 1.0) / 5.0);
        assert_eq!(gen_lb_mlapl(31), Err(MlapError::OverflowGuard(31)));
    }

    #[test]
    fn bidding_small_cases() {
        let t = bidding_optimal_ratio(1).unwrap();
        assert_eq!((t.ratio, t.witness), (1.0, vec![1]));
        let t = bidding_optimal_ratio(4).unwrap();
        assert_eq!((t.ratio, t.witness), (2.0, vec![2, 4]));
        assert_eq!(bidding_optimal_ratio(2).unwrap().ratio, 1.5);
    }

    #[test]
    fn bidding_matches_exhaustive_search() {
        for b in 1..=12u64 {
            let mut best = f64::INFINITY;
            // every subset of 1..b-1, then b
            for mask in 0u64..(1 << (b - 1)) {
                let mut seq: Vec<u64> = (1..b).filter(|x| mask >> (x - 1) & 1 == 1).collect();
                seq.push(b);
                best = best.min(bidding_ratio(&seq));
            }
            assert_eq!(bidding_optimal_ratio(b).unwrap().ratio, best, "B={b}");
        }
    }

    #[test]
    fn eager_delivery_is_punished() {
        let inst = gen_lb_mlapd(50).unwrap();
        let rep = adaptive_adversary(
            &inst,
            &[Delivery {
                time: 0.0,
                from: 50.0,
            }],
            None,
        );
        assert!(rep.worst_ratio >= 50.0);
    }

    #[test]
    fn dline_adversary_between_three_and_four() {
        let inst = gen_lb_mlapd(100).unwrap();
        let run = dline_run(&inst).unwrap();
        let froms: Vec<f64> = run.deliveries.iter().map(|d| d.from).collect();
        assert_eq!(&froms[..4], &[2.0, 6.0, 14.0, 30.0]);
        let rep = adaptive_adversary(&inst, &run.deliveries, None);
        assert!(
            rep.worst_ratio > 3.0 && rep.worst_ratio < 4.0,
            "{}",
            rep.worst_ratio
        );
    }

    #[test]
    fn empty_instance_has_unit_ratio() {
        let inst = LineInstance::new(vec![], 1.0).unwrap();
        let run = dline_run(&inst).unwrap();
        assert_eq!(
            adaptive_adversary(&inst, &run.deliveries, None).worst_ratio,
            1.0
        );
    }

    #[test]
    fn tree_embedding_preserves_costs() {
        let inst = LineInstance::new(
            vec![dl(0, 1.0, 1.0), dl(1, 3.0, 2.0), dl(2, 3.0, 4.0)],
            10.0,
        )
        .unwrap();
        let tree_inst = line_to_tree(&inst).unwrap();
        assert_eq!(tree_inst.tree.len(), 3);
        assert_eq!(tree_inst.tree.path_weight(NodeId(2)), 3.0);
        assert_eq!(tree_inst.requests[2].node, NodeId(2));
    }
}

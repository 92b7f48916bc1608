//! Event-driven continuous-time simulation of online algorithms.
//!
//! The engine owns the pending request set. At each step it processes the
//! earliest of: the next arrival, the algorithm's next trigger, and the
//! horizon. Arrivals come first at equal times, then triggers, then the
//! horizon.

use serde::Serialize;

use crate::error::{MlapError, Result};
use crate::model::{Instance, NodeId, NodeSet, Request, Schedule, WeightedTree, EPS_TIME};

/// What an algorithm sees when asked for a decision.
#[derive(Clone, Copy, Debug)]
pub struct View<'a> {
    pub tree: &'a WeightedTree,
    pub pending: &'a [Request],
    /// Bumped on every arrival and every executed service.
    pub generation: u64,
}

/// One urgency-driven selection made while growing a service tree.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UrgentPick {
    pub anchor: NodeId,
    pub depth: usize,
    pub nodes: NodeSet,
}

/// How a service tree was assembled inside one root-child component.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Decomposition {
    pub quasi_root: NodeId,
    /// `{r, q}` for the deadline algorithm, `C ∪ {r}` for the general one.
    pub core: NodeSet,
    pub picks: Vec<UrgentPick>,
    /// Maturity of every core node, recorded by the general algorithm.
    pub core_maturity: Vec<(NodeId, f64)>,
    /// Maturity of the quasi-root before and right after the service.
    pub maturity_before: Option<f64>,
    pub maturity_after: Option<f64>,
}

impl Decomposition {
    pub fn nodes(&self) -> NodeSet {
        let mut all = self.core.clone();
        for p in &self.picks {
            all.extend(p.nodes.iter().copied());
        }
        all
    }
}

/// A service proposed by an algorithm, with optional audit data.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PlannedService {
    pub nodes: NodeSet,
    pub parts: Vec<Decomposition>,
    /// For services lifted from a reduced tree: the inner algorithm's plan.
    pub inner: Option<Box<PlannedService>>,
}

impl PlannedService {
    pub fn plain(nodes: NodeSet) -> Self {
        Self {
            nodes,
            ..Self::default()
        }
    }
}

pub trait OnlineAlgorithm {
    fn name(&self) -> String;

    fn on_arrival(&mut self, _request: &Request, _t: f64) {}

    /// Earliest time at or after `t` at which the algorithm wants to serve.
    fn next_trigger(&mut self, t: f64, view: &View) -> Option<f64>;

    fn build_service(&mut self, t: f64, view: &View) -> PlannedService;

    /// Notification that a service was executed and which requests it served.
    fn on_service(&mut self, _t: f64, _nodes: &NodeSet, _served: &[Request]) {}

    /// Final service at the horizon; `None` means the algorithm declines.
    fn on_horizon(&mut self, t: f64, view: &View) -> Option<NodeSet>;
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "lowercase")]
pub enum TraceEvent {
    Arrival {
        time: f64,
        rid: u64,
    },
    Service {
        time: f64,
        plan: PlannedService,
        served: Vec<u64>,
    },
    Horizon {
        time: f64,
        nodes: NodeSet,
        served: Vec<u64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EngineTrace {
    pub algorithm: String,
    pub schedule: Schedule,
    pub events: Vec<TraceEvent>,
}

impl EngineTrace {
    /// Plans of all trigger-driven services, in order.
    pub fn plans(&self) -> impl Iterator<Item = (f64, &PlannedService)> {
        self.events.iter().filter_map(|e| match e {
            TraceEvent::Service { time, plan, .. } => Some((*time, plan)),
            _ => None,
        })
    }
}

#[derive(Clone, Debug)]
pub struct EngineConfig {
    pub eps_time: f64,
    /// Upper bound on services before the run is declared stuck.
    pub max_services: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            eps_time: EPS_TIME,
            max_services: 100_000,
        }
    }
}

pub fn run(alg: &mut dyn OnlineAlgorithm, instance: &Instance) -> Result<EngineTrace> {
    run_with(alg, instance, &EngineConfig::default())
}

pub fn run_with(
    alg: &mut dyn OnlineAlgorithm,
    instance: &Instance,
    config: &EngineConfig,
) -> Result<EngineTrace> {
    let tree = &instance.tree;
    let horizon = instance.horizon;
    let mut arrivals: Vec<&Request> = instance.requests.iter().collect();
    arrivals.sort_by(|a, b| a.arrival.total_cmp(&b.arrival).then(a.rid.cmp(&b.rid)));
    let mut next_arrival = 0;
    let mut pending: Vec<Request> = Vec::new();
    let mut generation = 0u64;
    let mut now = 0.0f64;
    let mut raw = Schedule::new();
    let mut events = Vec::new();
    let mut services = 0usize;

    loop {
        let arrival_time = arrivals.get(next_arrival).map(|r| r.arrival);
        let view = View {
            tree,
            pending: &pending,
            generation,
        };
        let trigger = alg
            .next_trigger(now, &view)
            .filter(|&t| t <= horizon)
            .map(|t| t.max(now));

        if let Some(at) = arrival_time {
            if trigger.is_none_or(|t| at <= t) {
                now = now.max(at);
                while let Some(r) = arrivals.get(next_arrival) {
                    if r.arrival > at {
                        break;
                    }
                    alg.on_arrival(r, now);
                    pending.push((*r).clone());
                    events.push(TraceEvent::Arrival {
                        time: now,
                        rid: r.rid,
                    });
                    next_arrival += 1;
                }
                generation += 1;
                continue;
            }
        }

        if let Some(t) = trigger {
            services += 1;
            if services > config.max_services {
                return Err(MlapError::NoProgress { time: t });
            }
            now = t;
            let plan = alg.build_service(now, &view);
            if !tree.is_service_tree(&plan.nodes) {
                return Err(MlapError::InvalidServiceTree { time: now });
            }
            let served = take_served(&mut pending, &plan.nodes, now);
            alg.on_service(now, &plan.nodes, &served);
            generation += 1;
            raw.push(now, plan.nodes.clone());
            events.push(TraceEvent::Service {
                time: now,
                served: served.iter().map(|r| r.rid).collect(),
                plan,
            });
            continue;
        }

        // horizon
        now = horizon;
        if !pending.is_empty() {
            let view = View {
                tree,
                pending: &pending,
                generation,
            };
            let nodes = alg
                .on_horizon(now, &view)
                .ok_or(MlapError::AlgorithmStall {
                    pending: pending.len(),
                })?;
            if !tree.is_service_tree(&nodes) {
                return Err(MlapError::InvalidServiceTree { time: now });
            }
            let served = take_served(&mut pending, &nodes, now);
            alg.on_service(now, &nodes, &served);
            if !pending.is_empty() {
                return Err(MlapError::AlgorithmStall {
                    pending: pending.len(),
                });
            }
            raw.push(now, nodes.clone());
            events.push(TraceEvent::Horizon {
                time: now,
                nodes,
                served: served.iter().map(|r| r.rid).collect(),
            });
        }
        break;
    }

    Ok(EngineTrace {
        algorithm: alg.name(),
        schedule: raw.normalized(config.eps_time),
        events,
    })
}

/// Removes and returns the pending requests that a service at `t` on
/// `nodes` serves.
pub(crate) fn take_served(pending: &mut Vec<Request>, nodes: &NodeSet, t: f64) -> Vec<Request> {
    let (served, rest): (Vec<Request>, Vec<Request>) = pending
        .drain(..)
        .partition(|r| r.arrival <= t && nodes.contains(&r.node));
    *pending = rest;
    served
}

/// Picks nodes from `candidates` in increasing `(key, id)` order until their
/// weight reaches `budget` or the candidates run out. A zero budget selects
/// nothing.
pub fn urgent_select_by<K, F, W>(
    candidates: &[NodeId],
    budget: f64,
    key: F,
    weight: W,
) -> Vec<NodeId>
where
    K: PartialOrd,
    F: Fn(NodeId) -> K,
    W: Fn(NodeId) -> f64,
{
    let mut order: Vec<(K, NodeId)> = candidates.iter().map(|&v| (key(v), v)).collect();
    order.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
    });
    let mut picked = Vec::new();
    let mut total = 0.0;
    for (_, v) in order {
        if total >= budget {
            break;
        }
        total += weight(v);
        picked.push(v);
    }
    picked
}

/// Urgent selection with real-valued urgencies (`+inf` allowed, selected last).
pub fn urgent_select(
    candidates: &[NodeId],
    budget: f64,
    urgency: impl Fn(NodeId) -> f64,
    tree: &WeightedTree,
) -> Vec<NodeId> {
    urgent_select_by(candidates, budget, urgency, |v| tree.weight(v))
}

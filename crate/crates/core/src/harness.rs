//! Seeded instance generators, batch experiments against the exact oracle,
//! and CSV output for reports and plot series.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audit::{check_deadline_trace, check_general_trace, check_lbl, Violation};
use crate::deadline::DeadlineAlgorithm;
use crate::engine::{run, EngineTrace};
use crate::error::{MlapError, Result};
use crate::general::GeneralAlgorithm;
use crate::line::{
    adaptive_adversary, bidding_optimal_ratio, dline_run, gen_lb_mlapd, gen_lb_mlapl, LineInstance,
};
use crate::model::{cost_of_schedule, Instance, MonotoneCost, NodeId, Request, WeightedTree};
use crate::offline::{brute_force_opt, lbl_times, Grid, DEFAULT_ORACLE_LIMIT};
use crate::single_phase::{nested_phase_embed, ratio_of, SinglePhaseInstance};
use crate::transforms::{to_l_decreasing, LiftedAlgorithm};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostKind {
    Deadline,
    Linear,
    Pwl,
    /// Linear or piecewise linear, chosen per request.
    Continuous,
}

impl std::str::FromStr for CostKind {
    type Err = MlapError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deadline" => Ok(Self::Deadline),
            "linear" => Ok(Self::Linear),
            "pwl" => Ok(Self::Pwl),
            "continuous" => Ok(Self::Continuous),
            _ => Err(MlapError::BadParams(format!("unknown cost kind {s}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LdecParams {
    pub depth: usize,
    pub l: f64,
    pub fanout: usize,
    pub n_requests: usize,
    pub kind: CostKind,
    pub max_nodes: usize,
    pub horizon: f64,
}

impl Default for LdecParams {
    fn default() -> Self {
        Self {
            depth: 3,
            l: 2.0,
            fanout: 2,
            n_requests: 6,
            kind: CostKind::Deadline,
            max_nodes: 9,
            horizon: 10.0,
        }
    }
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Random L-decreasing tree of depth at most `depth` and at most `max_nodes`
/// non-root nodes, all below a single quasi-root.
pub fn gen_ldec_tree(
    rng: &mut impl Rng,
    depth: usize,
    l: f64,
    fanout: usize,
    max_nodes: usize,
) -> Result<WeightedTree> {
    if depth == 0 || max_nodes == 0 || !(l >= 1.0) || fanout == 0 {
        return Err(MlapError::BadParams(
            "need depth, max_nodes, fanout >= 1 and L >= 1".into(),
        ));
    }
    let top = round3(rng.gen_range(1.0..4.0) * (2.5 * l).powi(depth as i32 - 1)).max(0.001);
    let mut nodes: Vec<(usize, f64)> = vec![(0, top)];
    let mut level = vec![(1usize, top)];
    for _ in 1..depth {
        let mut next = Vec::new();
        for &(v, w) in &level {
            for _ in 0..rng.gen_range(0..=fanout) {
                if nodes.len() >= max_nodes {
                    break;
                }
                let cw = ((w / (l * rng.gen_range(1.0..2.5))) * 1000.0).floor() / 1000.0;
                if cw <= 0.0 {
                    continue;
                }
                nodes.push((v, cw));
                next.push((nodes.len(), cw));
            }
        }
        level = next;
    }
    WeightedTree::from_parent_weights(&nodes)
}

/// Random tree without any weight structure.
pub fn gen_any_tree(rng: &mut impl Rng, depth: usize, max_nodes: usize) -> Result<WeightedTree> {
    if depth == 0 || max_nodes == 0 {
        return Err(MlapError::BadParams("need depth and max_nodes >= 1".into()));
    }
    let n = rng.gen_range(1..=max_nodes);
    let mut nodes: Vec<(usize, f64)> = Vec::with_capacity(n);
    let mut depths = vec![0usize, 1];
    nodes.push((0, round3(rng.gen_range(0.5..8.0))));
    for v in 2..=n {
        let choices: Vec<usize> = (1..v).filter(|&p| depths[p] < depth).collect();
        let p = if choices.is_empty() || rng.gen_bool(0.1) {
            0
        } else {
            choices[rng.gen_range(0..choices.len())]
        };
        depths.push(depths[p] + 1);
        nodes.push((p, round3(rng.gen_range(0.5..8.0))));
    }
    WeightedTree::from_parent_weights(&nodes)
}

/// Requests at uniformly random non-root nodes with two-decimal times.
pub fn gen_requests(
    rng: &mut impl Rng,
    tree: &WeightedTree,
    n: usize,
    kind: CostKind,
    horizon: f64,
) -> Result<Vec<Request>> {
    if tree.len() < 2 {
        return Ok(Vec::new());
    }
    let mut out = Vec::with_capacity(n);
    for rid in 0..n as u64 {
        let node = NodeId(rng.gen_range(1..tree.len()));
        let arrival = round2(rng.gen_range(0.0..0.6 * horizon));
        let kind = match kind {
            CostKind::Continuous if rng.gen_bool(0.5) => CostKind::Linear,
            CostKind::Continuous => CostKind::Pwl,
            k => k,
        };
        let cost = match kind {
            CostKind::Deadline => MonotoneCost::Deadline {
                deadline: round2(rng.gen_range(arrival..=horizon)).min(horizon),
                penalty: tree.path_weight(node),
            },
            CostKind::Linear | CostKind::Continuous => MonotoneCost::Linear,
            CostKind::Pwl => {
                let mut points = vec![(arrival, 0.0)];
                let (mut t, mut v) = (arrival, 0.0);
                for _ in 0..rng.gen_range(1..=3) {
                    t = round2(t + rng.gen_range(0.1..2.0));
                    v = round3(v + rng.gen_range(0.0..3.0));
                    points.push((t, v));
                }
                MonotoneCost::Pwl { points }
            }
        };
        out.push(Request::weighted(rid, node, arrival, cost, 1.0)?);
    }
    Ok(out)
}

pub fn gen_ldec_random(p: &LdecParams, seed: u64) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tree = gen_ldec_tree(&mut rng, p.depth, p.l, p.fanout, p.max_nodes)?;
    let requests = gen_requests(&mut rng, &tree, p.n_requests, p.kind, p.horizon)?;
    Instance::new(tree, requests, p.horizon)
}

/// Path whose weights halve from `2^d` at the top to 1 at the leaf.
pub fn gen_path(d: u32) -> Result<WeightedTree> {
    let w: Vec<f64> = (0..=d).rev().map(|i| 2f64.powi(i as i32)).collect();
    WeightedTree::path(&w)
}

/// Single-phase instance: continuous costs, all arrivals at 0.
pub fn gen_single_phase(
    depth: usize,
    max_nodes: usize,
    n_requests: usize,
    horizon: f64,
    seed: u64,
) -> Result<SinglePhaseInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tree = gen_any_tree(&mut rng, depth, max_nodes)?;
    let mut requests = gen_requests(&mut rng, &tree, n_requests, CostKind::Continuous, horizon)?;
    for r in &mut requests {
        let shift = r.arrival;
        r.arrival = 0.0;
        if let MonotoneCost::Pwl { points } = &mut r.cost {
            for p in points.iter_mut() {
                p.0 -= shift;
            }
        }
        r.weight = round2(rng.gen_range(0.2..3.0));
    }
    SinglePhaseInstance::new(tree, requests, horizon)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Family {
    LdecRandom(LdecParams),
    Path {
        depth: u32,
        n_requests: usize,
        kind: CostKind,
        horizon: f64,
    },
    NestedPhase {
        k: usize,
        m: f64,
        theta: f64,
        depth: usize,
        max_nodes: usize,
        n_requests: usize,
    },
    LineLbD {
        b: u32,
    },
    LineLbL {
        b: u32,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Generated {
    Tree(Instance),
    Line(LineInstance),
}

pub fn generate(family: &Family, seed: u64) -> Result<Generated> {
    Ok(match family {
        Family::LdecRandom(p) => Generated::Tree(gen_ldec_random(p, seed)?),
        Family::Path {
            depth,
            n_requests,
            kind,
            horizon,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let tree = gen_path(*depth)?;
            let requests = gen_requests(&mut rng, &tree, *n_requests, *kind, *horizon)?;
            Generated::Tree(Instance::new(tree, requests, *horizon)?)
        }
        Family::NestedPhase {
            k,
            m,
            theta,
            depth,
            max_nodes,
            n_requests,
        } => {
            let mut sp = gen_single_phase(*depth, *max_nodes, *n_requests, *theta, seed)?;
            for r in &mut sp.requests {
                r.cost = MonotoneCost::Linear;
            }
            Generated::Tree(nested_phase_embed(&sp, *k, *m, *theta)?)
        }
        Family::LineLbD { b } => Generated::Line(gen_lb_mlapd(*b)?),
        Family::LineLbL { b } => Generated::Line(gen_lb_mlapl(*b)?),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "alg", rename_all = "kebab-case")]
pub enum AlgSpec {
    Deadline {
        l: f64,
    },
    General,
    /// The deadline algorithm run on the L-decreasing reparenting.
    LiftedDeadline {
        l: f64,
    },
    LiftedGeneral {
        l: f64,
    },
    Lbl,
}

impl AlgSpec {
    pub fn label(&self) -> String {
        match self {
            AlgSpec::Deadline { l } => format!("deadline(L={l})"),
            AlgSpec::General => "general".into(),
            AlgSpec::LiftedDeadline { l } => format!("lifted-deadline(L={l})"),
            AlgSpec::LiftedGeneral { l } => format!("lifted-general(L={l})"),
            AlgSpec::Lbl => "lbl".into(),
        }
    }
}

/// What an algorithm produced on one instance.
#[derive(Clone, Debug)]
pub struct AlgOutcome {
    pub schedule: crate::model::Schedule,
    pub trace: Option<EngineTrace>,
    pub violations: Vec<Violation>,
}

/// Runs `alg` on `inst`, checking its invariants when `check` is set.
pub fn run_algorithm(alg: &AlgSpec, inst: &Instance, check: bool) -> Result<AlgOutcome> {
    let finish = |trace: EngineTrace, violations: Vec<Violation>| AlgOutcome {
        schedule: trace.schedule.clone(),
        trace: Some(trace),
        violations,
    };
    Ok(match alg {
        AlgSpec::Deadline { l } => {
            let trace = run(&mut DeadlineAlgorithm::new(*l), inst)?;
            let v = if check {
                check_deadline_trace(inst, &inst.tree, &trace, *l)
            } else {
                Vec::new()
            };
            finish(trace, v)
        }
        AlgSpec::General => {
            let trace = run(&mut GeneralAlgorithm::new(), inst)?;
            let l = observed_l(&inst.tree);
            let v = if check {
                check_general_trace(inst, &trace, l)
            } else {
                Vec::new()
            };
            finish(trace, v)
        }
        AlgSpec::LiftedDeadline { l } => {
            let reduced = to_l_decreasing(&inst.tree, *l)?;
            let mut wrapped = LiftedAlgorithm::new(DeadlineAlgorithm::new(*l), reduced.clone());
            let trace = run(&mut wrapped, inst)?;
            let v = if check {
                check_lifted(inst, &trace, &reduced)
            } else {
                Vec::new()
            };
            finish(trace, v)
        }
        AlgSpec::LiftedGeneral { l } => {
            let reduced = to_l_decreasing(&inst.tree, *l)?;
            let mut wrapped = LiftedAlgorithm::new(GeneralAlgorithm::new(), reduced.clone());
            let trace = run(&mut wrapped, inst)?;
            let v = if check {
                check_lifted(inst, &trace, &reduced)
            } else {
                Vec::new()
            };
            finish(trace, v)
        }
        AlgSpec::Lbl => {
            let times = lbl_times(inst)?;
            let violations = if check {
                check_lbl(inst, &times)
            } else {
                Vec::new()
            };
            AlgOutcome {
                schedule: times.to_schedule(&inst.tree),
                trace: None,
                violations,
            }
        }
    })
}

/// Largest `L` for which the tree is L-decreasing, capped for the bound
/// formulas.
pub fn observed_l(tree: &WeightedTree) -> f64 {
    let mut l = f64::INFINITY;
    for v in tree.nodes().skip(1) {
        if tree.parent(v) == Some(NodeId::ROOT) {
            continue;
        }
        l = l.min(tree.weight(tree.parent(v).unwrap()) / tree.weight(v));
    }
    l.clamp(1.0, 1e6)
}

fn check_lifted(
    inst: &Instance,
    trace: &EngineTrace,
    reduced: &crate::transforms::ReducedTree,
) -> Vec<Violation> {
    let mut out = Vec::new();
    if let Err(e) = cost_of_schedule(inst, &trace.schedule) {
        out.push(Violation {
            time: f64::NAN,
            check: "feasible",
            detail: e.to_string(),
        });
    }
    let bound = reduced.lift_bound();
    for (t, plan) in trace.plans() {
        if let Some(inner) = &plan.inner {
            let w = inst.tree.weight_of(&plan.nodes);
            let w_inner = reduced.tree.weight_of(&inner.nodes);
            if w > bound * w_inner * (1.0 + 1e-9) {
                out.push(Violation {
                    time: t,
                    check: "lift-weight",
                    detail: format!("lifted weight {w} exceeds {bound} x {w_inner}"),
                });
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    pub grid: Grid,
    pub limit: f64,
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self {
            grid: Grid::Arrivals,
            limit: DEFAULT_ORACLE_LIMIT,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub instance: String,
    pub alg: String,
    pub alg_cost: f64,
    pub oracle_cost: f64,
    pub ratio: f64,
    pub services: usize,
    pub ms: f64,
    pub error: Option<String>,
    /// Set when an inline invariant check failed.
    pub violation: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RatioReport {
    pub rows: Vec<Row>,
}

pub const CSV_HEADER: &str = "instance,alg,alg_cost,oracle_cost,ratio,services,ms,error";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl RatioReport {
    pub fn max_ratio(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.ratio)
            .filter(|r| !r.is_nan())
            .fold(f64::NAN, f64::max)
    }

    pub fn mean_ratio(&self) -> f64 {
        let ok: Vec<f64> = self
            .rows
            .iter()
            .map(|r| r.ratio)
            .filter(|r| r.is_finite())
            .collect();
        if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter().sum::<f64>() / ok.len() as f64
        }
    }

    pub fn has_violation(&self) -> bool {
        self.rows.iter().any(|r| r.violation)
    }

    /// CSV with one row per instance. Without `timing` the `ms` column is
    /// left empty so that reruns compare byte for byte.
    pub fn to_csv(&self, timing: bool) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let ms = if timing {
                format!("{:.3}", r.ms)
            } else {
                String::new()
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                csv_field(&r.instance),
                csv_field(&r.alg),
                r.alg_cost,
                r.oracle_cost,
                r.ratio,
                r.services,
                ms,
                csv_field(r.error.as_deref().unwrap_or(""))
            );
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub alg: AlgSpec,
    pub oracle: Option<OracleSpec>,
    pub check: bool,
}

/// Inline invariant checks: `MLAP_ASSERT=0|1`, on by default in debug builds.
pub fn assertions_enabled() -> bool {
    match std::env::var("MLAP_ASSERT").as_deref() {
        Ok("0") => false,
        Ok("1") => true,
        _ => cfg!(debug_assertions),
    }
}

pub fn run_row(spec: &ExperimentSpec, name: &str, inst: &Instance) -> Row {
    let start = Instant::now();
    let mut row = Row {
        instance: name.to_string(),
        alg: spec.alg.label(),
        alg_cost: f64::NAN,
        oracle_cost: f64::NAN,
        ratio: f64::NAN,
        services: 0,
        ms: 0.0,
        error: None,
        violation: false,
    };
    match run_algorithm(&spec.alg, inst, spec.check) {
        Ok(out) => {
            row.services = out.schedule.len();
            match cost_of_schedule(inst, &out.schedule) {
                Ok(c) => row.alg_cost = c.total,
                Err(e) => row.error = Some(e.to_string()),
            }
            if !out.violations.is_empty() {
                row.violation = true;
                let text: Vec<String> = out.violations.iter().map(|v| v.to_string()).collect();
                row.error = Some(format!("invariant: {}", text.join("; ")));
            }
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row.ms = start.elapsed().as_secs_f64() * 1000.0;
    if let Some(o) = &spec.oracle {
        match brute_force_opt(inst, &o.grid, o.limit) {
            Ok(res) => {
                row.oracle_cost = res.cost;
                row.ratio = ratio_of(row.alg_cost, res.cost);
            }
            Err(e) => {
                if row.error.is_none() {
                    row.error = Some(format!("oracle: {e}"));
                }
            }
        }
    }
    row
}

/// Runs every instance in parallel; rows keep the input order.
pub fn run_experiment(spec: &ExperimentSpec, instances: &[(String, Instance)]) -> RatioReport {
    RatioReport {
        rows: instances
            .par_iter()
            .map(|(name, inst)| run_row(spec, name, inst))
            .collect(),
    }
}

/// `x,y` series.
pub fn emit_plot_data(series: &[(f64, f64)]) -> String {
    let mut out = String::from("x,y\n");
    for (x, y) in series {
        let _ = writeln!(out, "{x},{y}");
    }
    out
}

/// Ratio per instance, indexed by row position.
pub fn report_series(report: &RatioReport) -> Vec<(f64, f64)> {
    report
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| (i as f64, r.ratio))
        .collect()
}

pub fn bidding_series(bs: &[u64]) -> Result<Vec<(f64, f64)>> {
    bs.par_iter()
        .map(|&b| Ok((b as f64, bidding_optimal_ratio(b)?.ratio)))
        .collect()
}

/// Worst stopping ratio of the doubling line algorithm on the deadline
/// lower-bound family.
pub fn dline_series(bs: &[u32]) -> Result<Vec<(f64, f64)>> {
    bs.par_iter()
        .map(|&b| {
            let inst = gen_lb_mlapd(b)?;
            let run = dline_run(&inst)?;
            Ok((
                b as f64,
                adaptive_adversary(&inst, &run.deliveries, None).worst_ratio,
            ))
        })
        .collect()
}

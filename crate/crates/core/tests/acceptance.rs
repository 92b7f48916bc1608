//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Every bound is checked with the tolerance printed next to it.

use std::process::ExitCode;
use std::time::Instant;

use mlap_core::audit::{check_deadline_trace, check_general_trace, check_lbl};
use mlap_core::deadline::{r_l, DeadlineAlgorithm};
use mlap_core::general::{GeneralAlgorithm, Maturities};
use mlap_core::harness::{
    gen_any_tree, gen_ldec_random, gen_requests, gen_single_phase, CostKind, LdecParams,
};
use mlap_core::line::{
    adaptive_adversary, bidding_optimal_ratio, dline_run, gen_lb_mlapd, line_brute_force,
    line_cost, LineInstance, LineRequest,
};
use mlap_core::offline::{brute_force_opt, lbl_times, rooted_subtrees, Grid, DEFAULT_ORACLE_LIMIT};
use mlap_core::single_phase::{
    adversary_thetas, check_optimality, cov_subtree, evaluate_plan, DoublingPlan,
};
use mlap_core::transforms::{to_l_decreasing, LiftedAlgorithm};
use mlap_core::{
    cost_of_schedule, run, Instance, MonotoneCost, NodeId, NodeSet, Request, WeightedTree,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(failures: &[String], detail: String) -> Outcome {
    match failures.first() {
        None => Outcome { pass: true, detail },
        Some(f) => Outcome {
            pass: false,
            detail: format!("{detail}; {} failures, first: {f}", failures.len()),
        },
    }
}

const LS: [f64; 3] = [1.5, 2.0, 3.0];

/// The 200 small L-decreasing deadline instances shared by several criteria.
fn deadline_set() -> Vec<(u64, f64, Instance)> {
    (0..200u64)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(1_000 + seed);
            let l = LS[seed as usize % 3];
            let p = LdecParams {
                depth: rng.gen_range(1..=3),
                l,
                fanout: rng.gen_range(1..=3),
                n_requests: rng.gen_range(1..=8),
                kind: CostKind::Deadline,
                max_nodes: 9,
                horizon: 10.0,
            };
            (seed, l, gen_ldec_random(&p, seed).unwrap())
        })
        .collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for (seed, l, inst) in deadline_set() {
        let trace = run(&mut DeadlineAlgorithm::new(l), &inst).unwrap();
        for v in check_deadline_trace(&inst, &inst.tree, &trace, l) {
            failures.push(format!("seed {seed}: {v}"));
        }
        let Ok(alg) = cost_of_schedule(&inst, &trace.schedule) else {
            continue;
        };
        let opt = brute_force_opt(&inst, &Grid::Deadlines, DEFAULT_ORACLE_LIMIT)
            .unwrap()
            .cost;
        let bound = r_l(l, inst.tree.max_depth());
        worst = worst.max(alg.total / opt / bound);
        if alg.total > bound * opt * (1.0 + 1e-6) {
            failures.push(format!(
                "seed {seed}: cost {} > {bound} x opt {opt}",
                alg.total
            ));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 60.0 {
        failures.push(format!("runtime {secs:.1}s"));
    }
    outcome(
        &failures,
        format!("200 instances, max cost/(R_L opt) = {worst:.4} (tol 1e-6 rel), {secs:.2}s"),
    )
}

fn criterion_2() -> Outcome {
    let mut failures = Vec::new();
    let mut finer = 0usize;
    let mut worst: f64 = 0.0;
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(2_000 + seed);
        let l = LS[seed as usize % 3];
        let p = LdecParams {
            depth: rng.gen_range(1..=3),
            l,
            fanout: rng.gen_range(1..=3),
            n_requests: rng.gen_range(1..=8),
            kind: CostKind::Continuous,
            max_nodes: 9,
            horizon: 10.0,
        };
        let inst = gen_ldec_random(&p, 50_000 + seed).unwrap();
        let trace = run(&mut GeneralAlgorithm::new(), &inst).unwrap();
        for v in check_general_trace(&inst, &trace, l) {
            failures.push(format!("seed {seed}: {v}"));
        }
        let Ok(alg) = cost_of_schedule(&inst, &trace.schedule) else {
            continue;
        };
        let opt = brute_force_opt(&inst, &Grid::Arrivals, DEFAULT_ORACLE_LIMIT)
            .unwrap()
            .cost;
        // arrivals already suffice; the finer grid must not do better
        if let Ok(fine) = brute_force_opt(&inst, &Grid::Breakpoints, DEFAULT_ORACLE_LIMIT) {
            finer += 1;
            if fine.cost < opt * (1.0 - 1e-9) {
                failures.push(format!(
                    "seed {seed}: breakpoint grid {} beats arrivals {opt}",
                    fine.cost
                ));
            }
        }
        let d = inst.tree.max_depth() as f64;
        let bound = 4.0 * d * d * r_l(l, inst.tree.max_depth());
        worst = worst.max(alg.total / opt);
        if alg.total > bound * opt * (1.0 + 1e-6) {
            failures.push(format!(
                "seed {seed}: cost {} > {bound} x opt {opt}",
                alg.total
            ));
        }
    }
    outcome(
        &failures,
        format!(
            "200 instances, cost <= 2 scost (tol 1e-6 rel), max ratio vs oracle {worst:.4}, \
             {finer} cross-checked on the breakpoint grid"
        ),
    )
}

/// Parent arrays with `parent[i] < i` for nodes `1..n`: every rooted tree
/// shape on `n` nodes, labelled in a preorder-compatible way.
fn all_shapes(max_nodes: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut stack: Vec<Vec<usize>> = vec![vec![]];
    while let Some(p) = stack.pop() {
        if !p.is_empty() {
            out.push(p.clone());
        }
        let next = p.len() + 1;
        if next < max_nodes {
            for parent in 0..next {
                let mut q = p.clone();
                q.push(parent);
                stack.push(q);
            }
        }
    }
    out
}

fn shape_tree(rng: &mut impl Rng, parents: &[usize]) -> WeightedTree {
    let nodes: Vec<(usize, f64)> = parents
        .iter()
        .map(|&p| (p, rng.gen_range(1..=40) as f64 / 8.0))
        .collect();
    WeightedTree::from_parent_weights(&nodes).unwrap()
}

fn random_pwl(rng: &mut impl Rng, rid: u64, node: NodeId, arrival: f64) -> Request {
    if rng.gen_bool(0.3) {
        return Request::weighted(
            rid,
            node,
            arrival,
            MonotoneCost::Linear,
            rng.gen_range(1..=4) as f64 / 2.0,
        )
        .unwrap();
    }
    let mut points = vec![(arrival, 0.0)];
    let (mut t, mut v) = (arrival, 0.0);
    for _ in 0..rng.gen_range(1..=3) {
        t += rng.gen_range(1..=8) as f64 / 4.0;
        v += rng.gen_range(0..=12) as f64 / 4.0;
        points.push((t, v));
    }
    Request::new(rid, node, arrival, MonotoneCost::Pwl { points }).unwrap()
}

fn criterion_3() -> Outcome {
    let mut failures = Vec::new();
    let shapes = all_shapes(8);
    let mut checks = 0usize;
    for (k, parents) in shapes.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3_000 + k as u64);
        let tree = shape_tree(&mut rng, parents);
        let n_req = rng.gen_range(1..=6);
        let reqs: Vec<Request> = (0..n_req)
            .map(|rid| {
                let node = NodeId(rng.gen_range(1..tree.len()));
                let a = rng.gen_range(0..=8) as f64 / 2.0;
                random_pwl(&mut rng, rid, node, a)
            })
            .collect();
        let mats = Maturities::compute(&tree, &reqs);
        let subtrees: Vec<Vec<NodeSet>> = tree
            .nodes()
            .map(|v| rooted_subtrees(&tree, v, 1 << 20).unwrap())
            .collect();
        for _ in 0..20 {
            let t = rng.gen_range(0.0..12.0);
            let own: Vec<f64> = {
                let mut w = vec![0.0; tree.len()];
                for r in &reqs {
                    w[r.node.0] += r.eval(t);
                }
                w
            };
            for v in tree.nodes() {
                let brute = subtrees[v.0]
                    .iter()
                    .map(|z| {
                        z.iter().map(|u| own[u.0]).sum::<f64>() - tree.weight_of(z) + tree.weight(v)
                    })
                    .fold(f64::NEG_INFINITY, f64::max);
                let fast = mats.surplus(&tree, v, t);
                checks += 1;
                if (brute - fast).abs() > 1e-9 * brute.abs().max(1.0) {
                    failures.push(format!("shape {parents:?} v={v} t={t}: {fast} vs {brute}"));
                }
            }
        }
    }
    outcome(
        &failures,
        format!(
            "{} shapes up to 8 nodes, {checks} (node, time) checks, tol 1e-9",
            shapes.len()
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut failures = Vec::new();
    let shapes = all_shapes(7);
    let mut cases = 0usize;
    for (k, parents) in shapes.iter().enumerate() {
        for profile in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(4_000_000 + 16 * k as u64 + profile);
            let tree = shape_tree(&mut rng, parents);
            let n_req = rng.gen_range(1..=6);
            let reqs: Vec<Request> = (0..n_req)
                .map(|rid| {
                    let node = NodeId(rng.gen_range(1..tree.len()));
                    random_pwl(&mut rng, rid, node, 0.0)
                })
                .collect();
            let sp =
                mlap_core::single_phase::SinglePhaseInstance::new(tree.clone(), reqs.clone(), 20.0)
                    .unwrap();
            let services = rooted_subtrees(&tree, NodeId::ROOT, 1 << 20).unwrap();
            let mut times: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..12.0)).collect();
            times.sort_by(f64::total_cmp);
            let mut prev: Option<NodeSet> = None;
            for &t in &times {
                cases += 1;
                let own: Vec<f64> = {
                    let mut w = vec![0.0; tree.len()];
                    for r in &reqs {
                        w[r.node.0] += r.eval(t);
                    }
                    w
                };
                // t-covered: every induced subtree pays for itself
                let covered = |x: &NodeSet| {
                    x.iter().all(|&v| {
                        let part: Vec<NodeId> = tree
                            .subtree(v)
                            .into_iter()
                            .filter(|u| x.contains(u))
                            .collect();
                        part.iter().map(|u| own[u.0]).sum::<f64>()
                            >= part.iter().map(|&u| tree.weight(u)).sum::<f64>()
                    })
                };
                let mut union = NodeSet::new();
                for x in services.iter().filter(|x| covered(x)) {
                    union.extend(x.iter().copied());
                }
                let o = cov_subtree(&sp, NodeId::ROOT, t).nodes;
                let best = services
                    .iter()
                    .map(|x| sp.cost_at(x, t))
                    .fold(f64::INFINITY, f64::min);
                let got = sp.cost_at(&o, t);
                if got > best + 1e-9 * best.max(1.0) {
                    failures.push(format!(
                        "shape {parents:?} t={t}: opt {got} vs brute {best}"
                    ));
                }
                if o != union {
                    failures.push(format!(
                        "shape {parents:?} t={t}: CovSubT {o:?} vs brute {union:?}"
                    ));
                }
                if !covered(&union) {
                    failures.push(format!(
                        "shape {parents:?} t={t}: union of covered trees is not covered"
                    ));
                }
                if let Err(v) = check_optimality(&sp, &o, t, 1e-9) {
                    failures.push(format!("shape {parents:?} t={t}: {v:?}"));
                }
                if let Some(p) = &prev {
                    if !p.is_subset(&o) {
                        failures.push(format!("shape {parents:?}: O^t shrinks at {t}"));
                    }
                }
                prev = Some(o);
            }
        }
    }
    outcome(
        &failures,
        format!(
            "{} shapes up to 7 nodes x 10 profiles, {cases} (instance, time) cases, tol 1e-9",
            shapes.len()
        ),
    )
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for seed in 0..50u64 {
        let sp = gen_single_phase(3, 8, 6, 20.0, 5_000 + seed).unwrap();
        let plan = DoublingPlan::new(&sp).unwrap();
        // the adversary's stops right after each threshold, then an even grid
        let mut thetas: Vec<f64> = plan
            .thresholds
            .iter()
            .map(|&t| t + 1e-9)
            .filter(|&t| t <= sp.horizon)
            .collect();
        let fill = 200 - thetas.len();
        thetas.extend((0..fill).map(|k| sp.horizon * k as f64 / (fill - 1) as f64));
        for theta in thetas {
            let run = evaluate_plan(&sp, &plan, theta);
            worst = worst.max(run.ratio);
            if run.ratio > 4.0 + 1e-6 {
                failures.push(format!("seed {seed} theta {theta}: ratio {}", run.ratio));
            }
        }
        // the full stress set as well
        for theta in adversary_thetas(&plan, sp.horizon, 50) {
            let run = evaluate_plan(&sp, &plan, theta);
            if run.ratio > 4.0 + 1e-6 {
                failures.push(format!("seed {seed} theta {theta}: ratio {}", run.ratio));
            }
        }
    }
    if worst < 2.0 {
        failures.push(format!("no point reached ratio 2 (max {worst})"));
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 60.0 {
        failures.push(format!("runtime {secs:.1}s"));
    }
    outcome(
        &failures,
        format!("50 instances x 200 thetas, max ratio {worst:.4} (tol 4 + 1e-6), {secs:.2}s"),
    )
}

fn line_req(rid: u64, x: f64, a: f64, d: f64) -> LineRequest {
    LineRequest {
        rid,
        position: x,
        arrival: a,
        cost: MonotoneCost::Deadline {
            deadline: d,
            penalty: x,
        },
        weight: 1.0,
    }
}

fn check_dline(inst: &LineInstance, failures: &mut Vec<String>, worst: &mut f64) {
    let run = dline_run(inst).unwrap();
    match line_cost(inst, &run.deliveries) {
        Ok(c) => {
            let (_, opt) = line_brute_force(inst, 1e7).unwrap();
            let ratio = c.total / opt;
            *worst = worst.max(ratio);
            if ratio > 4.0 + 1e-6 {
                failures.push(format!("{:?}: ratio {ratio}", inst.requests));
            }
        }
        Err(e) => failures.push(format!("{:?}: {e}", inst.requests)),
    }
}

fn criterion_6() -> Outcome {
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    let mut count = 0usize;
    // every multiset of up to four (position, deadline) pairs in 1..=8, all arriving at 0
    let pairs: Vec<(u32, u32)> = (1..=8).flat_map(|x| (1..=8).map(move |d| (x, d))).collect();
    let mut idx = vec![0usize; 0];
    loop {
        if !idx.is_empty() {
            let reqs = idx
                .iter()
                .enumerate()
                .map(|(k, &i)| line_req(k as u64, pairs[i].0 as f64, 0.0, pairs[i].1 as f64))
                .collect();
            check_dline(
                &LineInstance::new(reqs, 8.0).unwrap(),
                &mut failures,
                &mut worst,
            );
            count += 1;
        }
        // next non-decreasing index tuple, growing the length up to 4
        if idx.len() < 4 {
            let start = idx.last().copied().unwrap_or(0);
            idx.push(start);
            continue;
        }
        loop {
            match idx.last_mut() {
                None => break,
                Some(last) if *last + 1 < pairs.len() => {
                    *last += 1;
                    break;
                }
                Some(_) => {
                    idx.pop();
                }
            }
        }
        if idx.is_empty() {
            break;
        }
    }
    // every pair of requests with integer arrivals as well
    let triples: Vec<(u32, u32, u32)> = (1..=8)
        .flat_map(|x| (0..=8).flat_map(move |a| (a.max(1)..=8).map(move |d| (x, a, d))))
        .collect();
    for i in 0..triples.len() {
        for j in i..triples.len() {
            let reqs = [triples[i], triples[j]]
                .iter()
                .enumerate()
                .map(|(k, &(x, a, d))| line_req(k as u64, x as f64, a as f64, d as f64))
                .collect();
            check_dline(
                &LineInstance::new(reqs, 8.0).unwrap(),
                &mut failures,
                &mut worst,
            );
            count += 1;
        }
    }
    // seeded four-request instances with arrivals
    let mut rng = ChaCha8Rng::seed_from_u64(6_000);
    for _ in 0..20_000 {
        let reqs = (0..4u64)
            .map(|k| {
                let a = rng.gen_range(0..=7);
                line_req(
                    k,
                    rng.gen_range(1..=8) as f64,
                    a as f64,
                    rng.gen_range(a.max(1)..=8) as f64,
                )
            })
            .collect();
        check_dline(
            &LineInstance::new(reqs, 8.0).unwrap(),
            &mut failures,
            &mut worst,
        );
        count += 1;
    }
    let big = gen_lb_mlapd(10_000).unwrap();
    let run = dline_run(&big).unwrap();
    let adv = adaptive_adversary(&big, &run.deliveries, None).worst_ratio;
    if adv < 3.8 {
        failures.push(format!("adversary ratio {adv} < 3.8"));
    }
    outcome(
        &failures,
        format!("{count} tiny instances, max ratio {worst:.4} (tol 4 + 1e-6); B=10^4 adversary ratio {adv:.4}"),
    )
}

fn criterion_7() -> Outcome {
    let mut failures = Vec::new();
    let r1 = bidding_optimal_ratio(1).unwrap().ratio;
    let r4 = bidding_optimal_ratio(4).unwrap().ratio;
    if r1 != 1.0 {
        failures.push(format!("ratio(1) = {r1}"));
    }
    if r4 != 2.0 {
        failures.push(format!("ratio(4) = {r4}"));
    }
    let mut prev = 0.0;
    let mut series = Vec::new();
    let mut secs_1024 = 0.0;
    for k in 0..=10 {
        let b = 1u64 << k;
        let start = Instant::now();
        let r = bidding_optimal_ratio(b).unwrap().ratio;
        if b == 1024 {
            secs_1024 = start.elapsed().as_secs_f64();
        }
        if r < prev || r >= 4.0 {
            failures.push(format!("ratio({b}) = {r} after {prev}"));
        }
        prev = r;
        series.push(format!("{r:.4}"));
    }
    if secs_1024 >= 10.0 {
        failures.push(format!("B=1024 took {secs_1024:.1}s"));
    }
    outcome(
        &failures,
        format!(
            "ratios over B=2^k: [{}], B=1024 in {secs_1024:.2}s",
            series.join(", ")
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(8_000 + seed);
        let tree = gen_any_tree(&mut rng, 3, 9).unwrap();
        let n = rng.gen_range(1..=8);
        let reqs = gen_requests(&mut rng, &tree, n, CostKind::Deadline, 10.0).unwrap();
        let inst = Instance::new(tree, reqs, 10.0).unwrap();
        let times = lbl_times(&inst).unwrap();
        for v in check_lbl(&inst, &times) {
            failures.push(format!("seed {seed}: {v}"));
        }
        let Ok(c) = cost_of_schedule(&inst, &times.to_schedule(&inst.tree)) else {
            continue;
        };
        let opt = brute_force_opt(&inst, &Grid::Deadlines, DEFAULT_ORACLE_LIMIT)
            .unwrap()
            .cost;
        worst = worst.max(c.total / opt);
        if c.total > 2.0 * opt * (1.0 + 1e-9) {
            failures.push(format!("seed {seed}: cost {} > 2 x {opt}", c.total));
        }
    }
    outcome(
        &failures,
        format!("200 instances, max cost/opt {worst:.4} (tol 1e-9 rel)"),
    )
}

fn criterion_9() -> Outcome {
    let mut failures = Vec::new();
    // reparenting of the halving path
    for d in 3..=10u32 {
        let w: Vec<f64> = (0..=d).rev().map(|i| 2f64.powi(i as i32)).collect();
        let tree = WeightedTree::path(&w).unwrap();
        let red = to_l_decreasing(&tree, 5.0).unwrap();
        for k in 1..=(d as usize + 1) {
            let expect = k.saturating_sub(3);
            if red.tree.parent(NodeId(k)) != Some(NodeId(expect)) {
                failures.push(format!(
                    "D={d}: node {k} hangs below {:?}",
                    red.tree.parent(NodeId(k))
                ));
            }
        }
    }
    // lifting bound on the deadline instance set, then on arbitrary trees
    let mut lifted_services = 0usize;
    let mut lift_run = |inst: &Instance, l: f64, failures: &mut Vec<String>| {
        let red = to_l_decreasing(&inst.tree, l).unwrap();
        let mut alg = LiftedAlgorithm::new(DeadlineAlgorithm::new(l), red.clone());
        let trace = run(&mut alg, inst).unwrap();
        let bound = red.lift_bound();
        for (t, plan) in trace.plans() {
            let inner = plan.inner.as_ref().unwrap();
            lifted_services += 1;
            let (w, wi) = (
                inst.tree.weight_of(&plan.nodes),
                red.tree.weight_of(&inner.nodes),
            );
            if w > bound * wi * (1.0 + 1e-9) {
                failures.push(format!("t={t}: lifted {w} > {bound} x {wi}"));
            }
        }
        trace
    };
    for (_, l, inst) in deadline_set() {
        lift_run(&inst, l, &mut failures);
    }
    let mut worst: f64 = 0.0;
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(9_000 + seed);
        let l = LS[seed as usize % 3];
        let tree = gen_any_tree(&mut rng, 3, 9).unwrap();
        let n = rng.gen_range(1..=8);
        let reqs = gen_requests(&mut rng, &tree, n, CostKind::Deadline, 10.0).unwrap();
        let inst = Instance::new(tree, reqs, 10.0).unwrap();
        let trace = lift_run(&inst, l, &mut failures);
        match cost_of_schedule(&inst, &trace.schedule) {
            Ok(c) => {
                let opt = brute_force_opt(&inst, &Grid::Deadlines, DEFAULT_ORACLE_LIMIT)
                    .unwrap()
                    .cost;
                let d = inst.tree.max_depth();
                let bound = d as f64 * l * r_l(l, d);
                worst = worst.max(c.total / opt / bound);
                if c.total > bound * opt * (1.0 + 1e-6) {
                    failures.push(format!(
                        "seed {seed}: cost {} > {bound} x opt {opt}",
                        c.total
                    ));
                }
            }
            Err(e) => failures.push(format!("seed {seed}: {e}")),
        }
    }
    outcome(
        &failures,
        format!("halving paths D=3..10, {lifted_services} lifted services, max cost/(D L R_L opt) {worst:.4}"),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("deadline algorithm bound", criterion_1),
        ("general algorithm invariants", criterion_2),
        ("maturity oracle equivalence", criterion_3),
        ("single-phase exactness", criterion_4),
        ("doubling 4-competitiveness", criterion_5),
        ("doubling line algorithm", criterion_6),
        ("online bidding DP", criterion_7),
        ("LBL 2-approximation", criterion_8),
        ("L-decreasing reduction", criterion_9),
    ];
    let mut all = true;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let o = f();
        all &= o.pass;
        println!(
            "criterion {} ({name}): {} - {}",
            k + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

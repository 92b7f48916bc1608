#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mlap_core::harness::{
    assertions_enabled, bidding_series, dline_series, emit_plot_data, generate, run_algorithm,
    run_experiment, AlgSpec, CostKind, ExperimentSpec, Family, Generated, LdecParams, OracleSpec,
    RatioReport,
};
use mlap_core::io::{
    discrete_from_json, instance_from_json, instance_to_json, line_from_json, line_to_json, to_json,
};
use mlap_core::line::{
    adaptive_adversary, bidding_optimal_ratio, dline_run, line_brute_force, line_cost,
};
use mlap_core::offline::{brute_force_opt, lbl_times, Grid, DEFAULT_ORACLE_LIMIT};
use mlap_core::single_phase::{
    check_optimality, evaluate_plan, opt_single_phase, DoublingPlan, SinglePhaseInstance,
};
use mlap_core::transforms::{
    default_gaps, embed_discrete, encode_deadlines, stretch, to_l_decreasing, GapSet,
};
use mlap_core::{cost_of_schedule, Instance};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "mlap",
    version,
    about = "Online multi-level aggregation: algorithms, oracles and experiments"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an online algorithm on an instance file.
    Run {
        #[command(flatten)]
        alg: AlgArgs,
        input: PathBuf,
        /// Write the full engine trace as JSON.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Exact offline optimum over a time grid.
    Oracle {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = GridArg::Arrivals)]
        grid: GridArg,
        #[arg(long, default_value_t = DEFAULT_ORACLE_LIMIT)]
        limit: f64,
    },
    /// Level-by-level 2-approximation for deadline instances.
    Lbl { input: PathBuf },
    /// Generate an instance from a seeded family.
    Gen {
        #[command(subcommand)]
        family: FamilyCmd,
        #[arg(long, global = true, default_value_t = 0)]
        seed: u64,
        #[arg(long, global = true)]
        out: Option<PathBuf>,
    },
    /// Instance transformations.
    Transform {
        #[command(subcommand)]
        kind: TransformCmd,
    },
    /// Optimal single-phase service tree at time t.
    SpOpt {
        input: PathBuf,
        #[arg(long)]
        t: f64,
    },
    /// Doubling algorithm on a single-phase instance.
    SpDoubling {
        input: PathBuf,
        /// Phase end; defaults to the horizon.
        #[arg(long, conflicts_with = "theta_sweep")]
        theta: Option<f64>,
        /// `lo:hi:n` evenly spaced phase ends.
        #[arg(long)]
        theta_sweep: Option<String>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Line-metric algorithms.
    Line {
        #[command(subcommand)]
        kind: LineCmd,
    },
    /// Algorithm against the oracle on a batch of instances.
    Compare {
        #[command(flatten)]
        alg: AlgArgs,
        /// Instance files; when empty, `--count` instances are generated.
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        ldec: LdecArgs,
        #[arg(long, default_value_t = 0)]
        count: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = GridArg::Arrivals)]
        grid: GridArg,
        #[arg(long, default_value_t = DEFAULT_ORACLE_LIMIT)]
        limit: f64,
        #[arg(long)]
        no_oracle: bool,
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Fill the `ms` column; off by default so reruns are byte-identical.
        #[arg(long)]
        timing: bool,
    },
    /// Ratio series as `x,y` CSV.
    PlotData {
        #[command(subcommand)]
        kind: PlotCmd,
        #[arg(long, global = true)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgName {
    Deadline,
    General,
    LiftedDeadline,
    LiftedGeneral,
    Lbl,
}

#[derive(Args)]
struct AlgArgs {
    #[arg(long, value_enum, default_value_t = AlgName::General)]
    alg: AlgName,
    /// Decrease factor for the deadline and lifted algorithms.
    #[arg(long = "alg-l", default_value_t = 2.0)]
    alg_l: f64,
}

impl AlgArgs {
    fn spec(&self) -> Result<AlgSpec> {
        let l = self.alg_l;
        if !(l >= 1.0) {
            bail!("--alg-l must be at least 1");
        }
        Ok(match self.alg {
            AlgName::Deadline => AlgSpec::Deadline { l },
            AlgName::General => AlgSpec::General,
            AlgName::LiftedDeadline => AlgSpec::LiftedDeadline { l },
            AlgName::LiftedGeneral => AlgSpec::LiftedGeneral { l },
            AlgName::Lbl => AlgSpec::Lbl,
        })
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GridArg {
    Deadlines,
    Arrivals,
    Breakpoints,
}

impl GridArg {
    fn grid(self) -> Grid {
        match self {
            GridArg::Deadlines => Grid::Deadlines,
            GridArg::Arrivals => Grid::Arrivals,
            GridArg::Breakpoints => Grid::Breakpoints,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Deadline,
    Linear,
    Pwl,
    Continuous,
}

impl From<KindArg> for CostKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Deadline => CostKind::Deadline,
            KindArg::Linear => CostKind::Linear,
            KindArg::Pwl => CostKind::Pwl,
            KindArg::Continuous => CostKind::Continuous,
        }
    }
}

#[derive(Args, Clone)]
struct LdecArgs {
    #[arg(long, default_value_t = 3)]
    depth: usize,
    #[arg(long, default_value_t = 2.0)]
    l: f64,
    #[arg(long, default_value_t = 2)]
    fanout: usize,
    #[arg(long, default_value_t = 6)]
    n_requests: usize,
    #[arg(long, value_enum, default_value_t = KindArg::Deadline)]
    kind: KindArg,
    #[arg(long, default_value_t = 9)]
    max_nodes: usize,
    #[arg(long, default_value_t = 10.0)]
    horizon: f64,
}

impl LdecArgs {
    fn params(&self) -> LdecParams {
        LdecParams {
            depth: self.depth,
            l: self.l,
            fanout: self.fanout,
            n_requests: self.n_requests,
            kind: self.kind.into(),
            max_nodes: self.max_nodes,
            horizon: self.horizon,
        }
    }
}

#[derive(Subcommand)]
enum FamilyCmd {
    /// Random L-decreasing tree with random requests.
    LdecRandom(LdecArgs),
    /// Path with weights 2^D down to 1.
    Path {
        #[arg(long)]
        depth: u32,
        #[arg(long, default_value_t = 4)]
        n_requests: usize,
        #[arg(long, value_enum, default_value_t = KindArg::Linear)]
        kind: KindArg,
        #[arg(long, default_value_t = 10.0)]
        horizon: f64,
    },
    /// Single-phase instance repeated over nested phases.
    NestedPhase {
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 2.0)]
        m: f64,
        #[arg(long, default_value_t = 4.0)]
        theta: f64,
        #[arg(long, default_value_t = 2)]
        depth: usize,
        #[arg(long, default_value_t = 6)]
        max_nodes: usize,
        #[arg(long, default_value_t = 4)]
        n_requests: usize,
    },
    /// Deadline lower-bound line instance.
    LineLbD {
        #[arg(long)]
        b: u32,
    },
    /// Linear-cost lower-bound line instance.
    LineLbL {
        #[arg(long)]
        b: u32,
    },
}

#[derive(Subcommand)]
enum TransformCmd {
    /// Reparent to an L-decreasing tree.
    Ldec {
        input: PathBuf,
        #[arg(long)]
        l: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Deadlines as piecewise-linear steep costs.
    EncodeDeadlines {
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Discrete-time instance to continuous time.
    EmbedDiscrete {
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Insert idle gaps into the time axis.
    Stretch {
        input: PathBuf,
        /// `start:length` pairs separated by commas; defaults to small gaps
        /// after every event.
        #[arg(long)]
        gaps: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum LineCmd {
    /// Doubling line algorithm on a deadline line instance.
    Dline {
        input: PathBuf,
        /// Also compute the exact offline optimum.
        #[arg(long)]
        oracle: bool,
    },
    /// Optimal online bidding ratio for bids up to b.
    Bidding {
        #[arg(long)]
        b: u64,
    },
    /// Worst stopping ratio of the doubling line algorithm.
    Adversary { input: PathBuf },
}

#[derive(Subcommand)]
enum PlotCmd {
    /// Optimal bidding ratio for B = 2^0 .. 2^max-exp.
    Bidding {
        #[arg(long, default_value_t = 10)]
        max_exp: u32,
    },
    /// Adversary ratio of the doubling line algorithm for B = 2^1 .. 2^max-exp.
    Dline {
        #[arg(long, default_value_t = 10)]
        max_exp: u32,
    },
    /// Ratio per row of a `compare` CSV report.
    Report { report: PathBuf },
}

enum Outcome {
    Ok,
    Violation,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_instance(path: &Path) -> Result<Instance> {
    instance_from_json(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    let text = format!("{}\n", text.trim_end());
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => match io::stdout().lock().write_all(text.as_bytes()) {
            Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
            r => Ok(r?),
        },
    }
}

fn emit_json(value: &serde_json::Value) -> Result<()> {
    emit(None, &serde_json::to_string_pretty(value)?)
}

fn parse_sweep(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, n] = parts[..] else {
        bail!("theta sweep must be lo:hi:n")
    };
    let (lo, hi): (f64, f64) = (lo.parse()?, hi.parse()?);
    let n: usize = n.parse()?;
    if n == 0 || !(lo <= hi) {
        bail!("theta sweep needs lo <= hi and n >= 1");
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect())
}

fn parse_gaps(s: &str) -> Result<GapSet> {
    let gaps = s
        .split(',')
        .map(|g| {
            let (a, b) = g
                .split_once(':')
                .ok_or_else(|| anyhow!("gap must be start:length"))?;
            Ok((a.trim().parse()?, b.trim().parse()?))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    Ok(GapSet::new(gaps)?)
}

fn report_ratios(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut reader =
        csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let col = reader
        .headers()?
        .iter()
        .position(|h| h == "ratio")
        .ok_or_else(|| anyhow!("{} has no ratio column", path.display()))?;
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let ratio: f64 = rec.get(col).unwrap_or("").parse().unwrap_or(f64::NAN);
        out.push((i as f64, ratio));
    }
    Ok(out)
}

fn execute(cli: Cli) -> Result<Outcome> {
    let check = assertions_enabled();
    match cli.cmd {
        Cmd::Run { alg, input, trace } => {
            let inst = read_instance(&input)?;
            let spec = alg.spec()?;
            let out = run_algorithm(&spec, &inst, check)?;
            let cost = cost_of_schedule(&inst, &out.schedule)?;
            if let (Some(p), Some(t)) = (trace.as_deref(), out.trace.as_ref()) {
                emit(Some(p), &to_json(t))?;
            }
            let violations: Vec<String> = out.violations.iter().map(|v| v.to_string()).collect();
            emit_json(&json!({
                "alg": spec.label(),
                "cost": cost.total,
                "scost": cost.scost,
                "wcost": cost.wcost,
                "services": out.schedule.len(),
                "schedule": out.schedule,
                "violations": violations,
            }))?;
            for v in &violations {
                eprintln!("invariant violated: {v}");
            }
            Ok(if violations.is_empty() {
                Outcome::Ok
            } else {
                Outcome::Violation
            })
        }
        Cmd::Oracle { input, grid, limit } => {
            let inst = read_instance(&input)?;
            let res = brute_force_opt(&inst, &grid.grid(), limit)?;
            emit_json(&json!({
                "cost": res.cost,
                "grid": res.grid,
                "schedule": res.schedule,
            }))?;
            Ok(Outcome::Ok)
        }
        Cmd::Lbl { input } => {
            let inst = read_instance(&input)?;
            let spec = AlgSpec::Lbl;
            let out = run_algorithm(&spec, &inst, check)?;
            let times = lbl_times(&inst)?;
            let cost = cost_of_schedule(&inst, &out.schedule)?;
            let per_node: Vec<_> = inst
                .tree
                .nodes()
                .map(|v| json!({"node": v, "times": times.of(v)}))
                .collect();
            emit_json(&json!({
                "cost": cost.total,
                "node_times": per_node,
                "schedule": out.schedule,
            }))?;
            for v in &out.violations {
                eprintln!("invariant violated: {v}");
            }
            Ok(if out.violations.is_empty() {
                Outcome::Ok
            } else {
                Outcome::Violation
            })
        }
        Cmd::Gen { family, seed, out } => {
            let family = match family {
                FamilyCmd::LdecRandom(a) => Family::LdecRandom(a.params()),
                FamilyCmd::Path {
                    depth,
                    n_requests,
                    kind,
                    horizon,
                } => Family::Path {
                    depth,
                    n_requests,
                    kind: kind.into(),
                    horizon,
                },
                FamilyCmd::NestedPhase {
                    k,
                    m,
                    theta,
                    depth,
                    max_nodes,
                    n_requests,
                } => Family::NestedPhase {
                    k,
                    m,
                    theta,
                    depth,
                    max_nodes,
                    n_requests,
                },
                FamilyCmd::LineLbD { b } => Family::LineLbD { b },
                FamilyCmd::LineLbL { b } => Family::LineLbL { b },
            };
            let text = match generate(&family, seed)? {
                Generated::Tree(inst) => instance_to_json(&inst),
                Generated::Line(inst) => line_to_json(&inst),
            };
            emit(out.as_deref(), &text)?;
            Ok(Outcome::Ok)
        }
        Cmd::Transform { kind } => {
            match kind {
                TransformCmd::Ldec { input, l, out } => {
                    let inst = read_instance(&input)?;
                    let red = to_l_decreasing(&inst.tree, l)?;
                    let moved =
                        Instance::new(red.tree.clone(), inst.requests.clone(), inst.horizon)?;
                    emit(out.as_deref(), &instance_to_json(&moved))?;
                    eprintln!("lift bound {}", red.lift_bound());
                }
                TransformCmd::EncodeDeadlines { input, out } => {
                    let inst = read_instance(&input)?;
                    emit(out.as_deref(), &instance_to_json(&encode_deadlines(&inst)?))?;
                }
                TransformCmd::EmbedDiscrete { input, out } => {
                    let inst = discrete_from_json(&read(&input)?)?;
                    emit(out.as_deref(), &instance_to_json(&embed_discrete(&inst)?))?;
                }
                TransformCmd::Stretch { input, gaps, out } => {
                    let inst = read_instance(&input)?;
                    let gaps = match gaps {
                        Some(g) => parse_gaps(&g)?,
                        None => default_gaps(&inst),
                    };
                    emit(out.as_deref(), &instance_to_json(&stretch(&inst, &gaps)?))?;
                }
            }
            Ok(Outcome::Ok)
        }
        Cmd::SpOpt { input, t } => {
            let sp = SinglePhaseInstance::from_instance(&read_instance(&input)?)?;
            let (x, cost) = opt_single_phase(&sp, t);
            let optimality = check_optimality(&sp, &x, t, 1e-9);
            emit_json(&json!({
                "t": t,
                "nodes": x,
                "opt": cost,
            }))?;
            match optimality_outcome(check, optimality) {
                Some(msg) => {
                    eprintln!("invariant violated: {msg}");
                    Ok(Outcome::Violation)
                }
                None => Ok(Outcome::Ok),
            }
        }
        Cmd::SpDoubling {
            input,
            theta,
            theta_sweep,
            csv,
        } => {
            let sp = SinglePhaseInstance::from_instance(&read_instance(&input)?)?;
            let plan = DoublingPlan::new(&sp)?;
            let thetas = match (&theta_sweep, theta) {
                (Some(s), _) => parse_sweep(s)?,
                (None, Some(t)) => vec![t],
                (None, None) => vec![sp.horizon],
            };
            let mut table = String::from("theta,alg_cost,opt_cost,ratio\n");
            let mut violated = false;
            let mut worst: f64 = 0.0;
            for &t in &thetas {
                let run = evaluate_plan(&sp, &plan, t);
                table.push_str(&format!(
                    "{},{},{},{}\n",
                    t, run.alg_cost, run.opt_cost, run.ratio
                ));
                worst = worst.max(run.ratio);
                if check && run.ratio > 4.0 + 1e-6 {
                    eprintln!("invariant violated: ratio {} at theta {t}", run.ratio);
                    violated = true;
                }
            }
            match csv {
                Some(p) => {
                    emit(Some(&p), &table)?;
                    let steps: Vec<_> = plan
                        .steps
                        .iter()
                        .map(|s| json!({"time": s.time, "nodes": s.nodes}))
                        .collect();
                    emit_json(&json!({
                        "thresholds": plan.thresholds,
                        "steps": steps,
                        "max_ratio": worst,
                    }))?;
                }
                None => emit(None, &table)?,
            }
            Ok(if violated {
                Outcome::Violation
            } else {
                Outcome::Ok
            })
        }
        Cmd::Line { kind } => {
            match kind {
                LineCmd::Dline { input, oracle } => {
                    let inst = line_from_json(&read(&input)?)?;
                    let run = dline_run(&inst)?;
                    let cost = line_cost(&inst, &run.deliveries)?;
                    let mut out = json!({
                        "cost": cost.total,
                        "scost": cost.scost,
                        "wcost": cost.wcost,
                        "deliveries": run.deliveries,
                    });
                    let mut violated = false;
                    if oracle {
                        let (_, opt) = line_brute_force(&inst, DEFAULT_ORACLE_LIMIT)?;
                        let ratio = if opt > 0.0 { cost.total / opt } else { 1.0 };
                        out["oracle_cost"] = json!(opt);
                        out["ratio"] = json!(ratio);
                        if check && ratio > 4.0 + 1e-6 {
                            eprintln!("invariant violated: ratio {ratio} exceeds 4");
                            violated = true;
                        }
                    }
                    emit_json(&out)?;
                    Ok(if violated {
                        Outcome::Violation
                    } else {
                        Outcome::Ok
                    })
                }
                LineCmd::Bidding { b } => {
                    emit(None, &to_json(&bidding_optimal_ratio(b)?))?;
                    Ok(Outcome::Ok)
                }
                LineCmd::Adversary { input } => {
                    let inst = line_from_json(&read(&input)?)?;
                    let run = dline_run(&inst)?;
                    let rep = adaptive_adversary(&inst, &run.deliveries, None);
                    let stops: Vec<_> = rep
                    .stops
                    .iter()
                    .map(|s| json!({"theta": s.theta, "alg": s.alg, "opt": s.opt, "ratio": s.ratio}))
                    .collect();
                    emit_json(&json!({
                        "worst_ratio": rep.worst_ratio,
                        "worst_theta": rep.worst_theta,
                        "stops": stops,
                    }))?;
                    Ok(Outcome::Ok)
                }
            }
        }
        Cmd::Compare {
            alg,
            inputs,
            ldec,
            count,
            seed,
            grid,
            limit,
            no_oracle,
            csv,
            timing,
        } => {
            let spec = ExperimentSpec {
                alg: alg.spec()?,
                oracle: (!no_oracle).then(|| OracleSpec {
                    grid: grid.grid(),
                    limit,
                }),
                check,
            };
            let mut instances = Vec::new();
            for p in &inputs {
                instances.push((p.display().to_string(), read_instance(p)?));
            }
            let family = Family::LdecRandom(ldec.params());
            for k in 0..count {
                let s = seed + k;
                match generate(&family, s)? {
                    Generated::Tree(inst) => instances.push((format!("ldec-random-{s}"), inst)),
                    Generated::Line(_) => unreachable!("tree family"),
                }
            }
            let report = run_experiment(&spec, &instances);
            emit(csv.as_deref(), &report.to_csv(timing))?;
            summarize(&report);
            Ok(if report.has_violation() {
                Outcome::Violation
            } else {
                Outcome::Ok
            })
        }
        Cmd::PlotData { kind, out } => {
            let series = match kind {
                PlotCmd::Bidding { max_exp } => {
                    bidding_series(&(0..=max_exp).map(|k| 1u64 << k).collect::<Vec<_>>())?
                }
                PlotCmd::Dline { max_exp } => {
                    dline_series(&(1..=max_exp).map(|k| 1u32 << k).collect::<Vec<_>>())?
                }
                PlotCmd::Report { report } => report_ratios(&report)?,
            };
            emit(out.as_deref(), &emit_plot_data(&series))?;
            Ok(Outcome::Ok)
        }
    }
}

fn optimality_outcome<E: std::fmt::Debug>(
    check: bool,
    res: std::result::Result<(), E>,
) -> Option<String> {
    match res {
        Err(e) if check => Some(format!("{e:?}")),
        _ => None,
    }
}

fn summarize(report: &RatioReport) {
    let errors = report.rows.iter().filter(|r| r.error.is_some()).count();
    eprintln!(
        "{} rows, max ratio {}, mean ratio {}, {} errors",
        report.rows.len(),
        report.max_ratio(),
        report.mean_ratio(),
        errors
    );
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Violation) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn sweep_parsing() {
        assert_eq!(parse_sweep("0:1:3").unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_sweep("2:2:1").unwrap(), vec![2.0]);
        assert!(parse_sweep("1:0:3").is_err());
        assert!(parse_sweep("0:1").is_err());
    }
}

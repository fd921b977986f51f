use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use skyreel_core::experiment::{self, CoverageConfig, OptimalConfig};
use skyreel_core::greedy::{self, fleet_speed, GreedyOptions, PlanAssignment};
use skyreel_core::report::{self, export_plan, PlanDoc, StateDoc};
use skyreel_core::scenario::{self, GenParams};
use skyreel_core::{DiscretizationGraph, GraphWarning, MapSpec, Mission, OracleBudget};

const PLAN_ALPHA: f64 = 5.0;
const OPTIMAL_ALPHA: f64 = 30.0;

#[derive(Parser)]
#[command(name = "skyreel", version, about = "Plan multi-UAV filming missions under battery limits")]
struct Cli {
    /// Discretization step in seconds (5 for planning, 30 for `experiment optimal`).
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Base seed for generators and experiments.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Suppress the summary printed next to the output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a mission file and report graph warnings.
    Validate { mission: PathBuf },
    /// Plan a mission from its initial states.
    Plan {
        mission: PathBuf,
        #[command(flatten)]
        opts: PlanOpts,
    },
    /// Plan the rest of a mission from an execution state file.
    Replan {
        mission: PathBuf,
        state: PathBuf,
        #[command(flatten)]
        opts: PlanOpts,
    },
    /// Generate a random mission.
    Generate {
        #[arg(value_enum)]
        family: Family,
        #[arg(long, default_value_t = 20)]
        n: usize,
        /// Maximum simultaneously active tasks.
        #[arg(long, default_value_t = 4)]
        x: usize,
        #[arg(long, default_value_t = 1)]
        uavs: usize,
        /// JSON file with generator parameters overriding the defaults.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    #[command(subcommand)]
    Experiment(Experiment),
    /// Print the planning graph as a plain-text adjacency list.
    GraphDump {
        mission: PathBuf,
        #[arg(long)]
        map: Option<PathBuf>,
    },
}

#[derive(Args)]
struct PlanOpts {
    /// Seconds left unfilmed after every covered interval (relay spacing).
    #[arg(long, default_value_t = 0.0)]
    relay_gap: f64,
    /// Map JSON (origin, cell_size, width, height, no_fly_zones) replacing the mission's map.
    #[arg(long)]
    map: Option<PathBuf>,
    /// Also write the gantt CSV here.
    #[arg(long)]
    gantt: Option<PathBuf>,
    /// Print the gantt CSV columns and exit.
    #[arg(long)]
    schema: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    /// Straight tasks along a route.
    Longitudinal,
    /// Static, chase, flyby and orbit shots around moving targets.
    Mix,
}

#[derive(Subcommand)]
enum Experiment {
    /// Coverage ratio against fleet size on longitudinal missions.
    Coverage {
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        x: usize,
        #[arg(long, default_value_t = 20)]
        repetitions: usize,
        #[arg(long, default_value_t = 8)]
        k_max: usize,
        /// Leave the timing column empty.
        #[arg(long)]
        no_timing: bool,
        #[arg(long)]
        schema: bool,
    },
    /// Greedy against exhaustive coverage on mixed-shot missions.
    Optimal {
        #[arg(long, default_value_t = 1)]
        n_min: usize,
        #[arg(long, default_value_t = 6)]
        n_max: usize,
        #[arg(long, default_value_t = 10)]
        repetitions: usize,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 3)]
        max_active: usize,
        #[arg(long)]
        no_timing: bool,
        #[arg(long)]
        schema: bool,
    },
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_mission(path: &Path, map: Option<&Path>) -> Result<Mission> {
    let mut mission = Mission::load(&read(path)?).with_context(|| format!("in {}", path.display()))?;
    if let Some(map) = map {
        let spec: MapSpec = serde_json::from_slice(&read(map)?).with_context(|| format!("in {}", map.display()))?;
        mission.map = Some(spec);
        mission.validate().with_context(|| format!("{} with map {}", path.display(), map.display()))?;
    }
    Ok(mission)
}

fn emit(out: Option<&Path>, content: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, content).with_context(|| format!("cannot write {}", p.display())),
        None => io::stdout().write_all(content).context("cannot write to stdout"),
    }
}

/// Summary goes to stdout when the main output is a file, otherwise to stderr.
fn say(cli: &Cli, line: &str) {
    if cli.quiet {
        return;
    }
    if cli.out.is_some() {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
}

fn summarize(cli: &Cli, a: &PlanAssignment, ms: f64) {
    say(cli, &format!("{:<12} {:>12}", "uav", "filming_s"));
    for p in &a.plans {
        say(cli, &format!("{:<12} {:>12.3}", p.uav_id, p.filming_time));
    }
    say(cli, &format!("FT = {:.3} s of {:.3} s", a.total_filming_time, a.total_task_duration));
    say(cli, &format!("CR = {:.4}", a.coverage_ratio));
    say(cli, &format!("planning time = {ms:.3} ms (median of 5)"));
}

fn median_ms(mut run: impl FnMut() -> Result<PlanAssignment>) -> Result<(PlanAssignment, f64)> {
    let mut times = Vec::with_capacity(5);
    let mut last = None;
    for _ in 0..5 {
        let t = Instant::now();
        last = Some(run()?);
        times.push(t.elapsed().as_secs_f64() * 1e3);
    }
    times.sort_by(f64::total_cmp);
    Ok((last.expect("five runs"), times[2]))
}

fn write_plan(cli: &Cli, opts: &PlanOpts, doc: &PlanDoc) -> Result<()> {
    emit(cli.out.as_deref(), doc.to_json().as_bytes())?;
    if let Some(path) = &opts.gantt {
        let mut buf = Vec::new();
        report::write_gantt(doc, &mut buf)?;
        fs::write(path, buf).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

fn options(opts: &PlanOpts) -> Result<GreedyOptions> {
    if !opts.relay_gap.is_finite() || opts.relay_gap < 0.0 {
        bail!("--relay-gap must be >= 0");
    }
    Ok(GreedyOptions { relay_gap: opts.relay_gap, ..GreedyOptions::default() })
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Validate { mission } => {
            let m = load_mission(mission, None)?;
            let alpha = cli.alpha.unwrap_or(PLAN_ALPHA);
            let graph = DiscretizationGraph::build(&m, alpha, fleet_speed(&m))?;
            for w in graph.warnings() {
                match w {
                    GraphWarning::UnreachableTask { task_id } => {
                        eprintln!("warning: task `{task_id}` cannot be reached from any base station")
                    }
                    GraphWarning::CoarseAlpha { alpha, battery } => {
                        eprintln!("warning: alpha {alpha} s is coarse for a {battery} s battery")
                    }
                }
            }
            say(
                cli,
                &format!(
                    "ok: {} tasks, {} stations, {} UAVs, graph {} vertices / {} edges",
                    m.tasks.len(),
                    m.base_stations.len(),
                    m.uavs.len(),
                    graph.vertices().len(),
                    graph.edges().len()
                ),
            );
        }
        Command::Plan { mission, opts } => {
            if opts.schema {
                println!("{}", report::GANTT_COLUMNS);
                return Ok(());
            }
            let m = load_mission(mission, opts.map.as_deref())?;
            let alpha = cli.alpha.unwrap_or(PLAN_ALPHA);
            let options = options(opts)?;
            let (a, ms) = median_ms(|| Ok(greedy::plan_mission(&m, alpha, options)?.1))?;
            write_plan(cli, opts, &export_plan(&a, alpha, opts.relay_gap, None))?;
            summarize(cli, &a, ms);
        }
        Command::Replan { mission, state, opts } => {
            if opts.schema {
                println!("{}", report::GANTT_COLUMNS);
                return Ok(());
            }
            let m = load_mission(mission, opts.map.as_deref())?;
            let doc = StateDoc::from_json(&read(state)?).with_context(|| format!("in {}", state.display()))?;
            for u in &doc.uavs {
                if m.uav(&u.uav_id).is_none() {
                    bail!("state file names unknown UAV `{}`", u.uav_id);
                }
            }
            for c in &doc.covered {
                if !m.tasks.iter().any(|t| t.id == c.task_id) {
                    bail!("state file names unknown task `{}`", c.task_id);
                }
            }
            let exec = doc.to_execution_state();
            let alpha = cli.alpha.unwrap_or(PLAN_ALPHA);
            let options = options(opts)?;
            let (a, ms) = median_ms(|| Ok(greedy::replan(&m, &exec, alpha, options)?))?;
            write_plan(cli, opts, &export_plan(&a, alpha, opts.relay_gap, Some(exec.clock)))?;
            summarize(cli, &a, ms);
        }
        Command::Generate { family, n, x, uavs, params } => {
            let mut p: GenParams = match params {
                Some(path) => serde_json::from_slice(&read(path)?).with_context(|| format!("in {}", path.display()))?,
                None => GenParams::default(),
            };
            p.seed = cli.seed;
            p.uav_count = *uavs;
            let (name, m) = match family {
                Family::Longitudinal => ("longitudinal", scenario::gen_longitudinal(*n, *x, &p)?),
                Family::Mix => ("mix", scenario::gen_shot_mix(*n, *x, &p)?),
            };
            emit(cli.out.as_deref(), m.to_json().as_bytes())?;
            if let Some(out) = &cli.out {
                let manifest = json!({ "family": name, "n": n, "x": x, "seed": cli.seed, "params": p });
                let mut side = out.clone().into_os_string();
                side.push(".manifest.json");
                let text = serde_json::to_string_pretty(&manifest)? + "\n";
                fs::write(&side, text).with_context(|| format!("cannot write {}", Path::new(&side).display()))?;
            }
        }
        Command::Experiment(Experiment::Coverage { n, x, repetitions, k_max, no_timing, schema }) => {
            if *schema {
                println!("{}", experiment::COVERAGE_COLUMNS);
                return Ok(());
            }
            let cfg = CoverageConfig {
                n: *n,
                x: *x,
                repetitions: *repetitions,
                k_max: *k_max,
                seed: cli.seed,
                alpha: cli.alpha.unwrap_or(PLAN_ALPHA),
                params: GenParams::default(),
            };
            let report = experiment::run_coverage(&cfg)?;
            let mut buf = Vec::new();
            experiment::write_coverage_csv(&report, &mut buf, !no_timing)?;
            emit(cli.out.as_deref(), &buf)?;
            for (k, cr) in report.mean_cr.iter().enumerate() {
                say(cli, &format!("k={} mean CR={cr:.4}", k + 1));
            }
        }
        Command::Experiment(Experiment::Optimal { n_min, n_max, repetitions, k, max_active, no_timing, schema }) => {
            if *schema {
                println!("{}", experiment::OPTIMAL_COLUMNS);
                return Ok(());
            }
            let alpha = cli.alpha.unwrap_or(OPTIMAL_ALPHA);
            let cfg = OptimalConfig {
                n_min: *n_min,
                n_max: *n_max,
                repetitions: *repetitions,
                seed: cli.seed,
                alpha,
                k: *k,
                max_active: *max_active,
                params: optimal_params(alpha),
                budget: OracleBudget { max_vertices: 120, max_plans: 20_000, ..OracleBudget::default() },
            };
            let report = experiment::run_optimal(&cfg)?;
            let mut buf = Vec::new();
            experiment::write_optimal_csv(&report, &mut buf, !no_timing)?;
            emit(cli.out.as_deref(), &buf)?;
            for g in &report.groups {
                say(
                    cli,
                    &format!(
                        "n={} instances={} greedy CR={:.4} optimal CR={:.4} ratio={:.4}",
                        g.n, g.instances, g.greedy_cr, g.optimal_cr, g.ratio
                    ),
                );
            }
        }
        Command::GraphDump { mission, map } => {
            let m = load_mission(mission, map.as_deref())?;
            let graph = DiscretizationGraph::build(&m, cli.alpha.unwrap_or(PLAN_ALPHA), fleet_speed(&m))?;
            emit(cli.out.as_deref(), graph.dump().as_bytes())?;
        }
    }
    Ok(())
}

/// Mixed-shot missions sampled on the discretization step, over a 200 m square.
fn optimal_params(alpha: f64) -> GenParams {
    GenParams { route_length: 200.0, horizon: 150.0, sample_step: alpha, ..GenParams::default() }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use mapf_rrr::analysis::{tail_stats, validate, write_survival_csv, RuntimeSample};
use mapf_rrr::campaign::{
    build_solver, default_workers, read_manifest, run_campaign, write_outputs, AgentSweep, CampaignSpec,
    InstanceSource, SolverEntry,
};
use mapf_rrr::grid::GridMap;
use mapf_rrr::instance::{generate_kiva_instance, make_highway, Highway, HighwayPolarity, KivaTemplate, MapfInstance};
use mapf_rrr::plot::{plot_survival, PlotFormat};
use mapf_rrr::randomize::RandomizationPolicy;
use mapf_rrr::restart::{read_telemetry, run_rrr, write_telemetry, RestartSchedule, TelemetryRow};
use mapf_rrr::solution::{Solution, SolveStatus};
use mapf_rrr::{MapfError, Result};

#[derive(Parser)]
#[command(name = "mapf-rrr", version, about = "Multi-agent path finding with randomized restarts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance and print or write the solution CSV.
    Solve(SolveArgs),
    /// Write a Kiva-like map, scenario and highway.
    Generate(GenerateArgs),
    /// Check a solution CSV against an instance.
    Validate(ValidateArgs),
    /// Run a sweep of instances, solvers and restart counts.
    Campaign(CampaignArgs),
    /// Runtime statistics of a telemetry CSV.
    Stats(StatsArgs),
}

#[derive(Args)]
struct RandomArgs {
    /// Which solver decisions are randomized.
    #[arg(long = "random", default_value = "permute", value_parser = ["none", "permute", "full"])]
    random: String,
    /// Bias of the rank-biased choices (1 = always the best-ranked item).
    #[arg(long = "bias-p", default_value_t = 0.5)]
    bias_p: f64,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    scen: PathBuf,
    /// Highway CSV (`from_row,from_col,to_row,to_col`).
    #[arg(long)]
    hwy: Option<PathBuf>,
    #[arg(long, value_parser = ["cbs", "ecbs", "cbs_hwy", "iecbs", "mstar"])]
    solver: String,
    #[arg(long, default_value_t = 1.0)]
    w: f64,
    #[arg(long, default_value_t = 1.0)]
    inflation: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Total wall-clock budget, e.g. `30s` or `10m`.
    #[arg(long, default_value = "1m", value_parser = humantime::parse_duration)]
    budget: Duration,
    /// Number of trials the budget is divided among.
    #[arg(long, default_value_t = 1)]
    restarts: usize,
    /// Run the trials concurrently; the first success cancels the rest.
    #[arg(long)]
    rrr_parallel: bool,
    #[command(flatten)]
    random: RandomArgs,
    /// Directory for `solution.csv` and `telemetry.csv`; the solution goes to
    /// stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    /// `rows,cols,corridor,margin`.
    #[arg(long, default_value = "4,6,1,4")]
    kiva: String,
    #[arg(long)]
    agents: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "positive", value_parser = ["none", "positive", "negative"])]
    highway: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    scen: PathBuf,
    #[arg(long)]
    solution: PathBuf,
}

#[derive(Args)]
struct CampaignArgs {
    /// Replay a campaign from its `manifest.json`; other spec flags are ignored.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Kiva template `rows,cols,corridor,margin` (the default source).
    #[arg(long, conflicts_with = "map")]
    kiva: Option<String>,
    /// Map file; instances get uniformly random starts and goals.
    #[arg(long)]
    map: Option<PathBuf>,
    #[arg(long, requires = "map")]
    hwy: Option<PathBuf>,
    /// Agent counts `a:b:step`, inclusive.
    #[arg(long, default_value = "10:60:10")]
    agents: String,
    #[arg(long, default_value_t = 20)]
    per_count: usize,
    /// Comma-separated solver names.
    #[arg(long, default_value = "mstar")]
    solver: String,
    /// Comma-separated suboptimality factors.
    #[arg(long, default_value = "1.5")]
    w: String,
    #[arg(long, default_value_t = 1.0)]
    inflation: f64,
    /// Comma-separated highway settings: none, positive, negative (Kiva) or file.
    #[arg(long, default_value = "none")]
    highway: String,
    /// Comma-separated restart counts.
    #[arg(long, default_value = "1,2,4,10")]
    restarts: String,
    #[arg(long, default_value = "1m", value_parser = humantime::parse_duration)]
    budget: Duration,
    /// Give every trial the full budget instead of dividing it.
    #[arg(long)]
    no_divide: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    rrr_parallel: bool,
    #[command(flatten)]
    random: RandomArgs,
    #[arg(long, default_value = "svg", value_parser = ["svg", "gnuplot", "none"])]
    plot: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    telemetry: PathBuf,
    /// Directory for `survival.csv` and plots.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "svg", value_parser = ["svg", "gnuplot", "none"])]
    plot: String,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| MapfError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn parse_kiva(s: &str) -> Result<KivaTemplate> {
    let nums: Vec<u32> = s
        .split(',')
        .map(|p| p.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| MapfError::Usage(format!("bad Kiva template {s:?}, expected rows,cols,corridor,margin")))?;
    let [pod_rows, pod_cols, corridor_width, open_margin] = nums[..] else {
        return Err(MapfError::Usage(format!("bad Kiva template {s:?}, expected rows,cols,corridor,margin")));
    };
    let t = KivaTemplate {
        pod_rows,
        pod_cols,
        corridor_width,
        open_margin,
    };
    t.validate()?;
    Ok(t)
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse().map_err(|_| MapfError::Usage(format!("bad {what} {p:?}"))))
        .collect()
}

fn load_instance(map: &Path, scen: &Path, hwy: Option<&Path>) -> Result<MapfInstance> {
    let grid = Arc::new(GridMap::parse(&read(map)?)?);
    let highway = match hwy {
        Some(p) => Some(Highway::parse(&read(p)?, &grid)?),
        None => None,
    };
    Ok(MapfInstance::load_scenario(&read(scen)?, grid)?.with_highway(highway))
}

fn exit_for(status: SolveStatus) -> u8 {
    match status {
        SolveStatus::Solved => 0,
        SolveStatus::Infeasible => 2,
        SolveStatus::Timeout | SolveStatus::Cancelled => 3,
        SolveStatus::MemoryExhausted => 4,
    }
}

fn solve(args: SolveArgs) -> Result<u8> {
    let inst = load_instance(&args.map, &args.scen, args.hwy.as_deref())?;
    let policy = RandomizationPolicy::preset(&args.random.random, args.random.bias_p)?;
    let solver = build_solver(&args.solver, args.w, args.inflation, policy, inst.highway.clone())?;
    let mut schedule = RestartSchedule::new(args.budget, args.restarts)?;
    if args.rrr_parallel {
        schedule = schedule.parallel(default_workers());
    }
    let result = run_rrr(&inst, &solver, &schedule, args.seed)?;
    let csv = result.solution.as_ref().map(|s: &Solution| s.to_csv(&inst.map));
    match &args.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            if let Some(csv) = &csv {
                std::fs::write(dir.join("solution.csv"), csv)?;
            }
            let rows: Vec<TelemetryRow> = result
                .outcomes
                .iter()
                .enumerate()
                .map(|(i, o)| TelemetryRow::new("cli", solver.name(), "rrr", solver.w(), args.restarts, i, o))
                .collect();
            write_telemetry(&rows, std::fs::File::create(dir.join("telemetry.csv"))?)?;
        }
        None => {
            if let Some(csv) = &csv {
                print!("{csv}");
            }
        }
    }
    let cost = result.solution.as_ref().map(|s| s.cost().to_string()).unwrap_or_else(|| "-".into());
    eprintln!("status={} cost={} trials={}", result.status, cost, result.outcomes.len());
    Ok(exit_for(result.status))
}

fn generate(args: GenerateArgs) -> Result<u8> {
    let template = parse_kiva(&args.kiva)?;
    let inst = generate_kiva_instance(&template, args.agents, args.seed)?;
    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("kiva.map"), inst.map.serialize())?;
    std::fs::write(args.out.join("kiva.scen"), inst.save_scenario())?;
    let polarity = match args.highway.as_str() {
        "positive" => Some(HighwayPolarity::Positive),
        "negative" => Some(HighwayPolarity::Negative),
        _ => None,
    };
    if let Some(p) = polarity {
        let hwy = make_highway(&template, p)?;
        std::fs::write(args.out.join("kiva.hwy.csv"), hwy.serialize(&inst.map))?;
    }
    Ok(0)
}

fn validate_cmd(args: ValidateArgs) -> Result<u8> {
    let inst = load_instance(&args.map, &args.scen, None)?;
    let sol = Solution::from_csv(&read(&args.solution)?, &inst.map, inst.num_agents())?;
    let report = validate(&inst, &sol.paths)?;
    for (agent, defect) in &report.defects {
        println!("agent {agent}: {defect:?}");
    }
    for c in &report.conflicts {
        println!("conflict {c}");
    }
    println!("cost={} valid={}", report.cost, report.is_solution());
    Ok(if report.is_solution() { 0 } else { 1 })
}

fn campaign_spec(args: &CampaignArgs) -> Result<CampaignSpec> {
    let source = match (&args.map, &args.kiva) {
        (Some(map), _) => InstanceSource::Map {
            map: map.clone(),
            hwy: args.hwy.clone(),
        },
        (None, kiva) => InstanceSource::Kiva {
            template: kiva.as_deref().map(parse_kiva).transpose()?.unwrap_or_default(),
        },
    };
    let names: Vec<String> = parse_list(&args.solver, "solver")?;
    let ws: Vec<f64> = parse_list(&args.w, "w")?;
    let mut solvers = Vec::new();
    for name in &names {
        for &w in &ws {
            let entry = SolverEntry {
                solver: name.clone(),
                w: if name == "cbs" { 1.0 } else { w },
                inflation: args.inflation,
            };
            if !solvers.contains(&entry) {
                solvers.push(entry);
            }
        }
    }
    Ok(CampaignSpec {
        source,
        agents: AgentSweep::parse(&args.agents)?,
        per_count: args.per_count,
        solvers,
        highways: parse_list(&args.highway, "highway")?,
        restarts: parse_list(&args.restarts, "restart count")?,
        budget_ms: args.budget.as_millis() as u64,
        divide_budget: !args.no_divide,
        randomization: args.random.random.clone(),
        bias_p: args.random.bias_p,
        rrr_parallel: args.rrr_parallel,
        master_seed: args.seed,
    })
}

fn campaign(args: CampaignArgs) -> Result<u8> {
    let spec = match &args.manifest {
        Some(path) => read_manifest(path)?,
        None => campaign_spec(&args)?,
    };
    let format: PlotFormat = args.plot.parse()?;
    let result = run_campaign(&spec, default_workers())?;
    write_outputs(&spec, &result, &args.out, format)?;
    for row in &result.success.rows {
        eprintln!(
            "agents={} solver={} w={} highway={} k={} rate={:.2} ({}/{})",
            row.agents, row.solver, row.w, row.highway, row.k, row.rate, row.solved, row.attempted
        );
    }
    Ok(0)
}

fn stats(args: StatsArgs) -> Result<u8> {
    let rows = read_telemetry(std::fs::File::open(&args.telemetry)?)?;
    let sample = RuntimeSample {
        runs: rows.iter().map(|r| (r.runtime_ms, r.status != "solved")).collect(),
    };
    let s = tail_stats(&sample);
    let show = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
    println!("runs={} solved={}", sample.runs.len(), sample.runs.iter().filter(|r| !r.1).count());
    println!("median_ms={} mad_ms={}", show(s.median), show(s.mad));
    println!("max_over_median={} tail_slope={} tail_r2={}", show(s.max_over_median), show(s.tail_slope), show(s.tail_r2));
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        write_survival_csv(&s, std::fs::File::create(dir.join("survival.csv"))?)?;
        plot_survival(&[("runtime".to_string(), s)], dir, "survival", args.plot.parse()?)?;
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Solve(a) => solve(a),
        Command::Generate(a) => generate(a),
        Command::Validate(a) => validate_cmd(a),
        Command::Campaign(a) => campaign(a),
        Command::Stats(a) => stats(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

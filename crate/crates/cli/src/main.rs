use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use layered_num::admission::{greedy_select, knapsack_oracle, random_instance, AdmissionInstance, ORACLE_LIMIT};
use layered_num::{load_scenario, run, RunSummary, Scenario64};

#[derive(Parser)]
#[command(
    name = "layered-num",
    version,
    about = "Congestion pricing and admission control for layered-media users"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write its trace and summary.
    Run(RunArgs),
    /// Check a scenario file.
    Validate(ScenarioArg),
    /// Compare greedy admission with the exhaustive optimum on random instances.
    AdmissionCompare(CompareArgs),
}

#[derive(Args)]
struct ScenarioArg {
    /// Scenario JSON file.
    #[arg(value_name = "SCENARIO", required_unless_present = "scenario")]
    path: Option<PathBuf>,
    #[arg(long, conflicts_with = "path")]
    scenario: Option<PathBuf>,
}

impl ScenarioArg {
    fn path(&self) -> &Path {
        self.scenario
            .as_deref()
            .or(self.path.as_deref())
            .expect("clap enforces one path")
    }

    fn load(&self) -> Result<Scenario64> {
        let path = self.path();
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        load_scenario(&text).with_context(|| format!("invalid scenario {}", path.display()))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// Trace file; the trace goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// JSON summary file; defaults to `<out>.summary.json` when `--out` is set.
    #[arg(long)]
    summary: Option<PathBuf>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Initial price step size.
    #[arg(long, allow_negative_numbers = true)]
    sigma0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    delta_lambda: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    delta_u: Option<f64>,
}

#[derive(Args)]
struct CompareArgs {
    /// Users per instance.
    #[arg(long, default_value_t = 10)]
    users: usize,
    /// Links per instance.
    #[arg(long, default_value_t = 3)]
    links: usize,
    #[arg(long, default_value_t = 100)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn apply_overrides(scenario: &mut Scenario64, args: &RunArgs) -> Result<()> {
    if let Some(n) = args.max_iterations {
        scenario.solver.max_iterations = n;
    }
    if let Some(s) = args.sigma0 {
        scenario.solver.step_size = s;
    }
    if let Some(d) = args.delta_lambda {
        scenario.admission.weights.delta_lambda = d;
    }
    if let Some(d) = args.delta_u {
        scenario.admission.weights.delta_u = d;
    }
    scenario.validate().context("overrides produce an invalid scenario")?;
    Ok(())
}

fn run_command(args: &RunArgs) -> Result<()> {
    let mut scenario = args.scenario.load()?;
    apply_overrides(&mut scenario, args)?;
    info!(
        "running {} iterations over {} links and {} users",
        scenario.solver.max_iterations,
        scenario.links.len(),
        scenario.users.len()
    );
    let trace = run(&scenario).context("simulation failed")?;

    let mut out = output(args.out.as_deref())?;
    match args.format {
        Format::Csv => trace.write_csv(&mut out)?,
        Format::Json => trace.write_json(&mut out)?,
    }
    out.flush()?;

    let summary = RunSummary::from_trace(
        &trace,
        scenario.solver.convergence_window,
        scenario.solver.convergence_tolerance,
    );
    let summary_path = args.summary.clone().or_else(|| {
        args.out.as_ref().map(|p| {
            let mut s = p.clone().into_os_string();
            s.push(".summary.json");
            PathBuf::from(s)
        })
    });
    if let Some(p) = &summary_path {
        std::fs::write(p, summary.to_json() + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    // keep stdout clean when it carries the trace
    if args.out.is_some() {
        print!("{}", summary.digest());
    } else {
        eprint!("{}", summary.digest());
    }
    Ok(())
}

fn validate_command(args: &ScenarioArg) -> Result<()> {
    let s = args.load()?;
    println!(
        "{}: ok ({} links, {} users, {} events)",
        args.path().display(),
        s.links.len(),
        s.users.len(),
        s.events.len()
    );
    Ok(())
}

fn compare_command(args: &CompareArgs) -> Result<()> {
    if args.users > ORACLE_LIMIT {
        bail!("--users {} exceeds the oracle limit of {ORACLE_LIMIT}", args.users);
    }
    if args.links == 0 {
        bail!("--links must be at least 1");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut w = csv::Writer::from_writer(output(args.out.as_deref())?);
    w.write_record(["instance", "greedy_objective", "oracle_objective", "ratio"])?;
    let mut worst = 1.0f64;
    for i in 0..args.instances {
        let inst: AdmissionInstance<f64> = random_instance(&mut rng, args.users, args.links);
        let g = greedy_select(&inst.bids, &inst.capacities)?;
        let o = knapsack_oracle(&inst.bids, &inst.capacities)?;
        let ratio = if o.objective > 0.0 {
            g.objective / o.objective
        } else {
            1.0
        };
        worst = worst.min(ratio);
        w.write_record([
            i.to_string(),
            g.objective.to_string(),
            o.objective.to_string(),
            ratio.to_string(),
        ])?;
    }
    w.flush()?;
    info!("{} instances, worst greedy/oracle ratio {worst}", args.instances);
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LAYERED_NUM_LOG", "warn")).init();
    match Cli::parse().command {
        Command::Run(a) => run_command(&a),
        Command::Validate(a) => validate_command(&a),
        Command::AdmissionCompare(a) => compare_command(&a),
    }
}

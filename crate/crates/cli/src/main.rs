use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use fleet_pricer::analysis::{benchmark, fleet_opportunity_cost, monte_carlo_eval};
use fleet_pricer::batch::{ingest, plan_day, run_batch, write_outputs, BatchError, RunConfig};
use fleet_pricer::fmt::round_sig;
use fleet_pricer::market::io::write_records;
use fleet_pricer::market::{generate_history, BookingRecord, MarketGrid};
use fleet_pricer::qp::solve;
use serde_json::{json, Value};

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;

#[derive(Parser)]
#[command(name = "fleet-pricer", version, about = "Dynamic pricing for rental fleets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a heuristic booking history and write records.csv.
    Simulate(Common),
    /// Fit the elasticity tree and the time-varying slope; write grouping.json and estimate.json.
    Estimate(Common),
    /// Forecast demand for the next window; write forecast.csv.
    Forecast(Common),
    /// Solve one day's pricing problem; write policy.csv and run.json.
    Optimize(Common),
    /// Run the daily batch loop and write every artefact.
    Batch(ConfigArgs),
    /// Compare the heuristic and optimized policies; write benchmark.csv and report.svg.
    Benchmark(BenchmarkArgs),
    /// Value an extra vehicle by lifting the utilization rows; write opportunity_cost.json.
    OpportunityCost(Common),
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// JSON config file; missing keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding `batch.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dotted override such as `optimizer.lambda=0.5`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Clone)]
struct Common {
    #[command(flatten)]
    config: ConfigArgs,
    /// Booking history CSV; simulated from the config when absent.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct BenchmarkArgs {
    #[command(flatten)]
    common: Common,
    /// Monte Carlo draws per policy.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<BatchError> for Failure {
    fn from(e: BatchError) -> Self {
        let code = if e.is_config() { EXIT_CONFIG } else { EXIT_DATA };
        Failure { code, error: e.into() }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure { code: EXIT_DATA, error }
    }
}

fn data_err<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure { code: EXIT_DATA, error: e.into() }
}

fn load_config(c: &ConfigArgs) -> Result<RunConfig, Failure> {
    let text = match &c.config {
        Some(p) => Some(
            fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))
                .map_err(|error| Failure { code: EXIT_CONFIG, error })?,
        ),
        None => None,
    };
    let mut overrides = c.set.clone();
    if let Some(seed) = c.seed {
        overrides.push(format!("batch.seed={seed}"));
    }
    let mut config = RunConfig::from_parts(text.as_deref(), &overrides)?;
    if let Some(out) = &c.out {
        config.output_dir = out.clone();
    }
    Ok(config)
}

struct RunContext {
    config: RunConfig,
    grid: MarketGrid,
    records: Vec<BookingRecord>,
    /// First booking day not covered by the records.
    as_of: i64,
}

fn prepare(c: &Common) -> Result<RunContext, Failure> {
    let config = load_config(&c.config)?;
    config.validate()?;
    let grid = config.build_grid()?;
    let records = match &c.input {
        Some(p) => ingest(p, &config)?,
        None => generate_history(&grid, &config.randomization(), config.batch.warmup_days).map_err(BatchError::from)?,
    };
    let as_of = records
        .iter()
        .map(|r| r.booking_day + 1)
        .max()
        .ok_or_else(|| data_err(anyhow::anyhow!("the booking history is empty")))?;
    fs::create_dir_all(&config.output_dir)
        .with_context(|| format!("creating {}", config.output_dir.display()))
        .map_err(data_err)?;
    Ok(RunContext { config, grid, records, as_of })
}

fn write_file(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    let p = dir.join(name);
    fs::write(&p, contents).with_context(|| format!("writing {}", p.display())).map_err(data_err)?;
    log::info!("wrote {}", p.display());
    Ok(())
}

fn rounded(v: Value) -> Value {
    match v {
        Value::Number(n) if !(n.is_i64() || n.is_u64()) => n.as_f64().map_or(Value::Null, |f| json!(round_sig(f, 9))),
        Value::Array(a) => Value::Array(a.into_iter().map(rounded).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, rounded(v))).collect()),
        other => other,
    }
}

fn write_json(dir: &Path, name: &str, v: Value) -> Result<(), Failure> {
    let mut s = serde_json::to_string_pretty(&rounded(v)).map_err(data_err)?;
    s.push('\n');
    write_file(dir, name, s)
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Simulate(c) => {
            let ctx = prepare(&c)?;
            let mut buf = Vec::new();
            write_records(&mut buf, &ctx.records, ctx.config.epoch).map_err(data_err)?;
            write_file(&ctx.config.output_dir, "records.csv", buf)?;
            println!("{} records over {} booking days", ctx.records.len(), ctx.as_of);
        }
        Command::Estimate(c) => {
            let ctx = prepare(&c)?;
            let plan = plan_day(&ctx.config, &ctx.grid, &ctx.records, ctx.as_of)?;
            let dims = plan.problem.grid.dims;
            let classes: Vec<Value> = (0..dims.max_abt)
                .flat_map(|abt| (1..=dims.max_lor).map(move |lor| (abt, lor)))
                .zip(&plan.problem.elasticity)
                .map(|((abt, lor), (e, se))| json!({"abt": abt, "lor": lor, "elasticity": e, "se": se}))
                .collect();
            let root = plan.tree.estimate.as_ref();
            write_json(&ctx.config.output_dir, "grouping.json", plan.tree.to_json())?;
            write_json(
                &ctx.config.output_dir,
                "estimate.json",
                json!({
                    "as_of": ctx.as_of,
                    "pooled_slope": root.map(|r| r.slope),
                    "pooled_se": root.map(|r| r.slope_se),
                    "pooled_p_value": root.map(|r| r.slope_pvalue),
                    "tvc_latest": plan.tvc_latest,
                    "classes": classes,
                    "events": plan.events,
                }),
            )?;
            if let Some(r) = root {
                println!("pooled elasticity {:.4} (se {:.4}, p {:.3e})", r.slope, r.slope_se, r.slope_pvalue);
            }
        }
        Command::Forecast(c) => {
            let ctx = prepare(&c)?;
            let plan = plan_day(&ctx.config, &ctx.grid, &ctx.records, ctx.as_of)?;
            write_file(&ctx.config.output_dir, "forecast.csv", plan.problem.forecast.to_csv())?;
            println!(
                "forecast for pickup days {}..{}",
                ctx.as_of,
                ctx.as_of + plan.problem.grid.dims.n_pickup_days as i64
            );
        }
        Command::Optimize(c) => {
            let ctx = prepare(&c)?;
            let plan = plan_day(&ctx.config, &ctx.grid, &ctx.records, ctx.as_of)?;
            let (policy, report) = solve(&plan.problem).map_err(data_err)?;
            let dir = &ctx.config.output_dir;
            write_file(dir, "policy.csv", policy.to_csv(&plan.problem))?;
            write_json(
                dir,
                "run.json",
                json!({
                    "as_of": ctx.as_of,
                    "config": serde_json::to_value(&ctx.config).map_err(data_err)?,
                    "report": serde_json::to_value(&report).map_err(data_err)?,
                    "objective": policy.objective,
                    "expected_margin": policy.expected_margin,
                    "utilization": policy.utilization,
                    "events": plan.events,
                }),
            )?;
            println!("{:?} after {} iterations, objective {:.2}", report.status, report.iterations, policy.objective);
        }
        Command::Batch(c) => {
            let config = load_config(&c)?;
            let state = run_batch(&config)?;
            write_outputs(&config, &state, &config.output_dir)?;
            let fallbacks = state.history.iter().filter(|d| d.status == "fallback").count();
            println!(
                "{} days: realized margin {:.2}, heuristic {:.2}, {} fallback days",
                state.history.len(),
                state.cumulative_margin(),
                state.cumulative_heuristic_margin(),
                fallbacks
            );
        }
        Command::Benchmark(b) => {
            let ctx = prepare(&b.common)?;
            let plan = plan_day(&ctx.config, &ctx.grid, &ctx.records, ctx.as_of)?;
            let p = &plan.problem;
            let (policy, _) = solve(p).map_err(data_err)?;
            let heuristic = vec![1.0f64.clamp(p.bounds.0, p.bounds.1); p.n_cells()];
            let table = benchmark(
                p,
                &[("heuristic".into(), heuristic.clone()), ("optimized".into(), policy.multipliers.clone())],
            )
            .map_err(data_err)?;
            let dir = &ctx.config.output_dir;
            write_file(dir, "benchmark.csv", table.to_csv())?;
            write_file(dir, "report.svg", table.to_svg())?;
            if b.samples > 0 {
                let seed = ctx.config.batch.seed;
                let mut mc = serde_json::Map::new();
                for (label, x) in [("heuristic", &heuristic), ("optimized", &policy.multipliers)] {
                    let r = monte_carlo_eval(p, x, b.samples, seed).map_err(data_err)?;
                    mc.insert(label.to_string(), serde_json::to_value(r).map_err(data_err)?);
                }
                write_json(dir, "montecarlo.json", Value::Object(mc))?;
            }
            print!("{}", table.to_csv());
        }
        Command::OpportunityCost(c) => {
            let ctx = prepare(&c)?;
            let plan = plan_day(&ctx.config, &ctx.grid, &ctx.records, ctx.as_of)?;
            let fc = fleet_opportunity_cost(&plan.problem).map_err(data_err)?;
            write_json(
                &ctx.config.output_dir,
                "opportunity_cost.json",
                json!({
                    "constrained_margin": fc.constrained_margin,
                    "unconstrained_margin": fc.unconstrained_margin,
                    "n_constrained": fc.n_constrained,
                    "n_optimal": fc.n_optimal,
                    "oc_per_vehicle": fc.oc_per_vehicle,
                    "zero_delta_n": fc.zero_delta_n,
                }),
            )?;
            println!("opportunity cost per vehicle {:.4}", fc.oc_per_vehicle);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

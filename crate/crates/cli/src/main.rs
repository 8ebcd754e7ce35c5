use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tunnel_mpc::aero::force_field;
use tunnel_mpc::cbf::harness::{calibrate_lambda, HarnessConfig};
use tunnel_mpc::sim::bench::{benchmark_suite, render_table};
use tunnel_mpc::sim::io::{format_float, metrics_json, write_records_csv};
use tunnel_mpc::{apply_overrides, load_config, run_scenario, ScenarioCase, ScenarioConfig};

/// Quadrotor tunnel-flight simulator with Naive, hard-constrained and
/// barrier-constrained MPC.
#[derive(Parser)]
#[command(name = "tunnelmpc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario; writes records.csv and metrics.json.
    Run(Common),
    /// Run every case × controller × seed; writes bench.txt and bench.json.
    Bench(BenchArgs),
    /// Tabulate the mean aerodynamic force over a tunnel cross-section.
    Field(FieldArgs),
    /// Find the smallest violation-free λ on the double-integrator harness.
    CalibrateLambda(CalibrateArgs),
}

#[derive(Args)]
struct Common {
    /// JSON scenario config; omitted keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted override, e.g. `mpc.horizon=20`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, env = "TUNNELMPC_OUT", default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    /// Seeds per case and controller, counting up from --seed (default 0).
    #[arg(long, default_value_t = 3)]
    seeds: u64,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Override applied to one case only, e.g. `close_proximity:cbf.lambda=2`.
    #[arg(long = "case-set", value_name = "CASE:KEY=VALUE")]
    case_overrides: Vec<String>,
}

#[derive(Args)]
struct FieldArgs {
    #[command(flatten)]
    common: Common,
    /// Axial position of the cross-section; defaults to mid-tunnel.
    #[arg(long)]
    x: Option<f64>,
    /// Grid spacing, m.
    #[arg(long, default_value_t = 0.05)]
    step: f64,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 10_000)]
    episodes: usize,
    /// Bisection tolerance on λ.
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn load(common: &Common) -> Result<ScenarioConfig, Failure> {
    let mut config = load_config(common.config.as_deref(), &common.overrides).map_err(config_err)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| runtime_err(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| runtime_err(format!("{}: {e}", path.display())))
}

/// Returns whether the run collided.
fn cmd_run(args: &Common) -> Result<bool, Failure> {
    let config = load(args)?;
    let run = run_scenario(&config).map_err(runtime_err)?;
    let mut csv = Vec::new();
    write_records_csv(&run.records, &mut csv).map_err(runtime_err)?;
    write(&args.out, "records.csv", &csv)?;
    let json = metrics_json(&run.metrics, &config).map_err(runtime_err)?;
    write(&args.out, "metrics.json", json.as_bytes())?;
    print!("{json}");
    Ok(run.metrics.collided)
}

fn parse_case(name: &str) -> Result<ScenarioCase, Failure> {
    ScenarioCase::ALL
        .into_iter()
        .find(|c| c.name() == name)
        .ok_or_else(|| Failure::Config(format!("unknown case {name:?}")))
}

fn cmd_bench(args: &BenchArgs) -> Result<(), Failure> {
    let base = load(&args.common)?;
    let mut per_case: Vec<(ScenarioCase, Vec<String>)> = ScenarioCase::ALL.iter().map(|&c| (c, Vec::new())).collect();
    for entry in &args.case_overrides {
        let (case, kv) = entry.split_once(':').ok_or_else(|| Failure::Config(format!("--case-set {entry:?}: expected CASE:KEY=VALUE")))?;
        let case = parse_case(case)?;
        per_case.iter_mut().find(|(c, _)| *c == case).expect("every case listed").1.push(kv.to_string());
    }
    let configs = per_case
        .iter()
        .map(|(case, kv)| apply_overrides(&ScenarioConfig { case: *case, ..base }, kv).map_err(config_err))
        .collect::<Result<Vec<_>, _>>()?;
    let first = args.common.seed.unwrap_or(0);
    let seeds: Vec<u64> = (first..first + args.seeds).collect();
    let report = benchmark_suite(&configs, &seeds, args.jobs).map_err(runtime_err)?;
    let text = render_table(&report);
    write(&args.common.out, "bench.txt", text.as_bytes())?;
    let mut json = serde_json::to_string_pretty(&report).map_err(runtime_err)?;
    json.push('\n');
    write(&args.common.out, "bench.json", json.as_bytes())?;
    print!("{text}");
    println!("{} runs", report.runs.len());
    Ok(())
}

fn cmd_field(args: &FieldArgs) -> Result<(), Failure> {
    let config = load(&args.common)?;
    if args.step.is_nan() || args.step <= 0.0 {
        return Err(Failure::Config("--step must be > 0".into()));
    }
    let x = args.x.unwrap_or(config.geometry.length / 2.0);
    let mut csv = String::from("y,z,fx,fy,fz\n");
    let points = force_field(&config.geometry, &config.uav, &config.aero, x, args.step);
    for (y, z, f) in &points {
        let row = [*y, *z, f.x, f.y, f.z].map(format_float);
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    write(&args.common.out, "field.csv", csv.as_bytes())?;
    println!("{} grid points at x = {x}", points.len());
    Ok(())
}

fn cmd_calibrate(args: &CalibrateArgs) -> Result<(), Failure> {
    let config = load(&args.common)?;
    if args.tol.is_nan() || args.tol <= 0.0 {
        return Err(Failure::Config("--tol must be > 0".into()));
    }
    let harness = HarnessConfig { params: config.cbf, d_m: config.wind.d_m, episodes: args.episodes, ..HarnessConfig::default() };
    let cal = calibrate_lambda(&harness, config.seed, args.tol).map_err(runtime_err)?;
    for r in &cal.trace {
        println!("lambda {:<12.6} violations {:<6} min_h {:.6}", r.lambda, r.violations, r.min_h);
    }
    println!("lambda* = {}", cal.lambda);
    let mut json = serde_json::to_string_pretty(&cal).map_err(runtime_err)?;
    json.push('\n');
    write(&args.common.out, "lambda.json", json.as_bytes())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a).map(|collided| if collided { 3 } else { 0 }),
        Command::Bench(a) => cmd_bench(a).map(|_| 0),
        Command::Field(a) => cmd_field(a).map(|_| 0),
        Command::CalibrateLambda(a) => cmd_calibrate(a).map(|_| 0),
    };
    match result {
        Ok(0) => ExitCode::SUCCESS,
        Ok(code) => {
            eprintln!("run ended in a collision");
            ExitCode::from(code)
        }
        Err(f) => {
            match &f {
                Failure::Config(m) => eprintln!("config error: {m}"),
                Failure::Runtime(m) => eprintln!("error: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}

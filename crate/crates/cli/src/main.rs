//! `frozen-er`: simulation, fluid-limit numerics, forest enumeration and the
//! acceptance suite of the p-frozen Erdős–Rényi process.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;
use sha2::{Digest, Sha256};

use frozen_er::acceptance::{run_suite, Level, ACCEPTANCE_SEED};
use frozen_er::fluid_limit::GelCurve;
use frozen_er::forest_counts::{britikov_asymptotic, count_forests_exact};
use frozen_er::forest_sampler::ForestSampler;
use frozen_er::rng::master_rng;
use frozen_er::simulator::{run, Grid, Mode, RunConfig, KEEP_EDGES_MAX_N};
use frozen_er::stats_harness::{run_named, EXPERIMENTS};
use frozen_er::Error;

const EXIT_ACCEPTANCE: u8 = 2;
const EXIT_USAGE: u8 = 1;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "frozen-er", version, about = "The p-frozen Erdős–Rényi random graph process")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one trajectory.
    Simulate(SimulateArgs),
    /// Tabulate a fluid-limit function on a grid.
    Fluid(FluidArgs),
    /// Count labelled forests with N vertices and M edges.
    CountForests(CountArgs),
    /// Draw uniform forests with N vertices and M edges.
    SampleForest(SampleArgs),
    /// Run a named Monte-Carlo experiment.
    Experiment(ExperimentArgs),
    /// Run the acceptance suite.
    Verify(VerifyArgs),
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::Discrete)]
    mode: ModeArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `uniform:POINTS[:END]` or a comma-separated list of clock values.
    #[arg(long, default_value = "uniform:512")]
    grid: String,
    #[arg(long, default_value_t = 10)]
    k_max: usize,
    #[arg(long)]
    step_cap: Option<u64>,
    /// Rings on edges already present are ignored (Poissonized mode).
    #[arg(long)]
    strict_ppp: bool,
    /// Keeps the forest part at the last grid point in the JSON record (n <= 10^4).
    #[arg(long)]
    keep_edges: bool,
    /// Writes the run record as JSON here and the trajectory next to it as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ModeArg {
    Discrete,
    Poissonized,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize, PartialEq)]
#[serde(rename_all = "lowercase")]
enum FluidFn {
    G,
    D,
    V,
    E,
    R,
    #[value(name = "t_k")]
    TK,
}

#[derive(Args, Debug, Serialize)]
struct FluidArgs {
    #[arg(long = "fn", value_enum, default_value_t = FluidFn::G)]
    function: FluidFn,
    #[arg(long)]
    p: f64,
    /// Tree size for `t_k`.
    #[arg(long, default_value_t = 1)]
    k: u64,
    #[arg(long, default_value_t = 0.0)]
    t_min: f64,
    #[arg(long)]
    t_max: f64,
    #[arg(long)]
    t_step: f64,
}

#[derive(Args, Debug, Serialize)]
struct CountArgs {
    #[arg(long)]
    n: u64,
    #[arg(long)]
    m: u64,
    #[arg(long, conflicts_with = "asymptotic")]
    exact: bool,
    /// Prints the asymptotic estimate of the natural log of the count.
    #[arg(long)]
    asymptotic: bool,
    /// Regime cutoff on `|omega|`.
    #[arg(long, default_value_t = frozen_er::forest_counts::DEFAULT_REGIME_CUTOFF)]
    cutoff: f64,
}

#[derive(Args, Debug, Serialize)]
struct SampleArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    count: usize,
}

#[derive(Args, Debug, Serialize)]
struct ExperimentArgs {
    #[arg(long)]
    name: String,
    /// TOML file of configuration keys; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct VerifyArgs {
    /// Exact small-instance checks only.
    #[arg(long, conflicts_with = "full")]
    quick: bool,
    /// Every criterion (the default).
    #[arg(long)]
    full: bool,
    #[arg(long, default_value_t = ACCEPTANCE_SEED)]
    seed: u64,
}

/// Failure of a subcommand, mapped to an exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Numerical(String),
    Acceptance(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NoConvergence { .. } | Error::StepCap(_) => Failure::Numerical(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(format!("i/o: {e}"))
    }
}

type Outcome = Result<(), Failure>;

/// Version, configuration hash and seed, carried by every output.
#[derive(Debug, Clone, Serialize)]
struct Header {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config_hash: String,
    seed: Option<u64>,
}

impl Header {
    fn new<C: Serialize>(command: &'static str, config: &C, seed: Option<u64>) -> Self {
        let canonical = serde_json::to_string(config).unwrap_or_default();
        let digest = Sha256::digest(format!("{command}:{canonical}").as_bytes());
        let config_hash = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
        Self {
            tool: "frozen-er",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config_hash,
            seed,
        }
    }

    fn comment(&self) -> String {
        let seed = self.seed.map(|s| s.to_string()).unwrap_or_else(|| "none".into());
        format!(
            "# {} {} {} config_hash={} seed={}",
            self.tool, self.version, self.command, self.config_hash, seed
        )
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn check_p(p: f64) -> Outcome {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(usage(format!("--p must lie in (0, 1], got {p}")))
    }
}

fn parse_grid(text: &str) -> Result<Grid, Failure> {
    if let Some(rest) = text.strip_prefix("uniform:") {
        let mut parts = rest.split(':');
        let points = parts
            .next()
            .and_then(|s| s.parse::<usize>().ok())
            .filter(|&k| k >= 2)
            .ok_or_else(|| usage(format!("bad grid `{text}`: need uniform:POINTS[:END] with POINTS >= 2")))?;
        let end = match parts.next() {
            Some(s) => Some(
                s.parse::<f64>()
                    .ok()
                    .filter(|x| *x > 0.0)
                    .ok_or_else(|| usage(format!("bad grid end in `{text}`")))?,
            ),
            None => None,
        };
        if parts.next().is_some() {
            return Err(usage(format!("bad grid `{text}`")));
        }
        return Ok(Grid::Uniform { points, end });
    }
    let values = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<Vec<f64>, _>>()
        .map_err(|_| usage(format!("bad grid `{text}`")))?;
    if values.is_empty() || values.windows(2).any(|w| !(w[1] > w[0])) || values[0] < 0.0 {
        return Err(usage(format!(
            "grid `{text}` must be non-negative and strictly increasing"
        )));
    }
    Ok(Grid::Explicit(values))
}

fn simulate(args: &SimulateArgs) -> Outcome {
    check_p(args.p)?;
    if args.n < 2 || args.k_max < 1 {
        return Err(usage("need --n >= 2 and --k-max >= 1"));
    }
    if args.keep_edges && args.n > KEEP_EDGES_MAX_N {
        return Err(usage(format!("--keep-edges needs --n <= {KEEP_EDGES_MAX_N}")));
    }
    let mode = match args.mode {
        ModeArg::Discrete => Mode::Discrete,
        ModeArg::Poissonized => Mode::Poissonized,
    };
    let config = RunConfig {
        grid: parse_grid(&args.grid)?,
        k_max: args.k_max,
        step_cap: args.step_cap,
        strict_ppp: args.strict_ppp,
        keep_edges: args.keep_edges,
        ..RunConfig::new(args.n, args.p, mode, args.seed)
    };
    let header = Header::new("simulate", &config, Some(args.seed));
    info!("simulating n = {}, p = {}, mode = {:?}", args.n, args.p, mode);
    let record = run(&config)?;
    let csv = format!("{}\n{}", header.comment(), record.trajectory_csv());
    match &args.out {
        Some(path) => {
            let json = serde_json::json!({ "header": header, "record": record });
            fs::write(path, serde_json::to_string_pretty(&json).expect("record serializes"))?;
            let csv_path = path.with_extension("csv");
            fs::write(&csv_path, csv)?;
            info!("wrote {} and {}", path.display(), csv_path.display());
        }
        None => print!("{csv}"),
    }
    if !record.complete {
        log::warn!("step cap reached after {} steps; the record is partial", record.steps);
    }
    Ok(())
}

fn fluid(args: &FluidArgs) -> Outcome {
    check_p(args.p)?;
    if !(args.t_step > 0.0) || !(args.t_min >= 0.0) || !(args.t_max >= args.t_min) {
        return Err(usage("need 0 <= --t-min <= --t-max and --t-step > 0"));
    }
    if args.function == FluidFn::TK && args.k == 0 {
        return Err(usage("--k must be positive"));
    }
    let header = Header::new("fluid", args, None);
    let curve = GelCurve::new(args.p)?;
    let steps = ((args.t_max - args.t_min) / args.t_step + 1e-9).floor() as usize;
    let mut out = String::new();
    out.push_str(&header.comment());
    out.push_str("\nt,value\n");
    for i in 0..=steps {
        let t = args.t_min + i as f64 * args.t_step;
        let value = match args.function {
            FluidFn::G => curve.g(t)?,
            FluidFn::D => curve.d(t)?,
            FluidFn::V => curve.v(t)?,
            FluidFn::E => curve.e(t)?,
            FluidFn::R => curve.r(t)?,
            FluidFn::TK => curve.t_pk(args.k, t)?,
        };
        out.push_str(&format!("{t},{value}\n"));
    }
    print!("{out}");
    Ok(())
}

fn count_forests(args: &CountArgs) -> Outcome {
    if args.n == 0 || args.m >= args.n {
        return Err(usage(format!("need 0 <= M < N, got N = {}, M = {}", args.n, args.m)));
    }
    let header = Header::new("count-forests", args, None);
    eprintln!("{}", header.comment());
    if args.asymptotic {
        let est = britikov_asymptotic(args.n, args.m, args.cutoff)?;
        eprintln!("# regime={:?} omega={}", est.regime, est.omega);
        if let Some((regime, value)) = est.overlap {
            eprintln!("# overlap regime={regime:?} log_estimate={value}");
        }
        println!("{}", est.log_estimate);
    } else {
        println!("{}", count_forests_exact(args.n, args.m));
    }
    Ok(())
}

fn sample_forest(args: &SampleArgs) -> Outcome {
    if args.n == 0 || args.m >= args.n || args.count == 0 {
        return Err(usage("need 0 <= M < N and --count >= 1"));
    }
    let header = Header::new("sample-forest", args, Some(args.seed));
    let sampler = ForestSampler::new(args.n, args.m)?;
    let mut rng = master_rng(args.seed);
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "{}", header.comment())?;
    for i in 0..args.count {
        if i > 0 {
            writeln!(out, "---")?;
        }
        write!(out, "{}", sampler.sample(&mut rng).to_edge_list())?;
    }
    Ok(())
}

fn experiment(args: &ExperimentArgs) -> Outcome {
    if !EXPERIMENTS.contains(&args.name.as_str()) {
        return Err(usage(format!(
            "unknown experiment `{}`; known: {}",
            args.name,
            EXPERIMENTS.join(", ")
        )));
    }
    let config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            let value: toml::Value = toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            serde_json::to_value(value).map_err(|e| usage(e.to_string()))?
        }
        None => serde_json::json!({}),
    };
    fs::create_dir_all(&args.out)?;
    info!("running experiment {} with seed {}", args.name, args.seed);
    let report = run_named(&args.name, config, args.seed)?;
    let header = Header::new("experiment", &report.config, Some(args.seed));
    write_report(&args.out, &args.name, &header, &report)?;
    print!("{}", report.summary());
    if report.verdict {
        Ok(())
    } else {
        Err(Failure::Acceptance(format!("experiment {} failed", args.name)))
    }
}

fn write_report(
    dir: &Path,
    name: &str,
    header: &Header,
    report: &frozen_er::stats_harness::ExperimentReport,
) -> Outcome {
    let json = serde_json::json!({ "header": header, "report": report });
    let json_path = dir.join(format!("{name}.json"));
    fs::write(
        &json_path,
        serde_json::to_string_pretty(&json).expect("report serializes"),
    )?;
    let csv_path = dir.join(format!("{name}.csv"));
    fs::write(&csv_path, format!("{}\n{}", header.comment(), report.replicas_csv()))?;
    info!("wrote {} and {}", json_path.display(), csv_path.display());
    Ok(())
}

fn verify(args: &VerifyArgs) -> Outcome {
    let level = if args.quick { Level::Quick } else { Level::Full };
    let header = Header::new("verify", &level, Some(args.seed));
    println!("{}", header.comment());
    let outcomes = run_suite(level, args.seed, |o| {
        println!("{}", o.line());
        for d in &o.details {
            println!("    {d}");
        }
    });
    let failed: Vec<u8> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    println!(
        "{} of {} criteria passed",
        outcomes.len() - failed.len(),
        outcomes.len()
    );
    if outcomes.iter().any(|o| o.numerical_failure) {
        return Err(Failure::Numerical(format!("numerical failure in criteria {failed:?}")));
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Acceptance(format!("failing criteria: {failed:?}")))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    let outcome = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fluid(a) => fluid(a),
        Command::CountForests(a) => count_forests(a),
        Command::SampleForest(a) => sample_forest(a),
        Command::Experiment(a) => experiment(a),
        Command::Verify(a) => verify(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(EXIT_NUMERICAL)
        }
        Err(Failure::Acceptance(msg)) => {
            eprintln!("acceptance failure: {msg}");
            ExitCode::from(EXIT_ACCEPTANCE)
        }
    }
}

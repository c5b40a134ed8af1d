//! `sidw`: runs one experiment per process and writes CSV tables, the resolved config and
//! a manifest into the output directory.
//!
//! Exit codes: 0 success, 1 I/O, 2 invalid config or usage, 3 horizon violation,
//! 4 numerical failure. Failures print one `sidw: exit=N kind=K reason="..."` line to stderr.

mod config;
mod error;
mod experiments;
mod output;

use clap::{Args, Parser, Subcommand};
use config::{override_table, Experiment, ExperimentConfig};
use error::CliError;
use output::Manifest;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Parser, Debug)]
#[command(name = "sidw", version, about = "Scale-invariant damped wave and Klein-Gordon experiments")]
struct Cli {
    /// Worker threads for intra-experiment parallelism (default: available cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Bessel J/Y values and Wronskian defects over an order/argument sweep.
    BesselCheck(RunArgs),
    /// Mode kernels against the ODE oracle, bound ratios and the cocycle identity.
    KernelCheck(RunArgs),
    /// Linear Klein-Gordon scattering error and its decay order.
    Scatter(RunArgs),
    /// Scattering error for the damped unknown, mapped back from Klein-Gordon.
    DwScatter(RunArgs),
    /// Energy-critical nonlinear Klein-Gordon run in three dimensions.
    Nlkg(RunArgs),
    /// L² growth of the linear solution.
    Growth(RunArgs),
    /// Run the experiment named in the `--config` file.
    Run(RunArgs),
    /// Print the full default config of an experiment.
    PrintDefaults { experiment: Experiment },
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// TOML config layered over the experiment defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any config entry, e.g. `--set grid.n=1024` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Print the resolved config and exit.
    #[arg(long)]
    print_defaults: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mu1: Option<f64>,
    #[arg(long)]
    mu2: Option<f64>,
    /// Effective mass, in place of `--mu2`.
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    half_width: Option<f64>,
    /// gaussian | bump | multiscale | plane_wave
    #[arg(long)]
    preset: Option<String>,
    /// position | velocity | growing
    #[arg(long)]
    component: Option<String>,
    #[arg(long)]
    t_min: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    /// +1 or -1
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    /// none | double
    #[arg(long)]
    padding: Option<String>,
}

impl RunArgs {
    /// Typed flags as `key=value` overrides, applied after `--set`.
    fn flag_overrides(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut push = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                out.push(format!("{key}={v}"));
            }
        };
        let float = |x: Option<f64>| x.map(|x| format!("{x:?}"));
        let int = |x: Option<usize>| x.map(|x| x.to_string());
        let text = |x: &Option<String>| x.as_ref().map(|s| format!("{s:?}"));
        push("seed", self.seed.map(|s| s.to_string()));
        push("output_dir", self.out.as_ref().map(|p| format!("{:?}", p.display().to_string())));
        push("coefficients.mu1", float(self.mu1));
        push("coefficients.mu2", float(self.mu2));
        push("coefficients.mu", float(self.mu));
        push("grid.d", int(self.dim));
        push("grid.n", int(self.n));
        push("grid.half_width", float(self.half_width));
        push("data.preset", text(&self.preset));
        push("data.component", text(&self.component));
        push("schedule.t_min", float(self.t_min));
        push("schedule.t_max", float(self.t_max));
        push("schedule.samples", int(self.samples));
        push("nonlinear.lambda", text(&self.lambda));
        push("nonlinear.epsilon", float(self.epsilon));
        push("nonlinear.dt", float(self.dt));
        push("nonlinear.padding", text(&self.padding));
        out
    }
}

fn read_table(path: &PathBuf) -> Result<toml::Table, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    text.parse::<toml::Table>().map_err(|e| CliError::Config(format!("{}: {}", path.display(), config::one_line(&e.to_string()))))
}

fn resolve(experiment: Option<Experiment>, file: Option<&PathBuf>, args: &RunArgs) -> Result<ExperimentConfig, CliError> {
    let file_table = file.map(read_table).transpose()?;
    let experiment = match (experiment, &file_table) {
        (Some(e), _) => e,
        (None, Some(t)) => {
            let name = t.get("experiment").and_then(|v| v.as_str()).ok_or_else(|| {
                CliError::Config("config file has no experiment entry".into())
            })?;
            parse_experiment(name)?
        }
        (None, None) => return Err(CliError::Config("no experiment given".into())),
    };
    let mut cfg = ExperimentConfig::defaults(experiment);
    if let Some(mut t) = file_table {
        if let Some(name) = t.remove("experiment") {
            let named = parse_experiment(name.as_str().unwrap_or_default())?;
            if named != experiment {
                return Err(CliError::Config(format!(
                    "config file is for '{}', not '{}'",
                    named.name(),
                    experiment.name()
                )));
            }
        }
        cfg = cfg.merged(&t)?;
    }
    for s in args.sets.iter().chain(&args.flag_overrides()) {
        cfg = cfg.merged(&override_table(s)?)?;
    }
    if cfg.experiment != experiment {
        return Err(CliError::Config("the experiment cannot be overridden".into()));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_experiment(name: &str) -> Result<Experiment, CliError> {
    <Experiment as clap::ValueEnum>::from_str(name, false)
        .map_err(|_| CliError::Config(format!("unknown experiment '{name}'")))
}

fn execute(cfg: &ExperimentConfig, workers: usize) -> Result<(), CliError> {
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml())?;
    let start = Instant::now();
    let result = experiments::run(cfg, dir);
    let (exit_code, status, mut outputs) = match &result {
        Ok(files) => (0, "ok".to_string(), files.clone()),
        Err(e) => (e.exit_code(), e.status_line(), Vec::new()),
    };
    outputs.insert(0, "config.toml".into());
    Manifest {
        experiment: cfg.experiment.name().into(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        sidw_cli_version: env!("CARGO_PKG_VERSION").into(),
        sidw_core_version: sidw_core::VERSION.into(),
        workers,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        exit_code,
        status,
        outputs,
    }
    .write(dir)?;
    result.map(|_| ())
}

fn main_inner() -> Result<(), CliError> {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                std::process::exit(if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand { 2 } else { 0 });
            }
            let text = e.render().to_string();
            let first = text.lines().next().unwrap_or("usage error").trim_start_matches("error: ").to_string();
            let reason = if e.kind() == ErrorKind::InvalidSubcommand {
                format!("unknown experiment: {first}")
            } else {
                first
            };
            return Err(CliError::Config(reason));
        }
    };
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(w).build_global().map_err(|e| CliError::Config(e.to_string()))?;
    }
    let workers = rayon::current_num_threads();
    let (experiment, file, args) = match &cli.command {
        Command::PrintDefaults { experiment } => {
            print!("{}", ExperimentConfig::defaults(*experiment).to_toml());
            return Ok(());
        }
        Command::Run(a) => {
            let file = a.config.as_ref().ok_or_else(|| CliError::Config("run needs --config".into()))?;
            (None, Some(file), a)
        }
        Command::BesselCheck(a) => (Some(Experiment::BesselCheck), a.config.as_ref(), a),
        Command::KernelCheck(a) => (Some(Experiment::KernelCheck), a.config.as_ref(), a),
        Command::Scatter(a) => (Some(Experiment::Scatter), a.config.as_ref(), a),
        Command::DwScatter(a) => (Some(Experiment::DwScatter), a.config.as_ref(), a),
        Command::Nlkg(a) => (Some(Experiment::Nlkg), a.config.as_ref(), a),
        Command::Growth(a) => (Some(Experiment::Growth), a.config.as_ref(), a),
    };
    let cfg = resolve(experiment, file, args)?;
    if args.print_defaults {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    execute(&cfg, workers)
}

fn main() {
    if let Err(e) = main_inner() {
        eprintln!("{}", e.status_line());
        std::process::exit(e.exit_code());
    }
}

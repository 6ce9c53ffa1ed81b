//! Configuration-driven experiment runner.
//!
//! Exit codes: 0 when every check matches its expectation, 2 when some do
//! not, 1 on configuration or I/O errors.

pub mod catalog;
pub mod config;
pub mod factory;
pub mod output;
pub mod runner;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

pub use config::ExperimentConfig;
pub use runner::{Command, RunReport};

/// Environment variable giving the default worker count.
pub const WORKERS_ENV: &str = "TAMED_EULER_WORKERS";

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(tamed_euler::Error),
    Io(std::io::Error),
    Schema(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
            CliError::Schema(m) => write!(f, "report does not match its schema: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<tamed_euler::Error> for CliError {
    fn from(e: tamed_euler::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

#[derive(Parser, Debug)]
#[command(name = "tamed-euler", version, about = "Tamed, projected and noise-truncated Euler experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Override the configured master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for report, trace and plot files.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Also write a gnuplot script next to the CSV.
    #[arg(long, global = true)]
    emit_gnuplot: bool,
    /// Worker threads; defaults to $TAMED_EULER_WORKERS, then all cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run every configured experiment and check.
    Run { config: String },
    /// Print the packaged configurations.
    ListExamples,
    /// Evaluate derived thresholds and sampled hypotheses without simulating.
    CheckConditions { config: String },
    /// Run only the strong-error study.
    StrongRate { config: String },
    /// Run only the comparison study.
    Compare { config: String },
}

/// A file path, or a catalog name with an optional `examples/` prefix.
pub fn load_config(arg: &str) -> Result<ExperimentConfig, CliError> {
    let path = Path::new(arg);
    if path.is_file() {
        return ExperimentConfig::from_toml(&std::fs::read_to_string(path)?);
    }
    let name = arg.strip_prefix("examples/").unwrap_or(arg);
    let name = name.strip_suffix(".toml").unwrap_or(name);
    match catalog::find(name) {
        Some(e) => e.config(),
        None => Err(CliError::Config(format!(
            "{arg} is neither a file nor a packaged example (see list-examples)"
        ))),
    }
}

#[derive(Debug, Clone, Default)]
pub struct Options {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

/// Applies overrides and runs `command` on a pool of the requested size.
pub fn execute(mut cfg: ExperimentConfig, command: Command, opts: &Options) -> Result<RunReport, CliError> {
    if let Some(s) = opts.seed {
        cfg.ensemble.seed = s;
    }
    cfg.validate()?;
    let digest = output::config_digest(&cfg);
    let workers = match opts.workers {
        Some(n) => Some(n),
        None => match std::env::var(WORKERS_ENV) {
            Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| {
                CliError::Config(format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))
            })?),
            Err(_) => None,
        },
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        if n == 0 {
            return Err(CliError::Config("worker count must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| runner::execute(&cfg, command, digest))
}

pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (command, arg) = match &cli.cmd {
        Cmd::ListExamples => {
            for e in catalog::CATALOG {
                match e.config() {
                    Ok(c) => println!("{:<32} {}", e.name, c.description),
                    Err(err) => println!("{:<32} invalid: {err}", e.name),
                }
            }
            return 0;
        }
        Cmd::Run { config } => (Command::Run, config),
        Cmd::CheckConditions { config } => (Command::CheckConditions, config),
        Cmd::StrongRate { config } => (Command::StrongRate, config),
        Cmd::Compare { config } => (Command::Compare, config),
    };
    match run_to_disk(arg, command, &cli) {
        Ok(report) => {
            let met = report.verdicts.iter().filter(|v| v.met).count();
            println!(
                "{}: {} ({met}/{} checks as expected)",
                report.name,
                if report.pass { "PASS" } else { "FAIL" },
                report.verdicts.len()
            );
            if report.pass {
                0
            } else {
                2
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn run_to_disk(arg: &str, command: Command, cli: &Cli) -> Result<RunReport, CliError> {
    let cfg = load_config(arg)?;
    let out_dir = cli
        .out_dir
        .clone()
        .or_else(|| cfg.output.dir.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let gnuplot = cli.emit_gnuplot || cfg.output.gnuplot;
    let report = execute(
        cfg,
        command,
        &Options {
            seed: cli.seed,
            workers: cli.workers,
        },
    )?;
    for p in output::write_artifacts(&report, &out_dir, gnuplot)? {
        println!("wrote {}", p.display());
    }
    Ok(report)
}

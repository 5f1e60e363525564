use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::LevelFilter;

use fedmesh_core::experiment::{self, RunOutcome};
use fedmesh_core::oracle;
use fedmesh_core::report::{self, Format};
use fedmesh_core::scenario::{self, LoadError};
use fedmesh_core::{FederationError, Model, Scenario};

const EXIT_INVALID: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_INTERNAL: u8 = 4;
const EXIT_STRANDED: u8 = 5;

#[derive(Parser)]
#[command(name = "fedmesh", version, about = "Peer-to-peer cloud federation simulator")]
struct Cli {
    /// Log verbosity.
    #[arg(long, global = true, value_enum, default_value_t = LogLevel::Warn)]
    log_level: LogLevel,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum LogLevel {
    Error,
    Warn,
    Info,
    Trace,
}

impl From<LogLevel> for LevelFilter {
    fn from(l: LogLevel) -> Self {
        match l {
            LogLevel::Error => LevelFilter::Error,
            LogLevel::Warn => LevelFilter::Warn,
            LogLevel::Info => LevelFilter::Info,
            LogLevel::Trace => LevelFilter::Trace,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

impl From<OutFormat> for Format {
    fn from(f: OutFormat) -> Self {
        match f {
            OutFormat::Csv => Format::Csv,
            OutFormat::Json => Format::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Task,
    Thread,
}

impl From<ModelArg> for Model {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Task => Model::Task,
            ModelArg::Thread => Model::Thread,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file and report every problem found.
    Validate { file: PathBuf },
    /// Run a scenario to completion and write its result tables.
    Run {
        file: PathBuf,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long, env = "FEDMESH_OUT", default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = OutFormat::Csv)]
        format: OutFormat,
    },
    /// Run the 5x5 to 13x13 granularity sweep and write response times.
    Sweep {
        file: PathBuf,
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "FEDMESH_OUT", default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = OutFormat::Csv)]
        format: OutFormat,
    },
    /// Compare the distributed algorithms with brute-force references.
    Oracle {
        /// Rendezvous pairs per dimensionality; allocation and routing use a tenth.
        #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
        trials: u64,
        /// Restrict the rendezvous suite to one dimensionality.
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=8))]
        dims: Option<u8>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

fn load(path: &Path) -> Result<Scenario, Failure> {
    scenario::load(path).map_err(|e| match &e {
        LoadError::Io(_) => Failure::new(EXIT_IO, format!("{}: {e}", path.display())),
        LoadError::Invalid(_) => Failure::new(EXIT_INVALID, format!("{}: {e}", path.display())),
    })
}

fn sim_failure(e: FederationError) -> Failure {
    match e.root() {
        FederationError::Stranded(ids) => {
            let mut msg = format!("{} claim(s) can never be served:", ids.len());
            for id in ids {
                msg.push_str("\n  ");
                msg.push_str(&id.0);
            }
            Failure::new(EXIT_STRANDED, msg)
        }
        _ => Failure::new(EXIT_INTERNAL, format!("simulation failed: {e}")),
    }
}

fn io_failure(dir: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::new(EXIT_IO, format!("cannot write results to {}: {e}", dir.display()))
}

fn check(outcome: &RunOutcome) -> Result<(), Failure> {
    outcome
        .check_exactly_once()
        .map_err(|e| Failure::new(EXIT_INTERNAL, format!("exactly-once violation: {e}")))
}

fn validate(file: &Path) -> Result<(), Failure> {
    let s = load(file)?;
    println!(
        "{}: ok ({} clouds, {} workloads, {} cells)",
        file.display(),
        s.clouds.len(),
        s.workloads.len(),
        s.space.cell_count().unwrap_or(0)
    );
    Ok(())
}

fn run(file: &Path, seed: Option<u64>, out: &Path, format: Format) -> Result<(), Failure> {
    let mut s = load(file)?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    let outcome = experiment::run(&s).map_err(sim_failure)?;
    check(&outcome)?;
    let files = report::write_run(out, &outcome, format).map_err(io_failure(out))?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn sweep(file: &Path, model: Model, seed: Option<u64>, out: &Path, format: Format) -> Result<(), Failure> {
    let mut s = load(file)?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    let points = experiment::sweep(&s, model).map_err(sim_failure)?;
    for p in &points {
        check(&p.outcome)?;
    }
    let files = report::write_sweep(out, &points, model, format).map_err(io_failure(out))?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn run_oracle(trials: u64, dims: Option<u8>, seed: u64) -> Result<(), Failure> {
    let reports = oracle::run_all(trials, dims.map(usize::from), seed);
    let mut failed = 0;
    for r in &reports {
        println!(
            "{:<24} {:>8} checks {:>8} exercised {:>4} failures  {}",
            r.name,
            r.checks,
            r.exercised,
            r.failures,
            if r.passed() { "PASS" } else { "FAIL" }
        );
        if let Some(f) = &r.first_failure {
            println!("  first failure: {f}");
            failed += 1;
        }
    }
    if failed > 0 {
        return Err(Failure::new(EXIT_INTERNAL, format!("{failed} suite(s) failed")));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(cli.log_level.into())
        .format_timestamp(None)
        .init();

    let result = match cli.command {
        Command::Validate { file } => validate(&file),
        Command::Run {
            file,
            seed,
            out,
            format,
        } => run(&file, seed, &out, format.into()),
        Command::Sweep {
            file,
            model,
            seed,
            out,
            format,
        } => sweep(&file, model.into(), seed, &out, format.into()),
        Command::Oracle { trials, dims, seed } => run_oracle(trials, dims, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

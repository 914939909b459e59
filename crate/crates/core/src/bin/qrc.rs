use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use qrc::experiments::{
    run_interpolation, run_mackey_glass, run_measure_stats, run_open_loop, run_scan, run_spectra, task_input,
    ExperimentConfig, Format, Report, Task,
};
use qrc::tasks::TimeSeries;
use qrc::{QrcError, Result};

#[derive(Parser, Debug)]
#[command(name = "qrc", version, about = "Quantum reservoir computing experiments")]
struct Cli {
    /// TOML config layered over the subcommand's defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; all component seeds are derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (stdout when omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = OutFormat::Json)]
    format: OutFormat,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Include wall time in the report.
    #[arg(long, global = true)]
    timing: bool,
    /// Print the effective config as TOML and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Pooled eigenvalues of random observables per dimension and density.
    Spectra,
    /// Expectation values of random observables on reduced random states.
    MeasureStats,
    /// Open-loop cosine prediction.
    Cosine,
    /// Coupling x state size x horizon scan on the cosine task.
    Scan,
    /// Shuffled-split interpolation with spline baselines.
    Interpolate,
    /// Open-loop Mackey-Glass prediction.
    MackeyGlass,
    /// Write a benchmark signal.
    GenData {
        #[arg(long, value_enum, default_value_t = Series::RandomWalk)]
        series: Series,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OutFormat {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Series {
    Cosine,
    MackeyGlass,
    RandomWalk,
}

fn task_of(command: &Command) -> Task {
    match command {
        Command::Spectra => Task::Spectra,
        Command::MeasureStats => Task::MeasureStats,
        Command::Cosine => Task::Cosine,
        Command::Scan => Task::Scan,
        Command::Interpolate => Task::Interpolation,
        Command::MackeyGlass => Task::MackeyGlass,
        Command::GenData { series } => match series {
            Series::Cosine => Task::Cosine,
            Series::MackeyGlass => Task::MackeyGlass,
            Series::RandomWalk => Task::Interpolation,
        },
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let task = task_of(&cli.command);
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path, task)?,
        None => ExperimentConfig::for_task(task),
    };
    // The subcommand decides what runs.
    cfg.task = task;
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.timing {
        cfg.record_timing = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| QrcError::Argument(format!("cannot start {n} threads: {e}")))?;
    }
    let cfg = load_config(cli)?;
    if cli.print_config {
        print!("{}", cfg.to_toml_string()?);
        return Ok(());
    }
    let report = match &cli.command {
        Command::Spectra => Report::Spectra(run_spectra(&cfg)?),
        Command::MeasureStats => Report::MeasureStats(run_measure_stats(&cfg)?),
        Command::Cosine => Report::Run(run_open_loop(&cfg)?),
        Command::MackeyGlass => Report::Run(run_mackey_glass(&cfg)?),
        Command::Scan => Report::Scan(run_scan(&cfg)?),
        Command::Interpolate => Report::Interpolation(run_interpolation(&cfg)?),
        Command::GenData { .. } => {
            let cfg = cfg.resolved();
            let values = task_input(&cfg)?;
            let series = match cfg.task {
                Task::Cosine => cfg.cosine.series(cfg.chain.sample_dt)?,
                Task::MackeyGlass => {
                    let raw = cfg.mackey_glass.series()?;
                    TimeSeries::new(raw.times, values)?
                }
                _ => cfg.interpolation.series()?,
            };
            Report::Series(series)
        }
    };
    let format = match cli.format {
        OutFormat::Json => Format::Json,
        OutFormat::Csv => Format::Csv,
    };
    match &cli.out {
        Some(path) => qrc::experiments::emit_report(&report, path, format),
        None => {
            print!("{}", report.render(format)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!(
                "{}",
                serde_json::json!({ "error": e.category(), "message": e.to_string() })
            );
            ExitCode::FAILURE
        }
    }
}

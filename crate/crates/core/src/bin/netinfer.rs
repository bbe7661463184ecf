use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use netinfer::experiment::{
    collect_report, default_fractions, run, simulate_to_disk, sweep_csv, sweep_missing, write_run, ExperimentConfig,
};
use netinfer::sim::load_dataset;
use netinfer::Error;

/// Network reconstruction and completion from node time series.
#[derive(Debug, Parser)]
#[command(name = "netinfer", version)]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config field, e.g. `--set train.epochs=10` (repeatable).
    #[arg(long = "set", value_name = "K=V", global = true)]
    set: Vec<String>,
    /// Output directory; defaults to the config's `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Replicates per sweep fraction.
    #[arg(long, default_value_t = 3, global = true)]
    seeds: u64,
    /// Use full-scale sample counts instead of the desk-scale defaults.
    #[arg(long, global = true)]
    paper_scale: bool,
    /// Sample discrete evaluation states instead of taking the argmax.
    #[arg(long, global = true)]
    stochastic_states: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the graph and dataset.
    Simulate,
    /// Train on a simulated dataset and write metrics.
    Train,
    /// Completion runs over a range of missing-node fractions.
    SweepMissing {
        /// Comma-separated fractions (default 0.1,...,0.7).
        #[arg(long, value_delimiter = ',')]
        fractions: Option<Vec<f64>>,
    },
    /// Tabulate metrics of finished runs.
    Report { runs: Vec<PathBuf> },
}

enum Failure {
    Config(Error),
    Missing(Error),
    Runtime(Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Missing(_) => 3,
            Failure::Runtime(_) => 4,
        }
    }

    fn error(&self) -> &Error {
        match self {
            Failure::Config(e) | Failure::Missing(e) | Failure::Runtime(e) => e,
        }
    }
}

fn runtime(e: Error) -> Failure {
    match e {
        Error::MissingInput(_) => Failure::Missing(e),
        e => Failure::Runtime(e),
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Config(Error::Config {
            field: "--config".into(),
            detail: "required for this command".into(),
        }))?;
    let mut cfg = ExperimentConfig::load(path, &cli.set).map_err(|e| match e {
        Error::MissingInput(_) => Failure::Missing(e),
        e => Failure::Config(e),
    })?;
    if cli.paper_scale {
        cfg.paper_scale();
    }
    if cli.stochastic_states {
        cfg.stochastic_states = true;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate().map_err(Failure::Config)?;
    Ok(cfg)
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Failure::Runtime(Error::Io { path: parent.into(), source: e }))?;
    }
    fs::write(path, text).map_err(|e| Failure::Runtime(Error::Io { path: path.into(), source: e }))
}

fn threads() -> usize {
    std::env::var("NETINFER_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&t: &usize| t > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Simulate => {
            let cfg = load_config(cli)?;
            let ds = simulate_to_disk(&cfg, &cfg.output_dir).map_err(runtime)?;
            let s = &ds.split;
            println!(
                "{} {} nodes: {} samples (train {}, val {}, test {}) -> {}",
                ds.dynamics().name(),
                ds.n(),
                ds.sample_count(),
                s.train.len(),
                s.val.len(),
                s.test.len(),
                cfg.dataset_dir().display()
            );
        }
        Command::Train => {
            let cfg = load_config(cli)?;
            let dir = cfg.dataset_dir();
            if !dir.join("meta.json").exists() {
                return Err(Failure::Missing(Error::MissingInput(dir)));
            }
            let ds = load_dataset(&dir).map_err(runtime)?;
            let outcome = run(&cfg, &ds).map_err(runtime)?;
            write_run(&cfg.output_dir, &cfg, &outcome).map_err(runtime)?;
            println!("{}", serde_json::to_string_pretty(&outcome.report).expect("report serializes"));
        }
        Command::SweepMissing { fractions } => {
            let cfg = load_config(cli)?;
            let fractions = fractions.clone().unwrap_or_else(default_fractions);
            let out = cfg.output_dir.clone();
            let rows = sweep_missing(&cfg, &fractions, cli.seeds, threads(), Some(&out)).map_err(|e| match e {
                Error::Config { .. } => Failure::Config(e),
                e => runtime(e),
            })?;
            let csv = sweep_csv(&rows);
            write_text(&out.join("sweep.csv"), &csv)?;
            print!("{csv}");
        }
        Command::Report { runs } => {
            let report = collect_report(runs);
            print!("{}", report.table());
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
            let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
            write_text(&out.join("report.json"), &json)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.error());
            ExitCode::from(f.code())
        }
    }
}

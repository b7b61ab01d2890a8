//! `npde` — batch experiment runner.
//!
//! One experiment per invocation; outputs are a `result.csv` metrics table,
//! a `config.echo` that reproduces the run byte for byte, plus
//! experiment-specific artifacts. Exit codes: 2 config parse error,
//! 3 validation error, 4 numerical/runtime failure.

mod config;
mod experiments;
mod io;

use clap::{Parser, Subcommand};
use config::ExperimentConfig;
use io::CsvTable;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "npde", about = "Coefficient-control experiments", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a TOML config.
    Run {
        /// Path to the experiment configuration.
        config: PathBuf,
        /// Output directory (created if missing).
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for per-sample parallelism (0 = automatic).
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Print a summary of a binary field container.
    Inspect {
        /// Path to a .npde container.
        file: PathBuf,
    },
}

const EXIT_PARSE: u8 = 2;
const EXIT_VALIDATION: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, seed, threads } => run(config, out, seed, threads),
        Command::Inspect { file } => match io::describe(&file) {
            Ok(summary) => {
                println!("{summary}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_NUMERICAL)
            }
        },
    }
}

fn run(config_path: PathBuf, out: PathBuf, seed: Option<u64>, threads: usize) -> ExitCode {
    let text = match std::fs::read_to_string(&config_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", config_path.display());
            return ExitCode::from(EXIT_PARSE);
        }
    };
    let mut cfg = match ExperimentConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: config parse failed: {e}");
            return ExitCode::from(EXIT_PARSE);
        }
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Err(e) = cfg.validate() {
        eprintln!("error: config validation failed: {e}");
        return ExitCode::from(EXIT_VALIDATION);
    }
    if threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("warning: thread pool already configured: {e}");
        }
    }

    let started = std::time::Instant::now();
    let bundle = match experiments::run_experiment(&cfg, &out) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: numerical-failure: {e}");
            return ExitCode::from(EXIT_NUMERICAL);
        }
    };
    let elapsed = started.elapsed().as_secs_f64();

    // config echo first: reruns must reproduce result.csv byte for byte
    if let Err(e) = std::fs::write(out.join("config.echo"), cfg.echo()) {
        eprintln!("error: writing config.echo: {e}");
        return ExitCode::from(EXIT_NUMERICAL);
    }
    let mut table = CsvTable::new("key,value");
    for (k, v) in &bundle.metrics {
        table.row(format!("{k},{v}"));
    }
    for a in &bundle.artifacts {
        table.row(format!("artifact,{a}"));
    }
    table.row("artifact,config.echo".into());
    if let Err(e) = table.write(&out.join("result.csv")) {
        eprintln!("error: writing result.csv: {e}");
        return ExitCode::from(EXIT_NUMERICAL);
    }
    // wall clock stays outside result.csv so reruns stay byte-identical
    eprintln!(
        "done: {} metrics, {} artifact(s), {elapsed:.2}s",
        bundle.metrics.len(),
        bundle.artifacts.len()
    );
    ExitCode::SUCCESS
}

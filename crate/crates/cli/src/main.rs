use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cfnn_cli::runner::RunError;
use cfnn_cli::{dry_run, run, ExperimentConfig, ProtocolId};

#[derive(Parser)]
#[command(
    name = "cfnn",
    version,
    about = "Continued fraction network experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Output directory, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated seeds, overriding the config.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Protocol id, overriding the config.
        #[arg(long)]
        protocol: Option<String>,
        /// Validate and list the runs without training.
        #[arg(long)]
        dry_run: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = std::env::var("CFNN_LOG").unwrap_or_else(|_| "info".into());
    log::set_max_level(level.parse().unwrap_or(log::LevelFilter::Info));
    log::set_logger(&LOGGER).ok();
    let Command::Run {
        config,
        out,
        seeds,
        protocol,
        dry_run: dry,
    } = cli.command;
    match execute(&config, out, seeds, protocol, dry) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::FAILURE
        }
    }
}

fn execute(
    path: &std::path::Path,
    out: Option<PathBuf>,
    seeds: Option<Vec<u64>>,
    protocol: Option<String>,
    dry: bool,
) -> Result<(), RunError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(out) = out {
        cfg.output_dir = out;
    }
    if let Some(seeds) = seeds {
        cfg.seeds = seeds;
    }
    if let Some(p) = protocol {
        cfg.protocol = p.parse::<ProtocolId>()?;
    }
    if dry {
        let cells = dry_run(&cfg)?;
        for c in &cells {
            println!(
                "{}\t{}\tparams={}\tepochs={}\tseed={}",
                c.id,
                c.model.family,
                cfnn::models::param_count(&c.model).map_err(RunError::from)?,
                c.train.epochs,
                c.seed
            );
        }
        println!("{} runs", cells.len());
        return Ok(());
    }
    let output = run(&cfg)?;
    println!("{}", output.dir.join("summary.json").display());
    Ok(())
}

/// Minimal stderr logger.
struct Stderr;

static LOGGER: Stderr = Stderr;

impl log::Log for Stderr {
    fn enabled(&self, m: &log::Metadata) -> bool {
        m.level() <= log::max_level()
    }

    fn log(&self, r: &log::Record) {
        if self.enabled(r.metadata()) {
            eprintln!("[{}] {}", r.level(), r.args());
        }
    }

    fn flush(&self) {}
}

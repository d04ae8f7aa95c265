use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gmfilter_cli::{demo_sample, run, CliError, Format, RunConfig, Task};

#[derive(Parser)]
#[command(name = "gmfilter", version, about = "Filtering of sequences with periodically stationary GM increments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Overrides the minimax and sampler seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true)]
    grid_size: Option<usize>,

    /// Factor truncation length `L`.
    #[arg(long, global = true)]
    truncation: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Expand the increment operator.
    Expand,
    /// Factorize the weighted observed and noise densities.
    Factorize,
    /// Optimal filter for the configured functional.
    Filter,
    /// Filter plus projection-oracle errors per observation window.
    Oracle,
    /// Least favorable densities and the minimax characteristic.
    Minimax,
    /// Every applicable section.
    Report,
    /// Seeded Gaussian sample of the observed increments (demonstration only).
    Sample {
        #[arg(long, default_value_t = 1000)]
        length: usize,
    },
}

fn load(cli: &Cli) -> Result<RunConfig, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config PATH is required".into()))?;
    let mut config = RunConfig::load(path)?;
    if let Some(n) = cli.grid_size {
        config.grid.size = n;
    }
    if let Some(l) = cli.truncation {
        config.truncation.l = l;
    }
    if let (Some(seed), Some(m)) = (cli.seed, config.minimax.as_mut()) {
        m.seed = seed;
    }
    if let Some(p) = &cli.output {
        config.output.path = Some(p.clone());
    }
    if let Some(f) = cli.format {
        config.output.format = f;
    }
    Ok(config)
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let mut config = load(cli)?;
    let text = match cli.command {
        Command::Sample { length } => {
            let table = demo_sample(&config, cli.seed.unwrap_or(0), length)?;
            match config.output.format {
                Format::Csv => table.to_csv()?,
                _ => serde_json::to_string_pretty(&table).map_err(|e| CliError::Output(e.to_string()))?,
            }
        }
        ref other => {
            config.task = Some(match other {
                Command::Expand => Task::Expand,
                Command::Factorize => Task::Factorize,
                Command::Filter => Task::Filter,
                Command::Oracle => Task::Oracle,
                Command::Minimax => Task::Minimax,
                Command::Report => Task::Report,
                Command::Sample { .. } => unreachable!(),
            });
            let report = run(&config)?;
            match config.output.format {
                Format::Json => report.to_json(),
                Format::Text => report.to_text(),
                Format::Csv => report.h_csv()?,
            }
        }
    };
    match &config.output.path {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Output(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use mpfc_lab::{parse_config, run, LabError};

/// Run a PFC/MPFC experiment described by a key=value config file.
#[derive(Parser)]
#[command(name = "mpfc-lab", version)]
struct Cli {
    /// Path to the configuration file.
    config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Overrides `seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Print nothing on success.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("mpfc-lab: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: &Cli) -> Result<bool, LabError> {
    let text = std::fs::read_to_string(&cli.config).map_err(|source| LabError::Io {
        path: cli.config.clone(),
        source,
    })?;
    let mut config = parse_config(&text)?;
    if let Some(dir) = &cli.output_dir {
        config.output_dir = dir.clone();
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let outcome = run(&config)?;
    if !cli.quiet || !outcome.passed() {
        print!("{}", outcome.summary(&config));
    }
    Ok(outcome.passed())
}

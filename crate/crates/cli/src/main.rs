use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use zps_core::config::{RunConfig, RunConfigFile};

mod commands;
mod error;

use error::CliError;

/// Seed used when neither `--seed` nor the config provides one.
const SEED_ENV: &str = "ZPS_SEED";

#[derive(Parser)]
#[command(
    name = "zps",
    version,
    about = "Zeeman-sublevel optical pumping with incoherent Raman transitions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Pump into |3,m> instead; moves the notch and carrier with it.
    #[arg(long, allow_hyphen_values = true)]
    target_m: Option<i32>,
    /// Output directory (defaults to the config's `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the noise spectrum.
    Synth(Common),
    /// Incoherent rate for every transition.
    Rates {
        #[command(flatten)]
        common: Common,
        /// Use a measured spectrum CSV instead of synthesizing one.
        #[arg(long)]
        spectrum: Option<PathBuf>,
    },
    /// Run the pump/repump protocol.
    Pump(Common),
    /// Simulate a Raman scan.
    Scan {
        #[command(flatten)]
        common: Common,
        /// Population state JSON (e.g. from `pump`); defaults to the config's initial state.
        #[arg(long)]
        state: Option<PathBuf>,
    },
    /// Fit a Raman scan for the Zeeman populations.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scan: PathBuf,
    },
    /// Compare the random-phase comb against the closed-form rate.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        spectrum: Option<PathBuf>,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Synth(c) | Command::Pump(c) => c,
            Command::Rates { common, .. }
            | Command::Scan { common, .. }
            | Command::Fit { common, .. }
            | Command::Oracle { common, .. } => common,
        }
    }
}

fn env_seed() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Seed(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(CliError::Seed(format!("{SEED_ENV}: {e}"))),
    }
}

fn load_config(common: &Common) -> Result<RunConfig, CliError> {
    let config_err = |source| CliError::Config {
        path: common.config.clone(),
        source,
    };
    let file = RunConfigFile::load(&common.config).map_err(config_err)?;
    let mut cfg = file.resolve().map_err(config_err)?;
    if let Some(m) = common.target_m {
        cfg.retarget(m).map_err(config_err)?;
    }
    cfg.seed = match common.seed.or(cfg.seed) {
        Some(s) => Some(s),
        None => env_seed()?,
    };
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli.command.common())?;
    let outcome = match &cli.command {
        Command::Synth(_) => commands::synth(&cfg)?,
        Command::Rates { spectrum, .. } => commands::rates(&cfg, spectrum.as_deref())?,
        Command::Pump(_) => commands::pump(&cfg)?,
        Command::Scan { state, .. } => commands::scan(&cfg, state.as_deref())?,
        Command::Fit { scan, .. } => commands::fit(&cfg, scan)?,
        Command::Oracle { spectrum, .. } => commands::oracle(&cfg, spectrum.as_deref())?,
    };
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    for path in commands::write_all(&cfg.output_dir, &outcome.files)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

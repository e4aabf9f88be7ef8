use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use regime_coupler::cli::{exit_code, resolve_seed, run_command, RunConfig, RunContext, SEED_ENV};
use regime_coupler::Error;

#[derive(Parser)]
#[command(name = "regime-coupler", version, about = "Coupling simulations for regime-switching diffusions with segment-dependent switching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML, or JSON by extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Simulate single hybrid paths.
    Simulate,
    /// Simulate coupled pairs and estimate the coupling-time tail.
    Couple,
    /// Closed-form ergodicity constants and bound tables.
    Bounds,
    /// Mean-field G function, drift condition and coupling bound.
    Meanfield,
    /// Run the invariant suites.
    Validate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Couple => "couple",
            Command::Bounds => "bounds",
            Command::Meanfield => "meanfield",
            Command::Validate => "validate",
        }
    }
}

fn run(cli: &Cli) -> Result<Option<String>, Error> {
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::parse("", None)?,
    };
    let env = std::env::var(SEED_ENV).ok();
    let seed = resolve_seed(cli.seed, config.seed, env.as_deref())?;
    let workers = cli.workers.or(config.workers).unwrap_or(0);
    let out = cli.out.clone().or(config.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let ctx = RunContext { config, seed, workers, out };
    let outcome = run_command(cli.command.name(), &ctx)?;
    for m in &outcome.messages {
        println!("{m}");
    }
    for (name, _) in &outcome.files {
        println!("wrote {}", ctx.out.join(name).display());
    }
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    Ok(outcome.failure)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = std::panic::catch_unwind(|| run(&cli));
    match result {
        Ok(Ok(None)) => ExitCode::SUCCESS,
        Ok(Ok(Some(failure))) => {
            eprintln!("check failed: {failure}");
            ExitCode::from(2)
        }
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
        Err(_) => {
            eprintln!("internal fault");
            ExitCode::from(3)
        }
    }
}

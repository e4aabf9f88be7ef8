//! Command-line front end: configuration, model registry and commands.

pub mod commands;
pub mod config;
pub mod models;

pub use commands::{run_command, Outcome, RunContext};
pub use config::RunConfig;

use crate::error::Error;

/// Environment variable consulted for the seed when neither the flag nor the
/// config sets one.
pub const SEED_ENV: &str = "REGIME_COUPLER_SEED";

/// 1 for configuration errors, 2 for numeric or assumption failures, 3 for
/// internal faults.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Validation(_) | Error::Io(_) => 1,
        Error::NumericOverflow(_)
        | Error::RateBoundExceeded { .. }
        | Error::DegenerateDirection(_)
        | Error::Domain(_)
        | Error::Quadrature(_)
        | Error::Assumption(_) => 2,
        Error::Shape(_) | Error::ModelFault { .. } => 3,
    }
}

/// Flag, then config, then environment, then 0.
pub fn resolve_seed(flag: Option<u64>, config: Option<u64>, env: Option<&str>) -> Result<u64, Error> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match env {
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV} = '{v}' is not an unsigned integer"))),
        None => Ok(0),
    }
}

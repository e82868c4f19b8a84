//! Scenario-driven batch runs of the bright/dark-mode library: config
//! ingestion, command dispatch and results bundles.

pub mod bundle;
pub mod config;
pub mod pipeline;
pub mod plot;

use std::fs;
use std::path::{Path, PathBuf};

use qpp_dbm::identities::{Tolerances, DEFAULT_PROBE_SEED};

use crate::bundle::Bundle;
use crate::pipeline::{Command, Run, RunError};

/// Prefix of the environment variables mirroring the command-line flags.
pub const ENV_PREFIX: &str = "QPP_DBM_";

/// Flags shared by every scenario command.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub tolerance_profile: Option<String>,
    pub seed: Option<u64>,
}

/// Loads, validates and runs one scenario command. Returns the bundle
/// directory on success.
pub fn run_command(command: Command, config_path: &Path, overrides: &Overrides) -> Result<PathBuf, RunError> {
    let text = fs::read_to_string(config_path).map_err(|e| RunError::config("--config", format!("{}: {e}", config_path.display())))?;
    let mut config = config::parse(&text).map_err(|d| RunError::Config(vec![d]))?;

    let profile = overrides.tolerance_profile.clone().unwrap_or_else(|| "reference".into());
    let tolerances = Tolerances::profile(&profile).ok_or_else(|| {
        RunError::config("--tolerance-profile", format!("unknown profile {profile:?}, expected one of {:?}", Tolerances::PROFILES))
    })?;
    let seed = overrides.seed.or(config.seed).unwrap_or(DEFAULT_PROBE_SEED);
    // the manifest embeds the effective settings so it can reproduce the run
    config.seed = Some(seed);
    if let Some(out) = &overrides.out {
        config.output.directory = out.display().to_string();
    }
    let scenario = config.resolve().map_err(RunError::Config)?;

    let dir = PathBuf::from(&config.output.directory);
    let bundle = Bundle::create(&dir, scenario.units, &scenario.formats)?;
    let mut run = Run::new(config, scenario, tolerances, profile, seed, bundle)?;
    run.execute(command)?;
    Ok(dir)
}

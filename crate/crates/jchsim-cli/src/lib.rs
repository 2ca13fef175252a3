//! Configuration-driven experiment runner for jchsim.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

use std::path::{Path, PathBuf};

pub use config::{Experiment, ExperimentConfig, Format};
pub use error::CliError;
pub use experiments::{execute, plan, RunFlags};

/// Loads, validates, runs and writes one experiment. Nothing is written
/// unless the run succeeds.
pub fn run_config(
    path: &Path,
    output_dir: &Path,
    format: Option<Format>,
    flags: RunFlags,
) -> Result<Vec<PathBuf>, CliError> {
    let config = ExperimentConfig::load(path)?;
    let plan = plan(&config, flags)?;
    log::info!("running {} via {}", config.experiment, config.experiment.operation());
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned());
    let artifact = execute(&plan, name)?;
    let stem = config.output.clone().unwrap_or_else(|| config.experiment.name().to_string());
    if stem.is_empty() || stem.contains(['/', '\\']) {
        return Err(CliError::Config(format!("output stem '{stem}' must be a plain file name")));
    }
    let format = format.or(config.format).unwrap_or_default();
    output::write_artifact(&artifact, output_dir, &stem, format)
}

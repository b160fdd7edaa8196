//! Config-file loading and flag overrides.
//!
//! The file is TOML: experiment keys at the top level (plus the nested
//! `[proxy]` table), CLI output options under `[output]`. Every key has
//! a default, so `fedmint run` works with no file at all. Precedence:
//! built-in defaults, then the file, then command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use fedmint_core::ExperimentConfig;
use serde::Deserialize;

use crate::{CliError, RunArgs};

/// The `[output]` section: where artifacts go and whether charts are
/// drawn. `--out` and `--no-charts` override it.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub charts: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            charts: true,
        }
    }
}

#[derive(Debug)]
pub struct ResolvedConfig {
    pub experiment: ExperimentConfig,
    pub output: OutputConfig,
    pub jobs: Option<usize>,
}

pub fn load(args: &RunArgs) -> Result<ResolvedConfig, CliError> {
    let (mut experiment, mut output) = match &args.config {
        Some(path) => parse_file(path)?,
        None => (ExperimentConfig::default(), OutputConfig::default()),
    };

    if let Some(seed) = args.seed {
        experiment.seed = seed;
    }
    if let Some(rounds) = args.rounds {
        experiment.rounds = rounds;
    }
    if let Some(reps) = args.reps {
        experiment.repetitions = reps;
    }
    if let Some(dir) = &args.out {
        output.dir = dir.clone();
    }
    if args.no_charts {
        output.charts = false;
    }

    experiment.validate().map_err(CliError::input)?;
    Ok(ResolvedConfig {
        experiment,
        output,
        jobs: args.jobs.map(|n| n as usize),
    })
}

fn parse_file(path: &Path) -> Result<(ExperimentConfig, OutputConfig), CliError> {
    let at = |err: &dyn std::fmt::Display| CliError::Input(format!("{}: {err}", path.display()));
    let text = fs::read_to_string(path).map_err(|err| at(&err))?;
    let mut table: toml::Table = text.parse().map_err(|err: toml::de::Error| at(&err))?;
    let output = match table.remove("output") {
        Some(section) => section
            .try_into()
            .map_err(|err: toml::de::Error| at(&format!("[output]: {err}")))?,
        None => OutputConfig::default(),
    };
    let experiment = toml::Value::Table(table)
        .try_into()
        .map_err(|err: toml::de::Error| at(&err))?;
    Ok((experiment, output))
}

//! Experiment driver behind the `bfpmg` binary.

pub mod commands;
pub mod config;

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

pub use commands::Report;
pub use config::ExperimentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    QuantError,
    MinWidth,
    Fmg,
    PrecEst,
    RecomputeTable,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::QuantError => "quant-error",
            Command::MinWidth => "min-width",
            Command::Fmg => "fmg",
            Command::PrecEst => "prec-est",
            Command::RecomputeTable => "recompute-table",
        }
    }

    pub fn run(self, cfg: &ExperimentConfig) -> Result<Report> {
        match self {
            Command::QuantError => commands::quant_error(cfg),
            Command::MinWidth => commands::min_width_cmd(cfg),
            Command::Fmg => commands::fmg(cfg),
            Command::PrecEst => commands::prec_est(cfg),
            Command::RecomputeTable => commands::recompute_table_cmd(cfg),
        }
    }
}

/// Writes `<dir>/<command>.csv`, or to stdout without a directory.
pub fn emit(command: Command, dir: Option<&Path>, report: &Report) -> Result<Option<PathBuf>> {
    match dir {
        None => {
            print!("{}", report.csv);
            Ok(None)
        }
        Some(dir) => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join(format!("{}.csv", command.name()));
            std::fs::write(&path, &report.csv).with_context(|| format!("writing {}", path.display()))?;
            Ok(Some(path))
        }
    }
}

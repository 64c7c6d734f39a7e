use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use bfpmg_cli::{emit, Command, ExperimentConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bfpmg", version, about = "Block floating point multigrid experiments")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Relative energy error of quantized eigenvectors.
    QuantError(Common),
    /// Staged minimal-width search with IR-V.
    MinWidth(Common),
    /// FMG errors per level for fixed and progressive schedules.
    Fmg(Common),
    /// Estimated precision schedules and the FMG errors they give.
    PrecEst(Common),
    /// Recompute-triggering kernel calls for several w_add caps.
    RecomputeTable(Common),
}

#[derive(Args)]
struct Common {
    /// Flat key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    pde: Option<String>,
    /// Polynomial degrees, comma separated.
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    dim: Option<String>,
    /// Level range `a..b` or a single level.
    #[arg(long)]
    levels: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    /// Output directory; CSV goes to stdout without it.
    #[arg(long)]
    out: Option<String>,
    /// Any other configuration key, as key=value.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn overrides(&self) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        for s in &self.set {
            let (k, v) = s.split_once('=').ok_or_else(|| anyhow::anyhow!("--set expects key=value, got {s:?}"))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        let named = [
            ("pde", &self.pde),
            ("p", &self.p),
            ("dim", &self.dim),
            ("levels", &self.levels),
            ("mode", &self.mode),
            ("out", &self.out),
        ];
        for (k, v) in named {
            if let Some(v) = v {
                out.push((k.to_string(), v.clone()));
            }
        }
        Ok(out)
    }
}

fn run(command: Command, common: &Common) -> Result<bool> {
    let cfg = ExperimentConfig::load(common.config.as_deref(), &common.overrides()?)?;
    let report = command.run(&cfg)?;
    if let Some(path) = emit(command, cfg.out.as_deref(), &report)? {
        eprintln!("wrote {}", path.display());
    }
    for v in &report.violations {
        eprintln!("check failed: {v}");
    }
    Ok(report.violations.is_empty())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (command, common) = match &cli.command {
        Sub::QuantError(c) => (Command::QuantError, c),
        Sub::MinWidth(c) => (Command::MinWidth, c),
        Sub::Fmg(c) => (Command::Fmg, c),
        Sub::PrecEst(c) => (Command::PrecEst, c),
        Sub::RecomputeTable(c) => (Command::RecomputeTable, c),
    };
    match run(command, common) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

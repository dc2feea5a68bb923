//! `diffsamp`: batch runner for sampled diffusion LMS experiments.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use diffsamp_core::{Error, ScenarioConfig};

#[derive(Parser, Debug)]
#[command(name = "diffsamp", version, about = "Sampled diffusion LMS experiments")]
struct Cli {
    /// Worker threads for Monte Carlo runs; defaults to all cores.
    #[arg(long, global = true, env = "DIFFSAMP_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Learning curves and steady states for one scenario.
    RunScenario(RunArgs),
    /// Steady state or spectral radius over a grid of sampling probabilities.
    SweepPzeta(SweepArgs),
    /// Expected multiplications per iteration.
    CostReport(CostArgs),
    /// Check a config without running it.
    ValidateConfig(Source),
}

#[derive(Args, Debug, Clone)]
#[group(required = true, multiple = false)]
pub struct Source {
    /// Scenario config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in scenario: scenario1 .. scenario4.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct Overrides {
    /// Replaces `master_seed` (and the seeds derived from it).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    realizations: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    overrides: Overrides,
    /// Comma list of sim, exact, approx, closed; or all, theory-only.
    #[arg(long, default_value = "all")]
    models: String,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Exit with status 3 when the exact model is not mean-square stable.
    #[arg(long)]
    require_stable: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SweepMode {
    SteadyState,
    Stability,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long, value_enum, default_value = "steady-state")]
    mode: SweepMode,
    #[arg(long, default_value = "0.1,0.25,0.5,0.75,1")]
    pzeta_grid: String,
    #[arg(long, default_value = "theory-only")]
    models: String,
    /// Writes sweep.csv here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with status 3 when any grid point is not mean-square stable.
    #[arg(long)]
    require_stable: bool,
}

#[derive(Args, Debug)]
pub struct CostArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, default_value = "1,0.5,0.1")]
    pzeta_grid: String,
    /// Writes cost.csv here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numerical(String),
    Unstable(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Numerical(_) => 2,
            Failure::Unstable(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Numerical(m) | Failure::Unstable(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NumericalFailure(_) => Failure::Numerical(e.to_string()),
            Error::NotStable { .. } => Failure::Unstable(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Config(format!("{e:#}"))
    }
}

impl Source {
    pub fn load(&self) -> Result<(ScenarioConfig, String), Failure> {
        match (&self.config, &self.preset) {
            (Some(path), _) => {
                let cfg = ScenarioConfig::load(path)?;
                let label = cfg.name.clone().unwrap_or_else(|| path.display().to_string());
                Ok((cfg, label))
            }
            (None, Some(name)) => ScenarioConfig::preset(name)
                .map(|cfg| (cfg, name.clone()))
                .ok_or_else(|| {
                    let known: Vec<_> = ScenarioConfig::preset_names().collect();
                    Failure::Config(format!("unknown preset {name:?}; known: {}", known.join(", ")))
                }),
            (None, None) => Err(Failure::Config("give --config or --preset".into())),
        }
    }
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ScenarioConfig) {
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
        }
        if let Some(r) = self.realizations {
            cfg.realizations = r;
        }
        if let Some(h) = self.horizon {
            cfg.horizon = h;
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::RunScenario(args) => commands::run_scenario(args, cli.workers),
        Command::SweepPzeta(args) => commands::sweep_pzeta(args, cli.workers),
        Command::CostReport(args) => commands::cost_report(args),
        Command::ValidateConfig(source) => commands::validate_config(source),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("diffsamp: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

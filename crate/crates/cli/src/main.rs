use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use triality_cli::commands::{self, Format, Report};
use triality_cli::config::{artifact_path, ExperimentConfig, PhaseGrid, StateSpec};
use triality_core::PreparationParams;

/// Simulated single-photon interferometry: visibility, distinguishability
/// and concurrence of path-polarization states.
#[derive(Parser, Debug)]
#[command(name = "triality", version)]
struct Cli {
    /// Base seed for all noise streams.
    #[arg(long, global = true, env = "TRIALITY_SEED")]
    seed: Option<u64>,
    /// Counts per fringe point and per tomography setting (0 = noiseless).
    #[arg(long, global = true)]
    exposure: Option<u64>,
    /// Prefix (or directory) for written artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// JSON experiment configuration; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct StateArgs {
    /// Amplitude ratio |c_b / c_a|.
    #[arg(long = "R", requires = "theta", conflicts_with = "target")]
    r: Option<f64>,
    /// Polarization angle of the path-b component, in [0, π/2].
    #[arg(long, requires = "r")]
    theta: Option<f64>,
    /// Relative phase in [0, 2π).
    #[arg(long, requires = "r", default_value_t = 0.0)]
    xi: f64,
    /// Named target: state-1 … state-7, center, wave, particle, entangled.
    #[arg(long)]
    target: Option<String>,
}

#[derive(Args, Debug, Default)]
struct GridArgs {
    #[arg(long)]
    start: Option<f64>,
    #[arg(long)]
    stop: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Prepared amplitudes, wave-plate settings and closed-form V, D, C.
    Prepare(#[command(flatten)] StateArgs),
    /// Fringe scan and fitted visibility.
    Fringe {
        #[command(flatten)]
        state: StateArgs,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Path-blocking counts and distinguishability.
    Block(#[command(flatten)] StateArgs),
    /// Closed-form and simulated V, D, C for one state.
    Metrics {
        #[command(flatten)]
        state: StateArgs,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Simulated tomography with a maximum-likelihood reconstruction.
    Tomo(#[command(flatten)] StateArgs),
    /// The seven grid-node states through the full measurement chain.
    Table1 {
        /// Monte Carlo repetitions per state (ignored when noiseless).
        #[arg(long, default_value_t = 20)]
        repeats: usize,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Quasi-uniform samples of the sphere octant with their settings.
    Sphere {
        #[arg(long, short = 'n', default_value_t = 100)]
        samples: usize,
    },
}

impl StateArgs {
    fn spec(&self) -> anyhow::Result<Option<StateSpec>> {
        if let Some(name) = &self.target {
            return Ok(Some(StateSpec::Named(name.clone())));
        }
        match (self.r, self.theta) {
            (Some(r), Some(theta)) => Ok(Some(StateSpec::Params(PreparationParams::new(r, theta, self.xi)?))),
            _ => Ok(None),
        }
    }
}

impl GridArgs {
    fn apply(&self, base: Option<PhaseGrid>) -> Option<PhaseGrid> {
        if self.start.is_none() && self.stop.is_none() && self.steps.is_none() {
            return base;
        }
        let g = base.unwrap_or_default();
        Some(PhaseGrid {
            start: self.start.unwrap_or(g.start),
            stop: self.stop.unwrap_or(g.stop),
            steps: self.steps.unwrap_or(g.steps),
        })
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    config.seed = cli.seed.or(config.seed);
    config.exposure = cli.exposure.or(config.exposure);
    config.output = cli.out.clone().or(config.output);

    let with_state = |config: &mut ExperimentConfig, state: &StateArgs| -> anyhow::Result<()> {
        if let Some(spec) = state.spec()? {
            config.params = Some(spec);
        }
        Ok(())
    };

    let format = cli.format;
    let report: Report = match &cli.command {
        Command::Prepare(state) => {
            with_state(&mut config, state)?;
            commands::prepare(&config, format)?
        }
        Command::Fringe { state, grid } => {
            with_state(&mut config, state)?;
            config.phase_grid = grid.apply(config.phase_grid);
            commands::fringe(&config, format)?
        }
        Command::Block(state) => {
            with_state(&mut config, state)?;
            commands::block(&config, format)?
        }
        Command::Metrics { state, grid } => {
            with_state(&mut config, state)?;
            config.phase_grid = grid.apply(config.phase_grid);
            commands::metrics(&config, format)?
        }
        Command::Tomo(state) => {
            with_state(&mut config, state)?;
            commands::tomo(&config, format)?
        }
        Command::Table1 { repeats, grid } => {
            config.phase_grid = grid.apply(config.phase_grid);
            commands::table1(&config, *repeats, format)?
        }
        Command::Sphere { samples } => commands::sphere(*samples, format)?,
    };

    if let Some(prefix) = &config.output {
        if let Some(parent) = artifact_path(prefix, "x").parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        for (name, contents) in &report.artifacts {
            let path = artifact_path(prefix, name);
            std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        }
    }
    for note in &report.notes {
        eprintln!("{note}");
    }
    print!("{}", report.stdout);
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

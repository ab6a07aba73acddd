//! Experiment configuration: which state to prepare, how to scan, and how
//! much light to collect.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use triality_core::targets::{solve_params, target_by_name, TargetPoint};
use triality_core::{PreparationParams, VdcTriple};

/// Counts per fringe point and per tomography setting when nothing else is given.
pub const DEFAULT_EXPOSURE: u64 = 10_000;
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_STEPS: usize = 64;

/// A state given either by interferometer settings or by a point on the sphere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateSpec {
    Params(PreparationParams),
    Named(String),
    Target(VdcTriple),
}

impl StateSpec {
    pub fn resolve(&self) -> anyhow::Result<Resolved> {
        match self {
            StateSpec::Params(p) => Ok(Resolved { params: *p, label: None }),
            StateSpec::Named(name) => {
                let t = target_by_name(name).with_context(|| format!("unknown target {name:?}"))?;
                Resolved::from_target(&t)
            }
            StateSpec::Target(triple) => Resolved::from_target(&TargetPoint::new(*triple, None)?),
        }
    }
}

/// Parameters ready for simulation, with the target name when there is one.
#[derive(Clone, Debug, PartialEq)]
pub struct Resolved {
    pub params: PreparationParams,
    pub label: Option<String>,
}

impl Resolved {
    fn from_target(t: &TargetPoint) -> anyhow::Result<Self> {
        Ok(Self { params: solve_params(t)?, label: t.name.clone() })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

impl Default for PhaseGrid {
    fn default() -> Self {
        Self { start: 0.0, stop: TAU, steps: DEFAULT_STEPS }
    }
}

impl PhaseGrid {
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.steps < 2 {
            bail!("phase grid needs at least 2 steps, got {}", self.steps);
        }
        if !(self.start.is_finite() && self.stop.is_finite()) || self.stop <= self.start {
            bail!("phase grid needs finite start < stop, got [{}, {})", self.start, self.stop);
        }
        Ok(())
    }

    pub fn phases(&self) -> Vec<f64> {
        triality_core::optics::phase_grid(self.start, self.stop, self.steps)
    }
}

/// Everything a single command needs. Fields left out of a config file fall
/// back to command-line flags and then to the defaults above.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub params: Option<StateSpec>,
    #[serde(default)]
    pub phase_grid: Option<PhaseGrid>,
    /// Counts per fringe point and per tomography setting; 0 means noiseless.
    #[serde(default)]
    pub exposure: Option<u64>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Prefix for written artifacts.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let config: Self = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if let Some(grid) = &config.phase_grid {
            grid.validate()?;
        }
        Ok(config)
    }

    pub fn exposure(&self) -> u64 {
        self.exposure.unwrap_or(DEFAULT_EXPOSURE)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn grid(&self) -> PhaseGrid {
        self.phase_grid.unwrap_or_default()
    }

    /// `None` when noiseless.
    pub fn mean_counts(&self) -> Option<u64> {
        Some(self.exposure()).filter(|&e| e > 0)
    }

    pub fn state(&self) -> anyhow::Result<Resolved> {
        self.params.as_ref().context("no state given; pass --R/--theta or --target")?.resolve()
    }
}

/// Path for artifact `name` under `prefix`: inside it when it is a directory
/// (or ends in a separator), otherwise `prefix_name`.
pub fn artifact_path(prefix: &Path, name: &str) -> PathBuf {
    let text = prefix.to_string_lossy();
    if prefix.is_dir() || text.ends_with(std::path::MAIN_SEPARATOR) || text.ends_with('/') {
        prefix.join(name)
    } else {
        PathBuf::from(format!("{text}_{name}"))
    }
}

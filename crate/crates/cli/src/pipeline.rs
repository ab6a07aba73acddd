//! The simulated measurement chain for one prepared state: a fringe scan for
//! V, path blocking for D, and tomography followed by Wootters for C.

use serde::Serialize;
use triality_core::metrics::{concurrence_wootters, distinguishability_from_blocking, fit_fringe};
use triality_core::optics::{block_path, fringe_scan, PathTag};
use triality_core::states::{density_of, prepare_state};
use triality_core::tomography::{expected_counts, reconstruct_mle, simulate_counts, CountRecord, MleResult};
use triality_core::{PreparationParams, VdcTriple};

/// Exposure used for exact (noiseless) tomography records; only the ratio to
/// the counts matters, so any positive value gives the same fit.
const NOISELESS_EXPOSURE: f64 = 1.0e4;

/// Noise settings for one run. `None` counts mean noiseless probabilities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measurement {
    /// Mean counts per fringe point and per tomography setting.
    pub mean_counts: Option<u64>,
    /// Mean counts for a blocked-path reading (unit-probability scale).
    pub blocking_counts: Option<u64>,
    pub seed: u64,
}

impl Measurement {
    pub fn noiseless() -> Self {
        Self { mean_counts: None, blocking_counts: None, seed: 0 }
    }

    /// Each blocked path is counted for as long as a whole fringe scan of
    /// `scan_points` points, so it collects `exposure · scan_points` counts at
    /// unit probability.
    pub fn with_exposure(exposure: u64, seed: u64, scan_points: usize) -> Self {
        let mean_counts = Some(exposure).filter(|&e| e > 0);
        Self { mean_counts, blocking_counts: mean_counts.map(|e| e * scan_points as u64), seed }
    }
}

/// Operational estimates from one simulated run.
#[derive(Clone, Debug, Serialize)]
pub struct Measured {
    #[serde(flatten)]
    pub triple: VdcTriple,
    #[serde(rename = "V2_plus_D2")]
    pub duality: f64,
    #[serde(rename = "SUM")]
    pub sum: f64,
    pub mle_converged: bool,
}

pub fn measure_visibility(p: &PreparationParams, phases: &[f64], m: Measurement) -> anyhow::Result<f64> {
    let scan = fringe_scan(p, phases, m.mean_counts, Some(m.seed))?;
    Ok(fit_fringe(&scan)?.visibility)
}

pub fn measure_distinguishability(p: &PreparationParams, m: Measurement) -> anyhow::Result<f64> {
    let a = block_path(p, PathTag::A, m.blocking_counts, Some(m.seed));
    let b = block_path(p, PathTag::B, m.blocking_counts, Some(m.seed));
    Ok(distinguishability_from_blocking(a.signal(), b.signal())?)
}

/// Tomography records for the prepared state: exact expectations when
/// noiseless, Poisson counts otherwise.
pub fn tomography_records(p: &PreparationParams, m: Measurement) -> anyhow::Result<Vec<CountRecord>> {
    let rho = density_of(&prepare_state(p));
    Ok(match m.mean_counts {
        None => expected_counts(&rho, NOISELESS_EXPOSURE),
        Some(exposure) => simulate_counts(&rho, exposure, m.seed)?,
    })
}

pub fn tomography(p: &PreparationParams, m: Measurement) -> anyhow::Result<MleResult> {
    Ok(reconstruct_mle(&tomography_records(p, m)?)?)
}

pub fn measure(p: &PreparationParams, phases: &[f64], m: Measurement) -> anyhow::Result<Measured> {
    let v = measure_visibility(p, phases, m)?;
    let d = measure_distinguishability(p, m)?;
    let fit = tomography(p, m)?;
    let triple = VdcTriple::clamped(v, d, concurrence_wootters(&fit.rho));
    Ok(Measured { triple, duality: triple.duality_sum(), sum: triple.sum(), mle_converged: fit.converged })
}

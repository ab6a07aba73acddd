//! Optical elements and the interferometer pipeline.
//!
//! The input photon enters in path `a` with horizontal polarization. HWP1 sets
//! the polarization, the PBS routes `h` to path `a` and `v` to path `b`, a
//! translation stage delays path `a`, HWP2 rotates the path-`b` polarization,
//! and BS2 recombines the paths. The detector watches BS2 output port `a'`.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, TAU};
use std::io::{self, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{tensor, CMatrix, CVector, I, ONE, ZERO};
use crate::noise::{poisson_count, substream, StreamKind};
use crate::states::{prepare_state, PreparationParams, PureState};

/// One of the two interferometer arms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathTag {
    A,
    B,
}

impl PathTag {
    fn offset(self) -> usize {
        match self {
            PathTag::A => 0,
            PathTag::B => 2,
        }
    }
}

/// Where a wave plate sits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    Path(PathTag),
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OpticalElement {
    /// Half-wave plate with fast axis at `angle` from horizontal.
    Hwp { angle: f64, placement: Placement },
    /// Polarizing beamsplitter: `h` exits in path `a`, `v` in path `b`.
    Pbs,
    /// Symmetric 50/50 beamsplitter with `i` on reflection.
    Bs50,
    /// Multiplies the amplitudes of `path` by `e^{iξ}`.
    PhaseDelay { xi: f64, path: PathTag },
}

/// Jones matrix of a half-wave plate: `h → cos2φ h + sin2φ v`.
pub fn hwp_jones(angle: f64) -> CMatrix {
    let (s, c) = (2.0 * angle).sin_cos();
    CMatrix::from_real_rows(&[&[c, s], &[s, -c]]).expect("2x2")
}

/// 4×4 action of an element on `|a,h⟩, |a,v⟩, |b,h⟩, |b,v⟩`.
pub fn element_unitary(e: &OpticalElement) -> CMatrix {
    match *e {
        OpticalElement::Hwp { angle, placement } => {
            let jones = hwp_jones(angle);
            match placement {
                Placement::Both => tensor(&CMatrix::identity(2).expect("2x2"), &jones).expect("2x2 factors"),
                Placement::Path(path) => {
                    let mut u = CMatrix::identity(4).expect("4x4");
                    let o = path.offset();
                    for i in 0..2 {
                        for j in 0..2 {
                            u[(o + i, o + j)] = jones[(i, j)];
                        }
                    }
                    u
                }
            }
        }
        OpticalElement::Pbs => {
            let mut u = CMatrix::zeros(4).expect("4x4");
            u[(0, 0)] = ONE; // a,h -> a,h
            u[(3, 1)] = ONE; // a,v -> b,v
            u[(2, 2)] = ONE; // b,h -> b,h
            u[(1, 3)] = ONE; // b,v -> a,v
            u
        }
        OpticalElement::Bs50 => {
            let r = Complex64::new(FRAC_1_SQRT_2, 0.0);
            let b = CMatrix::from_rows(&[&[r, I * r], &[I * r, r]]).expect("2x2");
            tensor(&b, &CMatrix::identity(2).expect("2x2")).expect("2x2 factors")
        }
        OpticalElement::PhaseDelay { xi, path } => {
            let mut u = CMatrix::identity(4).expect("4x4");
            let phase = Complex64::from_polar(1.0, xi);
            let o = path.offset();
            u[(o, o)] = phase;
            u[(o + 1, o + 1)] = phase;
            u
        }
    }
}

/// Applies `elements` in order to `input`.
pub fn propagate(input: &CVector, elements: &[OpticalElement]) -> CVector {
    elements.iter().fold(input.clone(), |v, e| element_unitary(e).apply(&v).expect("4-dim state"))
}

/// Wave-plate angles `(hwp1, hwp2)` that prepare `p`.
pub fn settings_for(p: &PreparationParams) -> (f64, f64) {
    (0.5 * p.r().atan(), FRAC_PI_4 + 0.5 * p.theta())
}

/// Preparation parameters realized by the wave-plate settings.
///
/// Valid for `hwp1 ∈ [0, π/4)` and `hwp2 ∈ [π/4, π/2]`; outside that range the
/// pipeline picks up relative signs that the `(R, θ, ξ)` form cannot carry.
pub fn params_for_settings(hwp1: f64, hwp2: f64, xi: f64) -> Result<PreparationParams> {
    let r = (2.0 * hwp1).tan().abs();
    if !r.is_finite() || r > 1e12 {
        return Err(Error::InvalidParameter(format!("hwp1 = {hwp1} sends all light to path b (R infinite)")));
    }
    let (s, c) = (2.0 * hwp2).sin_cos();
    let theta = c.abs().atan2(s.abs());
    PreparationParams::with_wrapped_phase(r, theta, xi)
}

/// State entering BS2 for the given wave-plate angles and stage phase.
///
/// The stage delays path `a` by `-xi`, so the overlap of the two arm
/// polarizations is `cos θ · e^{iξ}` as for [`prepare_state`]. The two states
/// agree exactly at `xi = 0`; otherwise the pipeline also phases `|b,v⟩` by
/// `e^{iξ}`, which changes none of γ, V, D, C or the fringe.
pub fn run_preparation(hwp1: f64, hwp2: f64, xi: f64) -> PureState {
    let input = CVector::basis(4, 0).expect("4-dim");
    let out = propagate(&input, &preparation_elements(hwp1, hwp2, xi));
    // Fix the gauge so the |a,h⟩ amplitude is real and nonnegative.
    let lead = out[0];
    let out = if lead.norm() > 1e-15 { out.scale((lead / lead.norm()).conj()) } else { out };
    PureState::new(out).expect("unitary evolution preserves the norm")
}

pub fn preparation_elements(hwp1: f64, hwp2: f64, xi: f64) -> Vec<OpticalElement> {
    vec![
        OpticalElement::Hwp { angle: hwp1, placement: Placement::Both },
        OpticalElement::Pbs,
        OpticalElement::PhaseDelay { xi: -xi, path: PathTag::A },
        OpticalElement::Hwp { angle: hwp2, placement: Placement::Path(PathTag::B) },
    ]
}

/// Probability of detection at BS2 output `a'` for a state entering BS2.
pub fn monitored_probability(state: &CVector) -> f64 {
    let out = element_unitary(&OpticalElement::Bs50).apply(state).expect("4-dim state");
    out[0].norm_sqr() + out[1].norm_sqr()
}

/// `ξ₀` in `I(ξ) = ½(1 + V cos(ξ + ξ₀))` for the monitored port.
pub fn fringe_offset(p: &PreparationParams) -> f64 {
    std::f64::consts::FRAC_PI_2 + p.xi()
}

/// Noiseless detection probability at stage phase `stage`.
pub fn fringe_intensity(p: &PreparationParams, stage: f64) -> f64 {
    let state = prepare_state(p);
    let delayed = element_unitary(&OpticalElement::PhaseDelay { xi: -stage, path: PathTag::A })
        .apply(state.amplitudes())
        .expect("4-dim state");
    monitored_probability(&delayed)
}

/// Fringe samples: probabilities, or Poisson counts with their mean scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FringeData {
    Probabilities(Vec<f64>),
    Counts { counts: Vec<u64>, mean_counts: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FringeScan {
    pub phases: Vec<f64>,
    pub data: FringeData,
}

impl FringeScan {
    pub fn new(phases: Vec<f64>, data: FringeData) -> Result<Self> {
        let n = match &data {
            FringeData::Probabilities(p) => {
                if p.iter().any(|x| !(0.0..=1.0).contains(x)) {
                    return Err(Error::InvalidParameter("fringe probabilities must lie in [0, 1]".into()));
                }
                p.len()
            }
            FringeData::Counts { counts, .. } => counts.len(),
        };
        if n != phases.len() {
            return Err(Error::Dimension(format!("{} phases but {n} samples", phases.len())));
        }
        Ok(Self { phases, data })
    }

    /// Samples as reals (probabilities or raw counts).
    pub fn values(&self) -> Vec<f64> {
        match &self.data {
            FringeData::Probabilities(p) => p.clone(),
            FringeData::Counts { counts, .. } => counts.iter().map(|&c| c as f64).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    /// CSV with header `xi,intensity` or `xi,counts`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        match &self.data {
            FringeData::Probabilities(p) => {
                writeln!(w, "xi,intensity")?;
                for (xi, v) in self.phases.iter().zip(p) {
                    writeln!(w, "{xi},{v}")?;
                }
            }
            FringeData::Counts { counts, .. } => {
                writeln!(w, "xi,counts")?;
                for (xi, c) in self.phases.iter().zip(counts) {
                    writeln!(w, "{xi},{c}")?;
                }
            }
        }
        Ok(())
    }
}

/// Evenly spaced phases `start + k·(stop - start)/steps`, `k < steps`.
pub fn phase_grid(start: f64, stop: f64, steps: usize) -> Vec<f64> {
    let step = (stop - start) / steps as f64;
    (0..steps).map(|k| start + k as f64 * step).collect()
}

/// Records the monitored port while the stage scans `phases`.
///
/// With `mean_counts`, each point is an independent Poisson draw with mean
/// `mean_counts · I(ξ)` on its own substream of `seed`.
pub fn fringe_scan(
    p: &PreparationParams,
    phases: &[f64],
    mean_counts: Option<u64>,
    seed: Option<u64>,
) -> Result<FringeScan> {
    if phases.is_empty() {
        return Err(Error::InvalidParameter("phase grid is empty".into()));
    }
    if phases.windows(2).any(|w| w[1] < w[0]) || phases.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("phase grid must be finite and sorted".into()));
    }
    let intensities: Vec<f64> = phases.iter().map(|&xi| fringe_intensity(p, xi).clamp(0.0, 1.0)).collect();
    let data = match mean_counts {
        None => FringeData::Probabilities(intensities),
        Some(mean) => {
            let seed = seed.unwrap_or(0);
            let counts = intensities
                .iter()
                .enumerate()
                .map(|(k, &i)| poisson_count(&mut substream(seed, StreamKind::Fringe, k as u64), mean as f64 * i))
                .collect();
            FringeData::Counts { counts, mean_counts: mean }
        }
    };
    FringeScan::new(phases.to_vec(), data)
}

/// Result of a path-blocking measurement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockedDetection {
    pub blocked: PathTag,
    /// Noiseless probability at the monitored port.
    pub probability: f64,
    /// Poisson counts when a mean was requested.
    pub counts: Option<u64>,
}

impl BlockedDetection {
    /// Counts if present, otherwise the probability.
    pub fn signal(&self) -> f64 {
        self.counts.map_or(self.probability, |c| c as f64)
    }
}

/// Blocks one arm and records the monitored BS2 port.
pub fn block_path(
    p: &PreparationParams,
    blocked: PathTag,
    mean_counts: Option<u64>,
    seed: Option<u64>,
) -> BlockedDetection {
    let state = prepare_state(p);
    let mut amps = state.amplitudes().entries().to_vec();
    let o = blocked.offset();
    amps[o] = ZERO;
    amps[o + 1] = ZERO;
    let probability = monitored_probability(&CVector::new(amps).expect("4-dim"));
    let counts = mean_counts.map(|mean| {
        let index = match blocked {
            PathTag::A => 0,
            PathTag::B => 1,
        };
        poisson_count(&mut substream(seed.unwrap_or(0), StreamKind::Blocking, index), mean as f64 * probability)
    });
    BlockedDetection { blocked, probability, counts }
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_phase(x: f64) -> f64 {
    let w = x.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

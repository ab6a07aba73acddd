//! Single-photon two-beam interference with a polarization tag.
//!
//! Models the state `c_a|a⟩|s_a⟩ + c_b|b⟩|s_b⟩`, the optics that prepare and
//! measure it, the three coherences (visibility `V`, distinguishability `D`,
//! concurrence `C`) with the identity `V² + D² + C² = 1`, and simulated
//! two-qubit state tomography.

pub mod error;
pub mod linalg;
pub mod metrics;
pub mod noise;
pub mod optics;
pub mod states;
pub mod targets;
pub mod tomography;

pub use error::{Error, Result};
pub use metrics::VdcTriple;
pub use states::{DensityMatrix, PreparationParams, PureState};

//! Single-photon path ⊗ polarization states and their preparation parameters.

use std::f64::consts::{FRAC_PI_2, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eig, CMatrix, CVector, HERMITIAN_TOL};

/// Unit-norm tolerance for [`PureState`].
pub const NORM_TOL: f64 = 1e-12;
/// Tolerance used for the density-matrix invariants (Hermiticity, positivity, trace).
pub const DENSITY_TOL: f64 = 1e-10;

/// Control knobs of the interferometer: amplitude ratio `R = |c_b / c_a|`,
/// polarization angle `theta` of the path-b state, and relative phase `xi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct PreparationParams {
    r: f64,
    theta: f64,
    xi: f64,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    #[serde(rename = "R")]
    r: f64,
    theta: f64,
    #[serde(default)]
    xi: f64,
}

impl TryFrom<RawParams> for PreparationParams {
    type Error = Error;
    fn try_from(raw: RawParams) -> Result<Self> {
        PreparationParams::new(raw.r, raw.theta, raw.xi)
    }
}

impl From<PreparationParams> for RawParams {
    fn from(p: PreparationParams) -> Self {
        RawParams { r: p.r, theta: p.theta, xi: p.xi }
    }
}

impl PreparationParams {
    /// Validates `R ≥ 0` finite, `theta ∈ [0, π/2]`, `xi ∈ [0, 2π)`.
    pub fn new(r: f64, theta: f64, xi: f64) -> Result<Self> {
        if !r.is_finite() || r < 0.0 {
            return Err(Error::InvalidParameter(format!("R must be finite and nonnegative, got {r}")));
        }
        if !(0.0..=FRAC_PI_2).contains(&theta) {
            return Err(Error::InvalidParameter(format!("theta must lie in [0, pi/2], got {theta}")));
        }
        if !(0.0..TAU).contains(&xi) {
            return Err(Error::InvalidParameter(format!("xi must lie in [0, 2pi), got {xi}")));
        }
        Ok(Self { r, theta, xi })
    }

    /// Like [`new`](Self::new) but wraps `xi` into `[0, 2π)` first.
    pub fn with_wrapped_phase(r: f64, theta: f64, xi: f64) -> Result<Self> {
        let mut wrapped = xi.rem_euclid(TAU);
        if wrapped >= TAU {
            wrapped = 0.0;
        }
        Self::new(r, theta, wrapped)
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    /// Path amplitudes `(c_a, c_b)`, both real and nonnegative.
    pub fn path_amplitudes(&self) -> (f64, f64) {
        let norm = (1.0 + self.r * self.r).sqrt();
        (1.0 / norm, self.r / norm)
    }
}

/// `γ = ⟨s_a|s_b⟩ = cos θ · e^{iξ}`.
pub fn gamma_overlap(p: &PreparationParams) -> Complex64 {
    Complex64::from_polar(p.theta.cos(), p.xi)
}

/// Normalized four-component amplitude vector over `|a,h⟩, |a,v⟩, |b,h⟩, |b,v⟩`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CVector", into = "CVector")]
pub struct PureState {
    amplitudes: CVector,
}

impl PureState {
    pub fn new(amplitudes: CVector) -> Result<Self> {
        if amplitudes.dim() != 4 {
            return Err(Error::Dimension(format!("pure state needs 4 amplitudes, got {}", amplitudes.dim())));
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized { norm });
        }
        Ok(Self { amplitudes })
    }

    pub fn from_amplitudes(amplitudes: [Complex64; 4]) -> Result<Self> {
        Self::new(CVector::new(amplitudes.to_vec())?)
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    /// `|⟨self|other⟩|²`.
    pub fn fidelity(&self, other: &PureState) -> f64 {
        self.amplitudes.inner(&other.amplitudes).expect("both 4-dim").norm_sqr()
    }

    /// Unnormalized polarization vectors carried by each path: `(c_a|s_a⟩, c_b|s_b⟩)`.
    pub fn path_components(&self) -> (CVector, CVector) {
        let a = self.amplitudes.entries();
        (CVector::new(vec![a[0], a[1]]).expect("2-dim"), CVector::new(vec![a[2], a[3]]).expect("2-dim"))
    }
}

impl TryFrom<CVector> for PureState {
    type Error = Error;
    fn try_from(v: CVector) -> Result<Self> {
        PureState::new(v)
    }
}

impl From<PureState> for CVector {
    fn from(s: PureState) -> Self {
        s.amplitudes
    }
}

/// `c_a|a⟩|h⟩ + c_b|b⟩(e^{iξ}cos θ|h⟩ + sin θ|v⟩)` with `c_a` real and nonnegative.
pub fn prepare_state(p: &PreparationParams) -> PureState {
    let (ca, cb) = p.path_amplitudes();
    let amplitudes = [
        Complex64::new(ca, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::from_polar(cb * p.theta.cos(), p.xi),
        Complex64::new(cb * p.theta.sin(), 0.0),
    ];
    PureState::from_amplitudes(amplitudes).expect("prepared amplitudes are normalized")
}

/// Hermitian, positive semidefinite, unit-trace 4×4 operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CMatrix", into = "CMatrix")]
pub struct DensityMatrix {
    op: CMatrix,
}

impl DensityMatrix {
    pub fn new(op: CMatrix) -> Result<Self> {
        if op.dim() != 4 {
            return Err(Error::Dimension(format!("density matrix must be 4x4, got {0}x{0}", op.dim())));
        }
        let asymmetry = op.hermitian_asymmetry();
        if asymmetry > HERMITIAN_TOL {
            return Err(Error::NotHermitian { asymmetry });
        }
        let trace = op.trace();
        if (trace.re - 1.0).abs() > DENSITY_TOL || trace.im.abs() > DENSITY_TOL {
            return Err(Error::Unphysical(format!("trace {trace} differs from 1")));
        }
        let eig = hermitian_eig(&op)?;
        let min = eig.values.last().copied().unwrap_or(0.0);
        if min < -DENSITY_TOL {
            return Err(Error::Unphysical(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(Self { op: op.hermitian_part() })
    }

    pub fn maximally_mixed() -> Self {
        Self { op: CMatrix::diagonal(&[0.25; 4]).expect("4x4") }
    }

    pub fn op(&self) -> &CMatrix {
        &self.op
    }

    pub fn purity(&self) -> f64 {
        self.op.trace_product(&self.op).re
    }

    /// `⟨ψ|ρ|ψ⟩`.
    pub fn expectation(&self, psi: &PureState) -> f64 {
        let rho_psi = self.op.apply(psi.amplitudes()).expect("4-dim");
        psi.amplitudes().inner(&rho_psi).expect("4-dim").re
    }

    /// `tr(ρ · obs)`, real part.
    pub fn expectation_of(&self, obs: &CMatrix) -> f64 {
        self.op.trace_product(obs).re
    }
}

impl TryFrom<CMatrix> for DensityMatrix {
    type Error = Error;
    fn try_from(m: CMatrix) -> Result<Self> {
        DensityMatrix::new(m)
    }
}

impl From<DensityMatrix> for CMatrix {
    fn from(d: DensityMatrix) -> Self {
        d.op
    }
}

/// Projector `|ψ⟩⟨ψ|`. Rejects vectors that are not unit norm.
pub fn density_of_vector(v: &CVector) -> Result<DensityMatrix> {
    let state = PureState::new(v.clone())?;
    Ok(density_of(&state))
}

pub fn density_of(s: &PureState) -> DensityMatrix {
    let op = s.amplitudes.outer(&s.amplitudes).expect("4-dim");
    DensityMatrix { op }
}

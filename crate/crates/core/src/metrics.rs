//! Visibility, distinguishability and concurrence, by closed form and by
//! simulated measurement, together with the quadratic identity that ties
//! them together for pure states.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use num_complex::Complex64;

use crate::linalg::{hermitian_eig, pauli_y, singular_values, tensor, CMatrix, CVector};
use crate::optics::FringeScan;
use crate::states::{gamma_overlap, DensityMatrix, PreparationParams, PureState, NORM_TOL};

/// Eigenvalues of ρ at or below this are treated as zero before taking square roots.
const SQRT_FLOOR: f64 = 1e-14;

/// Visibility, distinguishability and concurrence, each in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TripleJson", into = "TripleJson")]
pub struct VdcTriple {
    pub v: f64,
    pub d: f64,
    pub c: f64,
}

#[derive(Serialize, Deserialize)]
struct TripleJson {
    #[serde(rename = "V")]
    v: f64,
    #[serde(rename = "D")]
    d: f64,
    #[serde(rename = "C")]
    c: f64,
    #[serde(default, skip_deserializing)]
    sum: f64,
}

impl TryFrom<TripleJson> for VdcTriple {
    type Error = Error;
    fn try_from(t: TripleJson) -> Result<Self> {
        VdcTriple::new(t.v, t.d, t.c)
    }
}

impl From<VdcTriple> for TripleJson {
    fn from(t: VdcTriple) -> Self {
        TripleJson { v: t.v, d: t.d, c: t.c, sum: t.sum() }
    }
}

impl VdcTriple {
    /// Rejects components outside `[0, 1]` (rounding slack of 1e-12 is clamped away).
    pub fn new(v: f64, d: f64, c: f64) -> Result<Self> {
        for (name, x) in [("V", v), ("D", d), ("C", c)] {
            if !(-1e-12..=1.0 + 1e-12).contains(&x) {
                return Err(Error::InvalidParameter(format!("{name} = {x} outside [0, 1]")));
            }
        }
        Ok(Self::clamped(v, d, c))
    }

    /// Clamps each component into `[0, 1]`; for noisy estimates.
    pub fn clamped(v: f64, d: f64, c: f64) -> Self {
        let clamp = |x: f64| if x.is_nan() { 0.0 } else { x.clamp(0.0, 1.0) };
        Self { v: clamp(v), d: clamp(d), c: clamp(c) }
    }

    /// `V² + D²`, the traditional wave-particle sum.
    pub fn duality_sum(&self) -> f64 {
        self.v * self.v + self.d * self.d
    }

    /// `V² + D² + C²`.
    pub fn sum(&self) -> f64 {
        self.duality_sum() + self.c * self.c
    }
}

pub fn vdc_closed_form(p: &PreparationParams) -> VdcTriple {
    let r = p.r();
    let denom = 1.0 + r * r;
    let v = 2.0 * r * p.theta().cos().abs() / denom;
    let d = ((1.0 - r * r) / denom).abs();
    let c = 2.0 * r * p.theta().sin().abs() / denom;
    VdcTriple::clamped(v, d, c)
}

/// Signed `V² + D² + C² - 1`.
pub fn identity_residual(t: &VdcTriple) -> f64 {
    t.sum() - 1.0
}

/// `4|c_a c_b|²(1 - |γ|²)`: how far `V² + D²` falls short of one.
pub fn duality_gap(p: &PreparationParams) -> f64 {
    let (ca, cb) = p.path_amplitudes();
    let g = gamma_overlap(p).norm_sqr();
    4.0 * (ca * cb).powi(2) * (1.0 - g)
}

/// Least-squares sinusoid fit `I(ξ) = A + B cos ξ + B' sin ξ`; returns the
/// clamped visibility `√(B² + B'²) / A`.
pub fn visibility_from_scan(scan: &FringeScan) -> Result<f64> {
    fit_fringe(scan).map(|f| f.visibility.clamp(0.0, 1.0))
}

/// Parameters of a fitted fringe.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FringeFit {
    pub offset: f64,
    pub amplitude: f64,
    /// Phase `ξ₀` of `A + amplitude·cos(ξ + ξ₀)`.
    pub phase: f64,
    /// Unclamped `amplitude / offset`.
    pub visibility: f64,
}

pub fn fit_fringe(scan: &FringeScan) -> Result<FringeFit> {
    let n = scan.len();
    if n < 3 {
        return Err(Error::DegenerateFit(format!("{n} points cannot determine a sinusoid")));
    }
    let phases = &scan.phases;
    let span = phases[n - 1] - phases[0];
    let coverage = span + span / (n - 1) as f64;
    if coverage < std::f64::consts::TAU * (1.0 - 1e-9) {
        return Err(Error::DegenerateFit(format!("scan covers {coverage:.4} rad, less than one period")));
    }
    let values = scan.values();
    let mut normal = Matrix3::<f64>::zeros();
    let mut rhs = Vector3::<f64>::zeros();
    for (&xi, &y) in phases.iter().zip(&values) {
        let basis = Vector3::new(1.0, xi.cos(), xi.sin());
        normal += basis * basis.transpose();
        rhs += basis * y;
    }
    let coef = normal.lu().solve(&rhs).ok_or_else(|| Error::DegenerateFit("singular normal equations".into()))?;
    let (a, bc, bs) = (coef[0], coef[1], coef[2]);
    if a <= 0.0 {
        return Err(Error::DegenerateFit(format!("nonpositive fringe offset A = {a:.3e}")));
    }
    let amplitude = bc.hypot(bs);
    // B cos ξ + B' sin ξ = amplitude · cos(ξ + ξ₀) with ξ₀ = atan2(-B', B).
    let phase = (-bs).atan2(bc);
    Ok(FringeFit { offset: a, amplitude, phase, visibility: amplitude / a })
}

/// `|pa - pb| / (pa + pb)` from the two blocked-path signals.
pub fn distinguishability_from_blocking(pa: f64, pb: f64) -> Result<f64> {
    if !(pa >= 0.0 && pb >= 0.0) {
        return Err(Error::Measurement(format!("negative blocked-path signal ({pa}, {pb})")));
    }
    let total = pa + pb;
    if total <= 0.0 {
        return Err(Error::Measurement("both blocked-path signals are zero".into()));
    }
    Ok(((pa - pb).abs() / total).min(1.0))
}

/// `2|ad - bc|` for amplitudes `(a, b, c, d)` in canonical order.
pub fn concurrence_pure(s: &PureState) -> f64 {
    let a = s.amplitudes().entries();
    (2.0 * (a[0] * a[3] - a[1] * a[2]).norm()).min(1.0)
}

/// Pure-state concurrence of a raw vector; rejects vectors that are not unit norm.
pub fn concurrence_of_vector(v: &CVector) -> Result<f64> {
    if v.dim() == 4 && (v.norm() - 1.0).abs() > NORM_TOL {
        return Err(Error::NotNormalized { norm: v.norm() });
    }
    Ok(concurrence_pure(&PureState::new(v.clone())?))
}

/// Wootters concurrence with its pre-clamp value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Concurrence {
    /// `max(0, raw)`.
    pub value: f64,
    /// `√λ₁ - √λ₂ - √λ₃ - √λ₄`, possibly negative.
    pub raw: f64,
}

fn spin_flip() -> CMatrix {
    let y = pauli_y();
    tensor(&y, &y).expect("2x2 factors")
}

/// Spin-flip construction on a physical ρ.
///
/// With `ρ = Σ |wᵢ⟩⟨wᵢ|` over subnormalized eigenvectors, the `√λᵢ` are the
/// singular values of `τᵢⱼ = ⟨wᵢ|σy⊗σy|wⱼ*⟩`, which avoids square roots of
/// rounding-level eigenvalues.
pub fn wootters(rho: &DensityMatrix) -> Concurrence {
    let eig = hermitian_eig(rho.op()).expect("density matrices are Hermitian");
    let top = eig.values.first().copied().unwrap_or(0.0).max(0.0);
    let weights: Vec<f64> =
        eig.values.iter().map(|&x| if x <= SQRT_FLOOR * top.max(1.0) { 0.0 } else { x.sqrt() }).collect();
    let w: Vec<CVector> = eig.vectors.iter().zip(&weights).map(|(v, &s)| v.scale(Complex64::new(s, 0.0))).collect();
    let yy = spin_flip();
    let mut tau = CMatrix::zeros(4).expect("4x4");
    for i in 0..4 {
        let flipped = yy.apply(&w[i]).expect("4-dim");
        for j in 0..4 {
            tau[(i, j)] = w[j].entries().iter().zip(flipped.entries()).map(|(a, b)| a * b).sum();
        }
    }
    let roots = singular_values(&tau);
    let raw = roots[0] - roots[1..].iter().sum::<f64>();
    Concurrence { value: raw.clamp(0.0, 1.0), raw }
}

pub fn concurrence_wootters(rho: &DensityMatrix) -> f64 {
    wootters(rho).value
}

/// Wootters concurrence of a raw matrix; rejects unphysical input.
pub fn concurrence_wootters_op(op: &CMatrix) -> Result<f64> {
    Ok(concurrence_wootters(&DensityMatrix::new(op.clone())?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::{block_path, fringe_scan, phase_grid, FringeData, PathTag};
    use crate::states::{density_of, prepare_state};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4, TAU};

    fn params(r: f64, theta: f64, xi: f64) -> PreparationParams {
        PreparationParams::new(r, theta, xi).unwrap()
    }

    fn arb_params() -> impl Strategy<Value = PreparationParams> {
        (0.0..8.0f64, 0.0..=FRAC_PI_2, 0.0..TAU).prop_map(|(r, t, x)| params(r, t, x))
    }

    fn arb_state() -> impl Strategy<Value = PureState> {
        proptest::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 4).prop_filter_map("nonzero", |raw| {
            let v = CVector::new(raw.into_iter().map(|(a, b)| Complex64::new(a, b)).collect()).ok()?;
            if v.norm() < 1e-3 {
                return None;
            }
            PureState::new(v.normalized().ok()?).ok()
        })
    }

    #[test]
    fn closed_form_corners() {
        let t = vdc_closed_form(&params(1.0, 0.0, 0.0));
        assert_eq!((t.v, t.d, t.c), (1.0, 0.0, 0.0));
        let t = vdc_closed_form(&params(1.0, FRAC_PI_2, 0.0));
        assert_abs_diff_eq!(t.v, 0.0, epsilon = 1e-16);
        assert_eq!((t.d, t.c), (0.0, 1.0));
        let t = vdc_closed_form(&params(0.5176380902050415, FRAC_PI_4, 0.0));
        let third = 1.0 / 3f64.sqrt();
        for x in [t.v, t.d, t.c] {
            assert_abs_diff_eq!(x, third, epsilon = 1e-12);
        }
    }

    #[test]
    fn closed_form_handles_large_ratio() {
        let t = vdc_closed_form(&params(2.0, 0.0, 0.0));
        assert_abs_diff_eq!(t.d, 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(identity_residual(&t), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn residual_examples() {
        assert_eq!(identity_residual(&VdcTriple::new(1.0, 0.0, 0.0).unwrap()), 0.0);
        let t = VdcTriple::new(0.5774, 0.5774, 0.5774).unwrap();
        assert!(identity_residual(&t).abs() < 2e-4);
        let third = 1.0 / 3f64.sqrt();
        assert!(identity_residual(&VdcTriple::new(third, third, third).unwrap()).abs() < 1e-8);
        // Reported measurement of the center state: 0.587² + 0.568² + 0.570² = 0.992.
        let measured = VdcTriple::new(0.587, 0.568, 0.570).unwrap();
        assert_abs_diff_eq!(identity_residual(&measured), -0.008, epsilon = 5e-4);
    }

    #[test]
    fn triple_validation_and_json() {
        assert!(VdcTriple::new(1.1, 0.0, 0.0).is_err());
        assert!(VdcTriple::new(-0.1, 0.0, 0.0).is_err());
        let t = VdcTriple::clamped(1.3, -0.2, f64::NAN);
        assert_eq!((t.v, t.d, t.c), (1.0, 0.0, 0.0));
        let json = serde_json::to_string(&VdcTriple::new(0.6, 0.8, 0.0).unwrap()).unwrap();
        assert!(json.starts_with(r#"{"V":0.6,"D":0.8,"C":0.0,"sum":"#), "{json}");
        let back: VdcTriple = serde_json::from_str(&json).unwrap();
        assert_eq!(back.d, 0.8);
    }

    #[test]
    fn gap_examples() {
        assert_abs_diff_eq!(duality_gap(&params(0.7, 0.0, 1.0)), 0.0);
        assert_abs_diff_eq!(duality_gap(&params(1.0, FRAC_PI_2, 0.0)), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn visibility_fit_examples() {
        let grid = phase_grid(0.0, TAU, 64);
        let full = fringe_scan(&params(1.0, 0.0, 0.0), &grid, None, None).unwrap();
        assert_abs_diff_eq!(visibility_from_scan(&full).unwrap(), 1.0, epsilon = 1e-9);
        let flat = fringe_scan(&params(1.0, FRAC_PI_2, 0.0), &grid, None, None).unwrap();
        assert_abs_diff_eq!(visibility_from_scan(&flat).unwrap(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn visibility_fit_recovers_fringe_phase() {
        let p = params(0.4, 0.3, 2.0);
        let scan = fringe_scan(&p, &phase_grid(0.0, TAU, 40), None, None).unwrap();
        let fit = fit_fringe(&scan).unwrap();
        let want = crate::optics::fringe_offset(&p);
        let diff = (fit.phase - want).rem_euclid(TAU);
        assert!(diff < 1e-9 || TAU - diff < 1e-9, "phase {} vs {}", fit.phase, want);
        assert_abs_diff_eq!(fit.offset, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn visibility_fit_errors() {
        let p = params(1.0, 0.0, 0.0);
        let short = fringe_scan(&p, &phase_grid(0.0, 3.0, 10), None, None).unwrap();
        assert!(matches!(visibility_from_scan(&short), Err(Error::DegenerateFit(_))));
        let two = fringe_scan(&p, &[0.0, 4.0], None, None).unwrap();
        assert!(visibility_from_scan(&two).is_err());
        let dark = FringeScan::new(phase_grid(0.0, TAU, 8), FringeData::Counts { counts: vec![0; 8], mean_counts: 10 })
            .unwrap();
        assert!(matches!(visibility_from_scan(&dark), Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn noisy_visibility_is_clamped() {
        let p = params(1.0, 0.0, 0.0);
        let grid = phase_grid(0.0, TAU, 32);
        for seed in 0..20 {
            let scan = fringe_scan(&p, &grid, Some(50), Some(seed)).unwrap();
            let v = visibility_from_scan(&scan).unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn distinguishability_examples() {
        assert_eq!(distinguishability_from_blocking(0.5, 0.0).unwrap(), 1.0);
        assert_eq!(distinguishability_from_blocking(0.25, 0.25).unwrap(), 0.0);
        let p = params(2.0, 0.4, 0.0);
        let pa = block_path(&p, PathTag::B, None, None).probability;
        let pb = block_path(&p, PathTag::A, None, None).probability;
        // |c_a|² = 1/5, |c_b|² = 4/5 → |1 - 4| / 5.
        assert_abs_diff_eq!(distinguishability_from_blocking(pa, pb).unwrap(), 0.6, epsilon = 1e-15);
        assert!(distinguishability_from_blocking(0.0, 0.0).is_err());
        assert!(distinguishability_from_blocking(-0.1, 0.2).is_err());
    }

    #[test]
    fn pure_concurrence_examples() {
        let product = PureState::new(CVector::basis(4, 0).unwrap()).unwrap();
        assert_eq!(concurrence_pure(&product), 0.0);
        let bell = PureState::new(CVector::from_real(&[FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2]).unwrap()).unwrap();
        assert_abs_diff_eq!(concurrence_pure(&bell), 1.0, epsilon = 1e-15);

        let s3 = 3f64.sqrt();
        let a = ((3.0 + s3) / 6.0).sqrt();
        let b = ((3.0 - s3) / 12.0).sqrt();
        let eq7 = CVector::from_real(&[a, 0.0, b, b]).unwrap();
        assert_abs_diff_eq!(concurrence_of_vector(&eq7).unwrap(), 1.0 / s3, epsilon = 1e-12);
        assert!(concurrence_of_vector(&CVector::from_real(&[1.0, 1.0, 0.0, 0.0]).unwrap()).is_err());
    }

    #[test]
    fn wootters_examples() {
        let bell = PureState::new(CVector::from_real(&[FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2]).unwrap()).unwrap();
        assert_abs_diff_eq!(concurrence_wootters(&density_of(&bell)), 1.0, epsilon = 1e-9);
        let mixed = DensityMatrix::maximally_mixed();
        let c = wootters(&mixed);
        assert_eq!(c.value, 0.0);
        assert_abs_diff_eq!(c.raw, -0.5, epsilon = 1e-12);
        let bad = CMatrix::diagonal(&[0.6, 0.6, 0.0, -0.2]).unwrap();
        assert!(concurrence_wootters_op(&bad).is_err());
    }

    #[test]
    fn werner_state_concurrence() {
        // ρ = p|Φ+⟩⟨Φ+| + (1-p) I/4 has C = max(0, (3p - 1)/2).
        let s = FRAC_1_SQRT_2;
        let phi = CVector::from_real(&[s, 0.0, 0.0, s]).unwrap();
        let proj = phi.outer(&phi).unwrap();
        for p in [0.2, 1.0 / 3.0, 0.5, 0.8] {
            let op = &proj.scale(Complex64::new(p, 0.0)) + &CMatrix::diagonal(&[(1.0 - p) / 4.0; 4]).unwrap();
            let c = concurrence_wootters_op(&op).unwrap();
            assert_abs_diff_eq!(c, ((3.0 * p - 1.0) / 2.0).max(0.0), epsilon = 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(512))]

        #[test]
        fn identity_holds_for_closed_forms(p in arb_params()) {
            let t = vdc_closed_form(&p);
            prop_assert!(identity_residual(&t).abs() <= 1e-12);
            prop_assert!(t.duality_sum() <= 1.0 + 1e-12);
        }

        #[test]
        fn gap_equals_concurrence_squared(p in arb_params()) {
            let t = vdc_closed_form(&p);
            let gap = duality_gap(&p);
            prop_assert!((gap - (1.0 - t.duality_sum())).abs() <= 1e-12);
            let c = concurrence_pure(&prepare_state(&p));
            prop_assert!((gap - c * c).abs() <= 1e-12);
            prop_assert!((c - t.c).abs() <= 1e-12);
        }

        #[test]
        fn wootters_matches_pure_formula(s in arb_state()) {
            let c = concurrence_wootters(&density_of(&s));
            prop_assert!((c - concurrence_pure(&s)).abs() <= 1e-9, "{} vs {}", c, concurrence_pure(&s));
        }

        #[test]
        fn operational_matches_closed_form(p in arb_params()) {
            let t = vdc_closed_form(&p);
            let scan = fringe_scan(&p, &phase_grid(0.0, TAU, 48), None, None).unwrap();
            prop_assert!((visibility_from_scan(&scan).unwrap() - t.v).abs() <= 1e-6);
            let pa = block_path(&p, PathTag::B, None, None).probability;
            let pb = block_path(&p, PathTag::A, None, None).probability;
            prop_assert!((distinguishability_from_blocking(pa, pb).unwrap() - t.d).abs() <= 1e-12);
        }
    }
}

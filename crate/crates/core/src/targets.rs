//! Target points on the positive octant of the unit `(V, D, C)` sphere and
//! their inversion to preparation parameters.

use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{identity_residual, vdc_closed_form, VdcTriple};
use crate::states::{PreparationParams, PureState};

/// Points must satisfy `V² + D² + C² = 1` to this tolerance.
pub const SPHERE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetPoint {
    pub triple: VdcTriple,
    pub name: Option<String>,
}

impl TargetPoint {
    pub fn new(triple: VdcTriple, name: Option<String>) -> Result<Self> {
        let residual = identity_residual(&triple);
        if residual.abs() > SPHERE_TOL {
            return Err(Error::OffSphere { residual });
        }
        Ok(Self { triple, name })
    }

    pub fn named(v: f64, d: f64, c: f64, name: &str) -> Result<Self> {
        Self::new(VdcTriple::new(v, d, c)?, Some(name.to_string()))
    }
}

/// Inverts the closed forms on the `R ≤ 1` branch.
///
/// `R = √((1-D)/(1+D))`, `θ = atan2(C, V)` (`θ = 0` when `V = C = 0`), `ξ = 0`.
pub fn solve_params(t: &TargetPoint) -> Result<PreparationParams> {
    let VdcTriple { v, d, c } = t.triple;
    let residual = identity_residual(&t.triple);
    if residual.abs() > SPHERE_TOL {
        return Err(Error::OffSphere { residual });
    }
    let r = ((1.0 - d) / (1.0 + d)).max(0.0).sqrt();
    let theta = if v == 0.0 && c == 0.0 { 0.0 } else { c.atan2(v) };
    PreparationParams::new(r.min(1.0), theta, 0.0)
}

/// Ideal grid nodes of the seven-state table: three corners, three edge midpoints, the center.
pub fn table1_targets() -> Vec<TargetPoint> {
    let s = FRAC_1_SQRT_2;
    let t = 1.0 / 3f64.sqrt();
    [(1.0, 0.0, 0.0), (s, s, 0.0), (0.0, 1.0, 0.0), (0.0, s, s), (0.0, 0.0, 1.0), (s, 0.0, s), (t, t, t)]
        .iter()
        .enumerate()
        .map(|(i, &(v, d, c))| TargetPoint::named(v, d, c, &format!("state-{}", i + 1)).expect("grid node on sphere"))
        .collect()
}

/// Experimentally reported values for one row of the seven-state table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeasuredRow {
    pub state: usize,
    #[serde(rename = "V")]
    pub v: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub duality_sum: f64,
    pub sum: f64,
    pub sum_uncertainty: f64,
}

/// The published measurements of the seven prepared states.
pub const TABLE1_MEASURED: [MeasuredRow; 7] = [
    MeasuredRow { state: 1, v: 0.992, d: 0.009, c: 0.003, duality_sum: 0.985, sum: 0.985, sum_uncertainty: 0.014 },
    MeasuredRow { state: 2, v: 0.719, d: 0.680, c: 0.012, duality_sum: 0.980, sum: 0.980, sum_uncertainty: 0.054 },
    MeasuredRow { state: 3, v: 0.068, d: 0.994, c: 0.008, duality_sum: 0.992, sum: 0.992, sum_uncertainty: 0.060 },
    MeasuredRow { state: 4, v: 0.048, d: 0.708, c: 0.703, duality_sum: 0.503, sum: 0.998, sum_uncertainty: 0.084 },
    MeasuredRow { state: 5, v: 0.058, d: 0.011, c: 0.991, duality_sum: 0.004, sum: 0.986, sum_uncertainty: 0.040 },
    MeasuredRow { state: 6, v: 0.720, d: 0.011, c: 0.691, duality_sum: 0.518, sum: 0.996, sum_uncertainty: 0.070 },
    MeasuredRow { state: 7, v: 0.587, d: 0.568, c: 0.570, duality_sum: 0.667, sum: 0.992, sum_uncertainty: 0.070 },
];

/// The state with `V = D = C = 1/√3`.
pub fn equal_coherence_state() -> PureState {
    let s3 = 3f64.sqrt();
    let a = ((3.0 + s3) / 6.0).sqrt();
    let b = ((3.0 - s3) / 12.0).sqrt();
    PureState::new(crate::linalg::CVector::from_real(&[a, 0.0, b, b]).expect("4-dim")).expect("normalized")
}

/// Looks up a named target: `state-1` … `state-7`, `center`, or the corner
/// aliases `wave`, `particle`, `entangled`.
pub fn target_by_name(name: &str) -> Option<TargetPoint> {
    let targets = table1_targets();
    let index = match name.to_ascii_lowercase().as_str() {
        "center" | "equal" => 6,
        "wave" => 0,
        "particle" => 2,
        "entangled" => 4,
        other => other.strip_prefix("state-")?.parse::<usize>().ok()?.checked_sub(1)?,
    };
    targets.into_iter().nth(index)
}

/// Quasi-uniform points on the octant; `n = 1` returns the center.
///
/// Point `k` sits at `D = (k + ½)/n` with azimuth `atan2(C, V)` stepping by the
/// golden ratio modulo a quarter turn.
pub fn sphere_samples(n: usize) -> Vec<TargetPoint> {
    if n == 1 {
        return vec![table1_targets().pop().expect("seven targets")];
    }
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    (0..n)
        .map(|k| {
            let d = (k as f64 + 0.5) / n as f64;
            let rho = (1.0 - d * d).sqrt();
            let phi = ((k as f64 * golden).fract()) * std::f64::consts::FRAC_PI_2;
            let triple = VdcTriple::clamped(rho * phi.cos(), d, rho * phi.sin());
            TargetPoint { triple, name: Some(format!("sample-{k}")) }
        })
        .collect()
}

/// Row of a target export.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TargetRow {
    pub name: String,
    #[serde(rename = "V")]
    pub v: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub theta: f64,
}

pub fn target_rows(targets: &[TargetPoint]) -> Result<Vec<TargetRow>> {
    targets
        .iter()
        .map(|t| {
            let p = solve_params(t)?;
            Ok(TargetRow {
                name: t.name.clone().unwrap_or_default(),
                v: t.triple.v,
                d: t.triple.d,
                c: t.triple.c,
                r: p.r(),
                theta: p.theta(),
            })
        })
        .collect()
}

/// Largest componentwise deviation of the forward map from the target.
pub fn round_trip_error(t: &TargetPoint) -> Result<f64> {
    let back = vdc_closed_form(&solve_params(t)?);
    Ok((back.v - t.triple.v).abs().max((back.d - t.triple.d).abs()).max((back.c - t.triple.c).abs()))
}

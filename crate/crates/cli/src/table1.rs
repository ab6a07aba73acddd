//! Reproduction of the seven-state table: every target is pushed through the
//! simulated measurement chain, repeated over derived seeds.

use rayon::prelude::*;
use serde::Serialize;
use triality_core::noise::derive_seed;
use triality_core::targets::{solve_params, table1_targets};

use crate::pipeline::{measure, Measured, Measurement};

#[derive(Clone, Debug, Serialize)]
pub struct Table1Row {
    pub name: String,
    #[serde(rename = "V_target")]
    pub v_target: f64,
    #[serde(rename = "D_target")]
    pub d_target: f64,
    #[serde(rename = "C_target")]
    pub c_target: f64,
    #[serde(rename = "V")]
    pub v: f64,
    #[serde(rename = "V_std")]
    pub v_std: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "D_std")]
    pub d_std: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "C_std")]
    pub c_std: f64,
    #[serde(rename = "V2_plus_D2")]
    pub duality: f64,
    #[serde(rename = "V2_plus_D2_std")]
    pub duality_std: f64,
    #[serde(rename = "SUM")]
    pub sum: f64,
    #[serde(rename = "SUM_std")]
    pub sum_std: f64,
    /// Runs whose likelihood fit hit the iteration cap.
    pub unconverged: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Table1Report {
    pub exposure: u64,
    pub seed: u64,
    pub repeats: usize,
    pub rows: Vec<Table1Row>,
}

/// Mean and sample standard deviation (zero for a single value).
fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs the table. Exposure 0 is noiseless and always uses a single repeat.
pub fn run(exposure: u64, seed: u64, repeats: usize, phases: &[f64]) -> anyhow::Result<Table1Report> {
    let repeats = if exposure == 0 { 1 } else { repeats.max(1) };
    let targets = table1_targets();
    let params = targets.iter().map(solve_params).collect::<Result<Vec<_>, _>>()?;

    let jobs: Vec<(usize, u64)> = (0..targets.len()).flat_map(|s| (0..repeats as u64).map(move |k| (s, k))).collect();
    let runs: Vec<Measured> = jobs
        .par_iter()
        .map(|&(s, k)| {
            measure(&params[s], phases, Measurement::with_exposure(exposure, derive_seed(seed, k), phases.len()))
        })
        .collect::<anyhow::Result<_>>()?;

    let rows = targets
        .iter()
        .zip(runs.chunks(repeats))
        .map(|(t, runs)| {
            let stat = |f: fn(&Measured) -> f64| mean_std(runs.iter().map(f));
            let (v, v_std) = stat(|m| m.triple.v);
            let (d, d_std) = stat(|m| m.triple.d);
            let (c, c_std) = stat(|m| m.triple.c);
            let (duality, duality_std) = stat(|m| m.duality);
            let (sum, sum_std) = stat(|m| m.sum);
            Table1Row {
                name: t.name.clone().unwrap_or_default(),
                v_target: t.triple.v,
                d_target: t.triple.d,
                c_target: t.triple.c,
                v,
                v_std,
                d,
                d_std,
                c,
                c_std,
                duality,
                duality_std,
                sum,
                sum_std,
                unconverged: runs.iter().filter(|m| !m.mle_converged).count(),
            }
        })
        .collect();
    Ok(Table1Report { exposure, seed, repeats, rows })
}

//! One function per subcommand. Each returns a [`Report`]: the text for
//! standard output, notes for standard error, and the artifacts to write
//! when an output prefix is configured.

use std::fmt::Write as _;

use anyhow::{ensure, Context};
use serde::Serialize;
use triality_core::linalg::CMatrix;
use triality_core::metrics::{
    concurrence_pure, concurrence_wootters, distinguishability_from_blocking, duality_gap, fit_fringe,
    identity_residual, vdc_closed_form, FringeFit,
};
use triality_core::optics::{block_path, fringe_scan, settings_for, BlockedDetection, PathTag};
use triality_core::states::{density_of, gamma_overlap, prepare_state};
use triality_core::targets::{round_trip_error, sphere_samples, target_rows, SPHERE_TOL};
use triality_core::tomography::{fidelity, reconstruct_mle, write_counts_csv};
use triality_core::{PreparationParams, VdcTriple};

use crate::config::{ExperimentConfig, Resolved};
use crate::pipeline::{self, Measured, Measurement};
use crate::table1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    #[default]
    Json,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub stdout: String,
    pub notes: Vec<String>,
    /// `(file name, contents)` pairs, written under the output prefix.
    pub artifacts: Vec<(String, String)>,
}

const BASIS: [&str; 4] = ["a,h", "a,v", "b,h", "b,v"];

fn to_json<T: Serialize>(value: &T) -> anyhow::Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn csv_of<T: Serialize>(rows: &[T]) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn measurement(config: &ExperimentConfig) -> Measurement {
    Measurement::with_exposure(config.exposure(), config.seed(), config.grid().steps)
}

#[derive(Serialize)]
struct Settings {
    hwp1: f64,
    hwp2: f64,
}

#[derive(Serialize)]
struct StateReport {
    label: Option<String>,
    params: PreparationParams,
    settings: Settings,
    basis: [&'static str; 4],
    amplitudes: Vec<[f64; 2]>,
    vdc: VdcTriple,
}

pub fn prepare(config: &ExperimentConfig, format: Format) -> anyhow::Result<Report> {
    let Resolved { params, label } = config.state()?;
    let state = prepare_state(&params);
    let vdc = vdc_closed_form(&params);
    let residual = identity_residual(&vdc);
    ensure!(residual.abs() <= SPHERE_TOL, "identity residual {residual:e} exceeds {SPHERE_TOL:e}");

    let (hwp1, hwp2) = settings_for(&params);
    let amplitudes: Vec<[f64; 2]> = state.amplitudes().entries().iter().map(|z| [z.re, z.im]).collect();
    let report = StateReport { label, params, settings: Settings { hwp1, hwp2 }, basis: BASIS, amplitudes, vdc };
    let json = to_json(&report)?;
    let mut csv = String::from("basis,re,im\n");
    for (b, [re, im]) in BASIS.iter().zip(&report.amplitudes) {
        writeln!(csv, "\"{b}\",{re},{im}")?;
    }
    let stdout = match format {
        Format::Json => json.clone(),
        Format::Csv => csv,
    };
    Ok(Report { stdout, notes: Vec::new(), artifacts: vec![("state.json".into(), json)] })
}

#[derive(Serialize)]
struct FringePoint {
    xi: f64,
    value: f64,
}

#[derive(Serialize)]
struct FringeReport {
    label: Option<String>,
    params: PreparationParams,
    exposure: u64,
    seed: u64,
    fit: FringeFit,
    #[serde(rename = "V")]
    visibility: f64,
    #[serde(rename = "V_closed_form")]
    closed_form: f64,
    points: Vec<FringePoint>,
}

pub fn fringe(config: &ExperimentConfig, format: Format) -> anyhow::Result<Report> {
    let Resolved { params, label } = config.state()?;
    let grid = config.grid();
    grid.validate()?;
    let scan = fringe_scan(&params, &grid.phases(), config.mean_counts(), Some(config.seed()))?;
    let fit = fit_fringe(&scan)?;
    let visibility = fit.visibility.clamp(0.0, 1.0);

    let mut csv = Vec::new();
    scan.write_csv(&mut csv)?;
    let csv = String::from_utf8(csv)?;
    let points = scan.phases.iter().zip(scan.values()).map(|(&xi, value)| FringePoint { xi, value }).collect();
    let report = FringeReport {
        label,
        params,
        exposure: config.exposure(),
        seed: config.seed(),
        fit,
        visibility,
        closed_form: vdc_closed_form(&params).v,
        points,
    };
    let stdout = match format {
        Format::Json => to_json(&report)?,
        Format::Csv => csv.clone(),
    };
    Ok(Report {
        stdout,
        notes: vec![format!("fitted V = {visibility:.6} (closed form {:.6})", report.closed_form)],
        artifacts: vec![("fringe.csv".into(), csv)],
    })
}

#[derive(Serialize)]
struct BlockReport {
    label: Option<String>,
    exposure: u64,
    seed: u64,
    blocked: [BlockedDetection; 2],
    #[serde(rename = "D")]
    distinguishability: f64,
    #[serde(rename = "D_closed_form")]
    closed_form: f64,
}

pub fn block(config: &ExperimentConfig, format: Format) -> anyhow::Result<Report> {
    let Resolved { params, label } = config.state()?;
    let m = measurement(config);
    let blocked = [PathTag::A, PathTag::B].map(|path| block_path(&params, path, m.blocking_counts, Some(m.seed)));
    let d = distinguishability_from_blocking(blocked[0].signal(), blocked[1].signal())?;
    let report = BlockReport {
        label,
        exposure: config.exposure(),
        seed: config.seed(),
        blocked,
        distinguishability: d,
        closed_form: vdc_closed_form(&params).d,
    };
    let stdout = match format {
        Format::Json => to_json(&report)?,
        Format::Csv => {
            let mut s = String::from("blocked,probability,counts\n");
            for b in &report.blocked {
                let counts = b.counts.map(|c| c.to_string()).unwrap_or_default();
                writeln!(s, "{:?},{},{counts}", b.blocked, b.probability)?;
            }
            s
        }
    };
    Ok(Report { stdout, notes: vec![format!("D = {d:.6}")], artifacts: Vec::new() })
}

#[derive(Serialize)]
struct MetricsReport {
    label: Option<String>,
    params: PreparationParams,
    path_amplitudes: [f64; 2],
    gamma: [f64; 2],
    closed_form: VdcTriple,
    identity_residual: f64,
    duality_gap: f64,
    #[serde(rename = "C_wootters")]
    wootters: f64,
    #[serde(rename = "C_pure")]
    pure: f64,
    exposure: u64,
    seed: u64,
    measured: Measured,
}

pub fn metrics(config: &ExperimentConfig, format: Format) -> anyhow::Result<Report> {
    let Resolved { params, label } = config.state()?;
    let grid = config.grid();
    grid.validate()?;
    let state = prepare_state(&params);
    let closed = vdc_closed_form(&params);
    let (ca, cb) = params.path_amplitudes();
    let g = gamma_overlap(&params);
    let measured = pipeline::measure(&params, &grid.phases(), measurement(config))?;
    let report = MetricsReport {
        label,
        params,
        path_amplitudes: [ca, cb],
        gamma: [g.re, g.im],
        closed_form: closed,
        identity_residual: identity_residual(&closed),
        duality_gap: duality_gap(&params),
        wootters: concurrence_wootters(&density_of(&state)),
        pure: concurrence_pure(&state),
        exposure: config.exposure(),
        seed: config.seed(),
        measured,
    };
    let stdout = match format {
        Format::Json => to_json(&report)?,
        Format::Csv => {
            let m = &report.measured;
            let mut s = String::from("quantity,closed_form,measured\n");
            for (q, a, b) in [
                ("V", closed.v, m.triple.v),
                ("D", closed.d, m.triple.d),
                ("C", closed.c, m.triple.c),
                ("V2_plus_D2", closed.duality_sum(), m.duality),
                ("SUM", closed.sum(), m.sum),
            ] {
                writeln!(s, "{q},{a},{b}")?;
            }
            s
        }
    };
    Ok(Report { stdout, notes: Vec::new(), artifacts: Vec::new() })
}

#[derive(Serialize)]
struct RhoArtifact<'a> {
    rho: &'a CMatrix,
    loglik: f64,
    iterations: usize,
    converged: bool,
}

#[derive(Serialize)]
struct TomoReport {
    label: Option<String>,
    exposure: u64,
    seed: u64,
    loglik: f64,
    iterations: usize,
    converged: bool,
    warning: Option<String>,
    fidelity: f64,
    #[serde(rename = "C")]
    concurrence: f64,
    #[serde(rename = "C_closed_form")]
    closed_form: f64,
    rho: CMatrix,
}

fn bars_csv(rho: &CMatrix) -> String {
    let mut s = String::from("row,col,re,im\n");
    for i in 0..4 {
        for j in 0..4 {
            let z = rho[(i, j)];
            let _ = writeln!(s, "{i},{j},{},{}", z.re, z.im);
        }
    }
    s
}

pub fn tomo(config: &ExperimentConfig, format: Format) -> anyhow::Result<Report> {
    let Resolved { params, label } = config.state()?;
    let m = measurement(config);
    let ideal = density_of(&prepare_state(&params));
    let records = pipeline::tomography_records(&params, m)?;
    let fit = reconstruct_mle(&records)?;
    let fid = fidelity(&fit.rho, &ideal);
    let concurrence = concurrence_wootters(&fit.rho);

    let mut counts = Vec::new();
    write_counts_csv(&records, &mut counts)?;

    let rho = fit.rho.op().clone();
    let bars = bars_csv(&rho);
    let rho_json =
        to_json(&RhoArtifact { rho: &rho, loglik: fit.loglik, iterations: fit.iterations, converged: fit.converged })?;
    let mut notes = vec![format!("fidelity = {fid:.8}, C = {concurrence:.6}")];
    notes.extend(fit.warning.clone());
    let report = TomoReport {
        label,
        exposure: config.exposure(),
        seed: config.seed(),
        loglik: fit.loglik,
        iterations: fit.iterations,
        converged: fit.converged,
        warning: fit.warning,
        fidelity: fid,
        concurrence,
        closed_form: vdc_closed_form(&params).c,
        rho,
    };
    let stdout = match format {
        Format::Json => to_json(&report)?,
        Format::Csv => bars.clone(),
    };
    Ok(Report {
        stdout,
        notes,
        artifacts: vec![
            ("rho.json".into(), rho_json),
            ("bars.csv".into(), bars),
            ("counts.csv".into(), String::from_utf8(counts)?),
        ],
    })
}

pub fn table1(config: &ExperimentConfig, repeats: usize, format: Format) -> anyhow::Result<Report> {
    let grid = config.grid();
    grid.validate()?;
    let report = table1::run(config.exposure(), config.seed(), repeats, &grid.phases())?;
    let csv = csv_of(&report.rows)?;
    let json = to_json(&report)?;
    let stdout = match format {
        Format::Json => json.clone(),
        Format::Csv => csv.clone(),
    };
    let notes = report
        .rows
        .iter()
        .map(|r| format!("{}: V={:.3} D={:.3} C={:.3} SUM={:.3}±{:.3}", r.name, r.v, r.d, r.c, r.sum, r.sum_std))
        .collect();
    Ok(Report { stdout, notes, artifacts: vec![("table1.csv".into(), csv), ("table1.json".into(), json)] })
}

#[derive(Serialize)]
struct SphereRow {
    #[serde(rename = "V")]
    v: f64,
    #[serde(rename = "D")]
    d: f64,
    #[serde(rename = "C")]
    c: f64,
    #[serde(rename = "R")]
    r: f64,
    theta: f64,
}

pub fn sphere(n: usize, format: Format) -> anyhow::Result<Report> {
    ensure!(n >= 1, "need at least one sample");
    let samples = sphere_samples(n);
    for t in &samples {
        let residual = identity_residual(&t.triple);
        ensure!(residual.abs() <= SPHERE_TOL, "sample off the sphere by {residual:e}");
        let err = round_trip_error(t)?;
        ensure!(err <= SPHERE_TOL, "round trip error {err:e} at {:?}", t.triple);
    }
    let rows: Vec<SphereRow> = target_rows(&samples)
        .context("solving sphere samples")?
        .into_iter()
        .map(|r| SphereRow { v: r.v, d: r.d, c: r.c, r: r.r, theta: r.theta })
        .collect();
    let csv = csv_of(&rows)?;
    let stdout = match format {
        Format::Json => to_json(&rows)?,
        Format::Csv => csv.clone(),
    };
    Ok(Report { stdout, notes: Vec::new(), artifacts: vec![("sphere.csv".into(), csv)] })
}

//! Simulated two-qubit (path ⊗ polarization) state tomography.
//!
//! Sixteen product projectors over `{H, V, D, R}` on each qubit, Poisson
//! counts, linear inversion, and a maximum-likelihood fit over the Cholesky
//! parametrization `ρ = T†T / tr(T†T)` with `T` lower triangular.

use std::collections::HashMap;
use std::f64::consts::FRAC_1_SQRT_2;
use std::io::{self, BufRead, Write};

use nalgebra::{SMatrix, SVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eig, singular_values, tensor, CMatrix, CVector, ONE, ZERO};
use crate::noise::{poisson_count, substream, StreamKind};
use crate::states::DensityMatrix;

const N_SETTINGS: usize = 16;
/// Gradient max-norm (per-count log-likelihood) at which the fit is converged.
pub const GRADIENT_TOL: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 10_000;
const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-30;
const PROB_FLOOR: f64 = 1e-300;
/// Weight of `I/4` mixed into the second starting point of the fit.
const MIXED_START_WEIGHT: f64 = 0.05;
/// Optimality gap (per count) below which a low-rank fit is accepted as global.
const OPTIMALITY_TOL: f64 = 1e-7;
/// Eigenvalues of the starting estimate below this do not seed a truncated start.
const TRUNCATION_FLOOR: f64 = 1e-9;

type Transfer = SMatrix<f64, N_SETTINGS, N_SETTINGS>;
type Params = SVector<f64, N_SETTINGS>;

/// A rank-one projective measurement on the four-dimensional space.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSetting {
    pub label: String,
    pub ket: CVector,
    pub projector: CMatrix,
}

fn single_qubit_kets() -> [(char, CVector); 4] {
    let s = Complex64::new(FRAC_1_SQRT_2, 0.0);
    [
        ('H', CVector::new(vec![ONE, ZERO]).expect("2-dim")),
        ('V', CVector::new(vec![ZERO, ONE]).expect("2-dim")),
        ('D', CVector::new(vec![s, s]).expect("2-dim")),
        ('R', CVector::new(vec![s, Complex64::new(0.0, FRAC_1_SQRT_2)]).expect("2-dim")),
    ]
}

/// The sixteen product settings `XY`, path letter first, in the order
/// `HH, HV, HD, HR, VH, …, RR`. For the path qubit `H` is arm `a`, `V` arm `b`.
pub fn standard_settings() -> Vec<MeasurementSetting> {
    let kets = single_qubit_kets();
    let mut out = Vec::with_capacity(N_SETTINGS);
    for (l1, k1) in &kets {
        for (l2, k2) in &kets {
            let ket = tensor(k1, k2).expect("2-dim factors");
            let projector = ket.outer(&ket).expect("4-dim");
            out.push(MeasurementSetting { label: format!("{l1}{l2}"), ket, projector });
        }
    }
    out
}

/// Real Hermitian basis: four diagonal units, then for each pair `i < k` the
/// symmetric and antisymmetric off-diagonal generators.
fn hermitian_basis() -> Vec<CMatrix> {
    let mut basis = Vec::with_capacity(N_SETTINGS);
    for i in 0..4 {
        let mut m = CMatrix::zeros(4).expect("4x4");
        m[(i, i)] = ONE;
        basis.push(m);
    }
    for i in 0..4 {
        for k in (i + 1)..4 {
            let mut re = CMatrix::zeros(4).expect("4x4");
            re[(i, k)] = ONE;
            re[(k, i)] = ONE;
            basis.push(re);
            let mut im = CMatrix::zeros(4).expect("4x4");
            im[(i, k)] = Complex64::new(0.0, -1.0);
            im[(k, i)] = Complex64::new(0.0, 1.0);
            basis.push(im);
        }
    }
    basis
}

/// Map from Hermitian-basis coefficients to setting probabilities.
pub fn transfer_matrix() -> SMatrix<f64, 16, 16> {
    let settings = standard_settings();
    let basis = hermitian_basis();
    Transfer::from_fn(|k, j| settings[k].projector.trace_product(&basis[j]).re)
}

/// Condition number of the transfer matrix (ratio of extreme singular values).
pub fn transfer_condition_number() -> f64 {
    let sv = transfer_matrix().singular_values();
    sv.max() / sv.min()
}

/// Counts recorded for one setting.
///
/// `counts` holds whole numbers for simulated data; noiseless expectations
/// produced by [`expected_counts`] may be fractional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub setting: String,
    pub counts: f64,
    /// Mean total counts per setting (counts for a unit-probability outcome).
    pub exposure: f64,
}

pub fn setting_probabilities(rho: &DensityMatrix) -> Vec<(String, f64)> {
    standard_settings()
        .into_iter()
        .map(|s| {
            let p = rho.expectation_of(&s.projector).max(0.0);
            (s.label, p)
        })
        .collect()
}

/// Noiseless records: `counts = exposure · tr(ρ P)`.
pub fn expected_counts(rho: &DensityMatrix, exposure: f64) -> Vec<CountRecord> {
    setting_probabilities(rho)
        .into_iter()
        .map(|(setting, p)| CountRecord { setting, counts: exposure * p, exposure })
        .collect()
}

/// Poisson counts for every setting, each on its own substream of `seed`.
pub fn simulate_counts(rho: &DensityMatrix, exposure: u64, seed: u64) -> Result<Vec<CountRecord>> {
    if exposure == 0 {
        return Err(Error::InvalidParameter("exposure must be at least 1".into()));
    }
    Ok(setting_probabilities(rho)
        .into_iter()
        .enumerate()
        .map(|(k, (setting, p))| {
            let mut rng = substream(seed, StreamKind::Tomography, k as u64);
            let counts = poisson_count(&mut rng, exposure as f64 * p) as f64;
            CountRecord { setting, counts, exposure: exposure as f64 }
        })
        .collect())
}

/// Records reordered to match [`standard_settings`].
fn ordered(records: &[CountRecord]) -> Result<Vec<&CountRecord>> {
    let mut by_label: HashMap<&str, &CountRecord> = HashMap::new();
    for r in records {
        if !(r.counts >= 0.0 && r.counts.is_finite()) {
            return Err(Error::Measurement(format!("invalid count {} for {}", r.counts, r.setting)));
        }
        if !(r.exposure > 0.0 && r.exposure.is_finite()) {
            return Err(Error::Measurement(format!("invalid exposure {} for {}", r.exposure, r.setting)));
        }
        if by_label.insert(r.setting.as_str(), r).is_some() {
            return Err(Error::Measurement(format!("duplicate setting {}", r.setting)));
        }
    }
    standard_settings()
        .iter()
        .map(|s| {
            by_label
                .get(s.label.as_str())
                .copied()
                .ok_or_else(|| Error::Measurement(format!("missing setting {}", s.label)))
        })
        .collect()
}

/// Linear inversion of the normalized frequencies `counts / exposure`.
///
/// The result is Hermitian with unit trace but may have negative eigenvalues.
pub fn reconstruct_linear(records: &[CountRecord]) -> Result<CMatrix> {
    let recs = ordered(records)?;
    let freqs = Params::from_iterator(recs.iter().map(|r| r.counts / r.exposure));
    let coef =
        transfer_matrix().lu().solve(&freqs).ok_or_else(|| Error::Measurement("singular transfer matrix".into()))?;
    let mut rho = CMatrix::zeros(4)?;
    for (c, e) in coef.iter().zip(hermitian_basis()) {
        rho = &rho + &e.scale(Complex64::new(*c, 0.0));
    }
    let tr = rho.trace().re;
    if tr <= 0.0 {
        return Err(Error::Measurement(format!("linear estimate has nonpositive trace {tr:.3e}")));
    }
    Ok(rho.scale(Complex64::new(1.0 / tr, 0.0)).hermitian_part())
}

/// Clips negative eigenvalues and renormalizes.
pub fn project_to_physical(m: &CMatrix) -> Result<DensityMatrix> {
    let eig = hermitian_eig(&m.hermitian_part())?;
    let clipped: Vec<f64> = eig.values.iter().map(|&x| x.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if total <= 0.0 {
        return Ok(DensityMatrix::maximally_mixed());
    }
    let op = eig.map(|x| x.max(0.0) / total).hermitian_part();
    DensityMatrix::new(op)
}

/// Uhlmann fidelity `(tr √(√a b √a))²`; equals `⟨ψ|a|ψ⟩` when `b = |ψ⟩⟨ψ|`.
pub fn fidelity(a: &DensityMatrix, b: &DensityMatrix) -> f64 {
    let root_sum: f64 = singular_values(&(&psd_sqrt(a) * &psd_sqrt(b))).iter().sum();
    (root_sum * root_sum).clamp(0.0, 1.0)
}

/// `√ρ`, dropping rounding-level eigenvalues; `tr|√a √b|` is the root fidelity.
fn psd_sqrt(rho: &DensityMatrix) -> CMatrix {
    let eig = hermitian_eig(rho.op()).expect("density matrices are Hermitian");
    eig.map(|x| if x <= 1e-15 { 0.0 } else { x.sqrt() })
}

/// Outcome of the maximum-likelihood fit.
#[derive(Clone, Debug, Serialize)]
pub struct MleResult {
    pub rho: DensityMatrix,
    /// Poisson log-likelihood `Σ n ln μ - μ` (constant `ln n!` terms dropped).
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Final gradient max-norm of the per-count log-likelihood.
    pub gradient_norm: f64,
    /// `λ_max(G) - tr(ρ̂ G)` with `G` the per-count likelihood gradient in ρ;
    /// zero exactly at the global maximum.
    pub optimality_gap: f64,
    /// Log-likelihood after each accepted step, starting with the initial point.
    #[serde(skip)]
    pub history: Vec<f64>,
    pub warning: Option<String>,
}

struct Objective {
    projectors: Vec<CMatrix>,
    kets: Vec<[Complex64; 4]>,
    counts: Vec<f64>,
    exposures: Vec<f64>,
    /// Per-count normalization of the log-likelihood.
    scale: f64,
    /// `Σ n ln n - n`: the log-likelihood of the saturated model.
    saturated: f64,
}

impl Objective {
    fn new(records: &[&CountRecord]) -> Self {
        let total: f64 = records.iter().map(|r| r.counts).sum();
        let settings = standard_settings();
        Self {
            projectors: settings.iter().map(|s| s.projector.clone()).collect(),
            kets: settings.iter().map(|s| std::array::from_fn(|i| s.ket[i])).collect(),
            counts: records.iter().map(|r| r.counts).collect(),
            exposures: records.iter().map(|r| r.exposure).collect(),
            scale: 1.0 / total.max(1.0),
            saturated: records.iter().filter(|r| r.counts > 0.0).map(|r| r.counts * r.counts.ln() - r.counts).sum(),
        }
    }

    fn probabilities(&self, rho: &CMatrix) -> Vec<f64> {
        self.projectors.iter().map(|p| rho.trace_product(p).re.max(0.0)).collect()
    }

    /// Full Poisson log-likelihood of ρ.
    fn loglik(&self, rho: &CMatrix) -> f64 {
        self.probabilities(rho)
            .iter()
            .zip(self.counts.iter().zip(&self.exposures))
            .map(|(&p, (&n, &e))| {
                let mu = e * p;
                let log_term = if n > 0.0 { n * mu.max(PROB_FLOOR).ln() } else { 0.0 };
                log_term - mu
            })
            .sum()
    }

    /// `∂L/∂ρ = Σ_k (n_k / p_k - e_k) P_k`, per count.
    fn rho_gradient(&self, rho: &CMatrix) -> CMatrix {
        let mut g = CMatrix::zeros(4).expect("4x4");
        for (k, p) in self.probabilities(rho).into_iter().enumerate() {
            let (n, e) = (self.counts[k], self.exposures[k]);
            let w = if n > 0.0 { n / p.max(PROB_FLOOR) - e } else { -e };
            g = &g + &self.projectors[k].scale(Complex64::new(w * self.scale, 0.0));
        }
        g
    }

    /// `λ_max(G) - tr(ρ G)` for `G = ∂L/∂ρ`. The likelihood is concave in ρ, so
    /// a zero gap means ρ is the global maximum over density matrices.
    fn optimality_gap(&self, rho: &CMatrix) -> f64 {
        let g = self.rho_gradient(rho).hermitian_part();
        let top = hermitian_eig(&g).map_or(f64::INFINITY, |e| e.values[0]);
        (top - g.trace_product(rho).re).max(0.0)
    }

    /// Amplitudes `T k` for every setting ket, straight from the parameters.
    #[allow(clippy::needless_range_loop)] // indices mirror the parameter layout
    fn images(&self, t: &Params) -> Vec<[Complex64; 4]> {
        let mut tm = [[ZERO; 4]; 4];
        let mut idx = 4;
        for i in 0..4 {
            tm[i][i] = Complex64::new(t[i], 0.0);
            for j in 0..i {
                tm[i][j] = Complex64::new(t[idx], t[idx + 1]);
                idx += 2;
            }
        }
        self.kets.iter().map(|k| std::array::from_fn(|i| (0..=i).map(|j| tm[i][j] * k[j]).sum())).collect()
    }

    /// Per-count log-likelihood ratio against the saturated model (`μ = n`) of
    /// `ρ = T†T / tr(T†T)`. It vanishes for a perfect fit, which keeps small
    /// improvements near the optimum resolvable in floating point. Uses
    /// `tr(ρ |k⟩⟨k|) = ‖T k‖² / ‖t‖²`.
    fn value(&self, t: &Params) -> f64 {
        let s = t.norm_squared();
        let total: f64 = self
            .images(t)
            .iter()
            .zip(self.counts.iter().zip(&self.exposures))
            .map(|(u, (&n, &e))| {
                let mu = e * u.iter().map(|z| z.norm_sqr()).sum::<f64>() / s;
                if n > 0.0 {
                    n * (mu.max(PROB_FLOOR) / n).ln() - mu + n
                } else {
                    -mu
                }
            })
            .sum();
        total * self.scale
    }

    /// Converts [`value`](Self::value) back to the log-likelihood.
    fn loglik_from_value(&self, value: f64) -> f64 {
        value / self.scale + self.saturated
    }
}

/// Lower-triangular `T` from 16 reals: diagonal first, then `(re, im)` of
/// each strictly-lower entry in row-major order.
fn t_from_params(t: &Params) -> CMatrix {
    let mut m = CMatrix::zeros(4).expect("4x4");
    for i in 0..4 {
        m[(i, i)] = Complex64::new(t[i], 0.0);
    }
    let mut k = 4;
    for i in 0..4 {
        for j in 0..i {
            m[(i, j)] = Complex64::new(t[k], t[k + 1]);
            k += 2;
        }
    }
    m
}

fn params_from_t(m: &CMatrix) -> Params {
    let mut t = Params::zeros();
    for i in 0..4 {
        t[i] = m[(i, i)].re;
    }
    let mut k = 4;
    for i in 0..4 {
        for j in 0..i {
            t[k] = m[(i, j)].re;
            t[k + 1] = m[(i, j)].im;
            k += 2;
        }
    }
    t
}

fn rho_from_params(t: &Params) -> CMatrix {
    let tm = t_from_params(t);
    let a = &tm.adjoint() * &tm;
    let tr = a.trace().re;
    a.scale(Complex64::new(1.0 / tr, 0.0)).hermitian_part()
}

/// Lower-triangular `T` with `T†T = a`, tolerating rank deficiency.
fn reverse_cholesky(a: &CMatrix) -> CMatrix {
    // With J the exchange matrix, J a J = L L† gives a = (J L J)(J L J)†,
    // and J L J is upper triangular, so T = (J L J)†.
    let n = 4;
    let rev = |i: usize| n - 1 - i;
    let mut b = CMatrix::zeros(n).expect("4x4");
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] = a[(rev(i), rev(j))];
        }
    }
    let tol = 1e-14 * a.trace().re.abs().max(1e-300);
    let mut l = CMatrix::zeros(n).expect("4x4");
    for k in 0..n {
        let d = b[(k, k)].re - (0..k).map(|j| l[(k, j)].norm_sqr()).sum::<f64>();
        if d <= tol {
            continue;
        }
        let pivot = d.sqrt();
        l[(k, k)] = Complex64::new(pivot, 0.0);
        for i in (k + 1)..n {
            let s: Complex64 = (0..k).map(|j| l[(i, j)] * l[(k, j)].conj()).sum();
            l[(i, k)] = (b[(i, k)] - s) / pivot;
        }
    }
    let mut u = CMatrix::zeros(n).expect("4x4");
    for i in 0..n {
        for j in 0..n {
            u[(i, j)] = l[(rev(i), rev(j))];
        }
    }
    u.adjoint()
}

struct Ascent {
    params: Params,
    loglik: f64,
    iterations: usize,
    converged: bool,
    gradient_norm: f64,
    history: Vec<f64>,
}

fn normalize(t: &Params) -> Params {
    let n = t.norm();
    if n > 0.0 {
        t / n
    } else {
        *t
    }
}

/// Gradient of [`Objective::value`] in the real parameters.
///
/// With `q = ‖T k‖²` and `s = ‖t‖²`, `∂p/∂t = ∂q/∂t / s - 2 q t / s²`, where
/// `∂q/∂Re T_ij = 2 Re(ū_i k_j)` and `∂q/∂Im T_ij = -2 Im(ū_i k_j)` for `u = T k`.
#[allow(clippy::needless_range_loop)] // indices mirror the parameter layout
fn params_gradient(obj: &Objective, t: &Params) -> Params {
    let s = t.norm_squared();
    let mut grad = Params::zeros();
    for (k, u) in obj.images(t).iter().enumerate() {
        let ket = &obj.kets[k];
        let q: f64 = u.iter().map(|z| z.norm_sqr()).sum();
        let p = q / s;
        let (n, e) = (obj.counts[k], obj.exposures[k]);
        let w = obj.scale * if n > 0.0 { n / p.max(PROB_FLOOR) - e } else { -e };
        if w == 0.0 {
            continue;
        }
        let mut dq = Params::zeros();
        for i in 0..4 {
            dq[i] = 2.0 * (u[i].conj() * ket[i]).re;
        }
        let mut idx = 4;
        for i in 0..4 {
            for j in 0..i {
                let z = u[i].conj() * ket[j];
                dq[idx] = 2.0 * z.re;
                dq[idx + 1] = -2.0 * z.im;
                idx += 2;
            }
        }
        grad += (dq / s - t * (2.0 * q / (s * s))) * w;
    }
    grad
}

/// Gradient ascent with Armijo backtracking on the per-count log-likelihood.
/// The first trial step of each iteration is the Barzilai–Borwein length.
fn ascend(obj: &Objective, start: &DensityMatrix) -> Ascent {
    let mut t = normalize(&params_from_t(&reverse_cholesky(start.op())));
    let f = |t: &Params| obj.value(t);
    let mut value = f(&t);
    let mut grad = params_gradient(obj, &t);
    let mut history = vec![obj.loglik_from_value(value)];
    let mut step = 1.0;
    let mut iterations = 0;
    let mut converged = false;
    let mut prev: Option<(Params, Params)> = None;

    while iterations < MAX_ITERATIONS {
        let gnorm = grad.amax();
        if gnorm <= GRADIENT_TOL {
            converged = true;
            break;
        }
        if let Some((dt, dg)) = prev {
            let sy = dt.dot(&dg);
            let ss = dt.dot(&dt);
            // Ascent: the curvature along dt is negative, so -ss/sy is positive.
            if sy < 0.0 {
                step = (-ss / sy).clamp(1e-12, 1e6);
            } else {
                step = (step * 2.0).min(1e6);
            }
        }
        let g2 = grad.norm_squared();
        let mut accepted = None;
        while step > MIN_STEP {
            let candidate = normalize(&(t + grad * step));
            let cand_value = f(&candidate);
            if cand_value >= value + ARMIJO * step * g2 {
                accepted = Some((candidate, cand_value));
                break;
            }
            step *= 0.5;
        }
        let Some((next, next_value)) = accepted else {
            // No ascent direction left at machine precision.
            converged = grad.amax() <= GRADIENT_TOL.sqrt();
            break;
        };
        let next_grad = params_gradient(obj, &next);
        prev = Some((next - t, next_grad - grad));
        t = next;
        value = next_value;
        grad = next_grad;
        history.push(obj.loglik_from_value(value));
        iterations += 1;
    }
    Ascent {
        params: t,
        loglik: obj.loglik_from_value(value),
        iterations,
        converged,
        gradient_norm: grad.amax(),
        history,
    }
}

/// Maximum-likelihood density matrix for the records.
///
/// Starts are derived from the linear estimate projected onto the physical
/// set: its rank-1, 2 and 3 truncations, then the projection itself and the
/// projection mixed with a little `I/4`. A rank-deficient start cannot leave
/// its face of the boundary, so the search stops at the first run that passes
/// the global optimality test; otherwise the highest likelihood wins.
pub fn reconstruct_mle(records: &[CountRecord]) -> Result<MleResult> {
    let recs = ordered(records)?;
    let obj = Objective::new(&recs);
    let total: f64 = obj.counts.iter().sum();
    if total <= 0.0 {
        let rho = DensityMatrix::maximally_mixed();
        let loglik = obj.loglik(rho.op());
        return Ok(MleResult {
            rho,
            loglik,
            iterations: 0,
            converged: false,
            gradient_norm: f64::NAN,
            optimality_gap: f64::NAN,
            history: vec![loglik],
            warning: Some("all counts are zero; returning the maximally mixed state".into()),
        });
    }

    let linear = reconstruct_linear(records);
    let projected = match &linear {
        Ok(m) => project_to_physical(m)?,
        Err(_) => DensityMatrix::maximally_mixed(),
    };

    // Low-rank starts first: a zero row of T stays zero, so each run explores
    // one face of the boundary, where convergence is fast. The first run that
    // passes the global optimality test ends the search.
    let certified = |r: &Ascent| r.converged && obj.optimality_gap(&rho_from_params(&r.params)) <= OPTIMALITY_TOL;
    let mut runs: Vec<Ascent> = Vec::new();
    for start in truncations(&projected)? {
        runs.push(ascend(&obj, &start));
        if runs.last().is_some_and(certified) {
            break;
        }
    }
    if !runs.last().is_some_and(certified) {
        let mixed_op = &projected.op().scale(Complex64::new(1.0 - MIXED_START_WEIGHT, 0.0))
            + &CMatrix::diagonal(&[MIXED_START_WEIGHT / 4.0; 4])?;
        runs.push(ascend(&obj, &projected));
        runs.push(ascend(&obj, &DensityMatrix::new(mixed_op)?));
    }
    let best = runs.into_iter().reduce(|a, b| if b.loglik > a.loglik { b } else { a }).expect("at least one run");

    let rho = DensityMatrix::new(rho_from_params(&best.params))?;
    let optimality_gap = obj.optimality_gap(rho.op());
    let warning = (!best.converged)
        .then(|| format!("not converged after {} iterations (gradient {:.3e})", best.iterations, best.gradient_norm));
    Ok(MleResult {
        rho,
        loglik: best.loglik,
        iterations: best.iterations,
        converged: best.converged,
        gradient_norm: best.gradient_norm,
        optimality_gap,
        history: best.history,
        warning,
    })
}

/// The projected estimate cut down to its top 1, 2 and 3 eigenvalues
/// (renormalized), skipping ranks it does not have.
fn truncations(rho: &DensityMatrix) -> Result<Vec<DensityMatrix>> {
    let eig = hermitian_eig(rho.op())?;
    let mut out = Vec::new();
    for r in 1..4 {
        let cut = eig.values[r - 1];
        if cut <= TRUNCATION_FLOOR {
            break;
        }
        let kept: f64 = eig.values[..r].iter().sum();
        let mut m = CMatrix::zeros(4)?;
        for (&lambda, v) in eig.values[..r].iter().zip(&eig.vectors) {
            m = &m + &v.outer(v)?.scale(Complex64::new(lambda / kept, 0.0));
        }
        out.push(DensityMatrix::new(m.hermitian_part())?);
    }
    Ok(out)
}

/// CSV with header `setting,counts,exposure`.
pub fn write_counts_csv<W: Write>(records: &[CountRecord], mut w: W) -> io::Result<()> {
    writeln!(w, "setting,counts,exposure")?;
    for r in records {
        writeln!(w, "{},{},{}", r.setting, r.counts, r.exposure)?;
    }
    Ok(())
}

pub fn read_counts_csv<R: BufRead>(r: R) -> Result<Vec<CountRecord>> {
    let mut lines = r.lines();
    let header = lines.next().transpose().map_err(|e| Error::Measurement(e.to_string()))?.unwrap_or_default();
    if header.trim() != "setting,counts,exposure" {
        return Err(Error::Measurement(format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for line in lines {
        let line = line.map_err(|e| Error::Measurement(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [setting, counts, exposure] = fields[..] else {
            return Err(Error::Measurement(format!("malformed row {line:?}")));
        };
        let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::Measurement(format!("{s:?}: {e}")));
        out.push(CountRecord { setting: setting.to_string(), counts: parse(counts)?, exposure: parse(exposure)? });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{density_of, PureState};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pure(rng: &mut impl Rng) -> PureState {
        let v = CVector::new(
            (0..4).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect(),
        )
        .unwrap();
        PureState::new(v.normalized().unwrap()).unwrap()
    }

    fn random_mixed(rng: &mut impl Rng) -> DensityMatrix {
        let weights: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
        let total: f64 = weights.iter().sum();
        let mut op = CMatrix::zeros(4).unwrap();
        for w in weights {
            let s = random_pure(rng);
            op = &op + &density_of(&s).op().scale(Complex64::new(w / total, 0.0));
        }
        DensityMatrix::new(op).unwrap()
    }

    #[test]
    fn settings_are_rank_one_projectors() {
        let settings = standard_settings();
        assert_eq!(settings.len(), 16);
        assert_eq!(settings[0].label, "HH");
        let hh = CMatrix::diagonal(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(settings[0].projector, hh);
        for s in &settings {
            assert_abs_diff_eq!(s.projector.trace().re, 1.0, epsilon = 1e-15);
            assert!(s.projector.hermitian_asymmetry() <= 1e-10);
            assert!((&s.projector * &s.projector).max_abs_diff(&s.projector) <= 1e-10);
        }
    }

    #[test]
    fn transfer_matrix_is_invertible() {
        let k = transfer_condition_number();
        assert!(k.is_finite() && k < 100.0, "condition number {k}");
    }

    #[test]
    fn linear_inversion_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let rho = random_mixed(&mut rng);
            let est = reconstruct_linear(&expected_counts(&rho, 1.0)).unwrap();
            assert!(est.max_abs_diff(rho.op()) <= 1e-10);
        }
        let mixed = DensityMatrix::maximally_mixed();
        let est = reconstruct_linear(&expected_counts(&mixed, 500.0)).unwrap();
        assert!(est.max_abs_diff(mixed.op()) <= 1e-12);
    }

    #[test]
    fn noisy_linear_estimate_is_hermitian_unit_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rho = density_of(&random_pure(&mut rng));
        let est = reconstruct_linear(&simulate_counts(&rho, 200, 4).unwrap()).unwrap();
        assert!(est.hermitian_asymmetry() <= 1e-12);
        assert_abs_diff_eq!(est.trace().re, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(est.trace().im, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn missing_or_duplicate_settings_rejected() {
        let rho = DensityMatrix::maximally_mixed();
        let mut records = expected_counts(&rho, 10.0);
        records.pop();
        assert!(matches!(reconstruct_linear(&records), Err(Error::Measurement(_))));
        assert!(reconstruct_mle(&records).is_err());
        let mut dup = expected_counts(&rho, 10.0);
        dup[1].setting = "HH".into();
        assert!(reconstruct_linear(&dup).is_err());
    }

    #[test]
    fn counts_for_product_state() {
        let ah = density_of(&PureState::new(CVector::basis(4, 0).unwrap()).unwrap());
        let recs = expected_counts(&ah, 1000.0);
        assert_abs_diff_eq!(recs[0].counts, 1000.0, epsilon = 1e-12);
        let hv = recs.iter().find(|r| r.setting == "HV").unwrap();
        assert_abs_diff_eq!(hv.counts, 0.0, epsilon = 1e-12);
        let noisy = simulate_counts(&ah, 1000, 1).unwrap();
        assert_eq!(noisy.iter().find(|r| r.setting == "VH").unwrap().counts, 0.0);
        assert!(simulate_counts(&ah, 0, 1).is_err());
        assert_eq!(simulate_counts(&ah, 1000, 1).unwrap(), noisy);
    }

    #[test]
    fn poisson_mean_matches_exposure() {
        // Setting HD on |a,h⟩ has probability 1/2.
        let ah = density_of(&PureState::new(CVector::basis(4, 0).unwrap()).unwrap());
        let exposure = 100;
        let trials = 10_000;
        let sum: f64 = (0..trials).map(|seed| simulate_counts(&ah, exposure, seed).unwrap()[2].counts).sum();
        let mean = sum / trials as f64;
        let sigma = (50.0f64 / trials as f64).sqrt();
        assert!((mean - 50.0).abs() <= 3.0 * sigma, "mean {mean}");
    }

    #[test]
    fn reverse_cholesky_reproduces_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let rho = random_mixed(&mut rng);
            let t = reverse_cholesky(rho.op());
            for i in 0..4 {
                for j in (i + 1)..4 {
                    assert_eq!(t[(i, j)], ZERO);
                }
            }
            assert!((&t.adjoint() * &t).max_abs_diff(rho.op()) <= 1e-12);
            let pure = density_of(&random_pure(&mut rng));
            let t = reverse_cholesky(pure.op());
            assert!((&t.adjoint() * &t).max_abs_diff(pure.op()) <= 1e-12);
        }
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rho = random_mixed(&mut rng);
        let recs = simulate_counts(&rho, 500, 2).unwrap();
        let refs: Vec<&CountRecord> = recs.iter().collect();
        let obj = Objective::new(&refs);
        let t = params_from_t(&reverse_cholesky(random_mixed(&mut rng).op()));
        let grad = params_gradient(&obj, &t);
        let f = |t: &Params| (obj.loglik(&rho_from_params(t)) - obj.saturated) * obj.scale;
        let h = 1e-6;
        for k in 0..16 {
            let mut up = t;
            up[k] += h;
            let mut down = t;
            down[k] -= h;
            let fd = (f(&up) - f(&down)) / (2.0 * h);
            assert!((fd - grad[k]).abs() <= 1e-6 * (1.0 + fd.abs()), "param {k}: fd {fd} vs {}", grad[k]);
        }
    }

    #[test]
    fn factored_likelihood_matches_density_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let recs = simulate_counts(&random_mixed(&mut rng), 800, 4).unwrap();
        let refs: Vec<&CountRecord> = recs.iter().collect();
        let obj = Objective::new(&refs);
        for _ in 0..5 {
            let t = params_from_t(&reverse_cholesky(random_mixed(&mut rng).op())) * 3.0;
            let dense = (obj.loglik(&rho_from_params(&t)) - obj.saturated) * obj.scale;
            assert!((obj.value(&t) - dense).abs() <= 1e-12 * (1.0 + dense.abs()));
        }
    }

    #[test]
    fn mle_exact_for_noiseless_pure_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let psi = random_pure(&mut rng);
            let truth = density_of(&psi);
            let fit = reconstruct_mle(&expected_counts(&truth, 1e4)).unwrap();
            let f = fidelity(&fit.rho, &truth);
            assert!(f >= 1.0 - 1e-8, "fidelity {f}");
        }
    }

    #[test]
    fn mle_history_is_monotone_and_physical() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for seed in 0..5 {
            let truth = density_of(&random_pure(&mut rng));
            let fit = reconstruct_mle(&simulate_counts(&truth, 300, seed).unwrap()).unwrap();
            for w in fit.history.windows(2) {
                assert!(w[1] >= w[0], "log-likelihood decreased: {} -> {}", w[0], w[1]);
            }
            let eig = hermitian_eig(fit.rho.op()).unwrap();
            assert!(eig.values[3] >= -1e-10);
            assert_abs_diff_eq!(fit.rho.op().trace().re, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn mle_with_one_nonzero_setting() {
        let mut records = expected_counts(&DensityMatrix::maximally_mixed(), 100.0);
        for (k, r) in records.iter_mut().enumerate() {
            r.counts = if k == 5 { 40.0 } else { 0.0 };
        }
        let fit = reconstruct_mle(&records).unwrap();
        let eig = hermitian_eig(fit.rho.op()).unwrap();
        assert!(eig.values[3] >= -1e-10);
        assert_abs_diff_eq!(fit.rho.op().trace().re, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn mle_all_zero_counts_is_maximally_mixed() {
        let mut records = expected_counts(&DensityMatrix::maximally_mixed(), 100.0);
        for r in &mut records {
            r.counts = 0.0;
        }
        let fit = reconstruct_mle(&records).unwrap();
        assert_eq!(fit.rho, DensityMatrix::maximally_mixed());
        assert!(fit.warning.is_some());
        assert!(!fit.converged);
    }

    #[test]
    fn fidelity_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho = random_mixed(&mut rng);
        assert_abs_diff_eq!(fidelity(&rho, &rho), 1.0, epsilon = 1e-9);
        let a = density_of(&PureState::new(CVector::basis(4, 0).unwrap()).unwrap());
        let b = density_of(&PureState::new(CVector::basis(4, 3).unwrap()).unwrap());
        assert_abs_diff_eq!(fidelity(&a, &b), 0.0, epsilon = 1e-12);
        let psi = random_pure(&mut rng);
        let mixed = DensityMatrix::maximally_mixed();
        assert_abs_diff_eq!(fidelity(&mixed, &density_of(&psi)), 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(fidelity(&rho, &density_of(&psi)), rho.expectation(&psi), epsilon = 1e-9);
        assert_abs_diff_eq!(fidelity(&density_of(&psi), &rho), rho.expectation(&psi), epsilon = 1e-9);
    }

    #[test]
    fn counts_csv_round_trip() {
        let rho = DensityMatrix::maximally_mixed();
        let recs = simulate_counts(&rho, 1000, 3).unwrap();
        let mut buf = Vec::new();
        write_counts_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("setting,counts,exposure\nHH,"));
        assert_eq!(read_counts_csv(&buf[..]).unwrap(), recs);
        assert!(read_counts_csv(&b"a,b\n"[..]).is_err());
    }
}

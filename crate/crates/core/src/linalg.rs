//! Small dense complex linear algebra for the path ⊗ polarization space.
//!
//! Only 2- and 4-dimensional objects are supported. Four-dimensional objects
//! use the basis order `|a,h⟩, |a,v⟩, |b,h⟩, |b,v⟩` everywhere: the path qubit
//! is the first tensor factor, the polarization qubit the second.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Tolerance on the Hermitian asymmetry accepted by [`hermitian_eig`].
pub const HERMITIAN_TOL: f64 = 1e-10;

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 64;

fn check_dim(dim: usize) -> Result<()> {
    if dim == 2 || dim == 4 {
        Ok(())
    } else {
        Err(Error::Dimension(format!("expected dimension 2 or 4, got {dim}")))
    }
}

fn check_finite(entries: &[Complex64]) -> Result<()> {
    if entries.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidParameter("non-finite entry".into()))
    }
}

/// Complex column vector of dimension 2 or 4.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct CVector {
    entries: Vec<Complex64>,
}

impl CVector {
    pub fn new(entries: Vec<Complex64>) -> Result<Self> {
        check_dim(entries.len())?;
        check_finite(&entries)?;
        Ok(Self { entries })
    }

    pub fn from_real(entries: &[f64]) -> Result<Self> {
        Self::new(entries.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    /// Standard basis vector `e_index`.
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        check_dim(dim)?;
        if index >= dim {
            return Err(Error::Dimension(format!("basis index {index} out of range for dim {dim}")));
        }
        let mut entries = vec![ZERO; dim];
        entries[index] = ONE;
        Ok(Self { entries })
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `⟨self|other⟩`, antilinear in `self`.
    pub fn inner(&self, other: &CVector) -> Result<Complex64> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension(format!("inner product of dims {} and {}", self.dim(), other.dim())));
        }
        Ok(self.entries.iter().zip(&other.entries).map(|(a, b)| a.conj() * b).sum())
    }

    pub fn scale(&self, factor: Complex64) -> CVector {
        CVector { entries: self.entries.iter().map(|z| z * factor).collect() }
    }

    pub fn normalized(&self) -> Result<CVector> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::NotNormalized { norm: 0.0 });
        }
        Ok(self.scale(Complex64::new(1.0 / n, 0.0)))
    }

    /// `|self⟩⟨other|`.
    pub fn outer(&self, other: &CVector) -> Result<CMatrix> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension(format!("outer product of dims {} and {}", self.dim(), other.dim())));
        }
        let n = self.dim();
        let mut out = CMatrix::zeros(n)?;
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = self.entries[i] * other.entries[j].conj();
            }
        }
        Ok(out)
    }

    pub fn max_abs_diff(&self, other: &CVector) -> f64 {
        if self.dim() != other.dim() {
            return f64::INFINITY;
        }
        self.entries.iter().zip(&other.entries).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }
}

impl Index<usize> for CVector {
    type Output = Complex64;
    fn index(&self, i: usize) -> &Complex64 {
        &self.entries[i]
    }
}

impl TryFrom<Vec<[f64; 2]>> for CVector {
    type Error = Error;
    fn try_from(pairs: Vec<[f64; 2]>) -> Result<Self> {
        Self::new(pairs.into_iter().map(|[re, im]| Complex64::new(re, im)).collect())
    }
}

impl From<CVector> for Vec<[f64; 2]> {
    fn from(v: CVector) -> Self {
        v.entries.iter().map(|z| [z.re, z.im]).collect()
    }
}

/// Square complex matrix of dimension 2×2 or 4×4, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<[f64; 2]>>", into = "Vec<Vec<[f64; 2]>>")]
pub struct CMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self { dim, data: vec![ZERO; dim * dim] })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        let mut m = Self::zeros(dim)?;
        for i in 0..dim {
            m[(i, i)] = ONE;
        }
        Ok(m)
    }

    pub fn from_row_major(dim: usize, data: Vec<Complex64>) -> Result<Self> {
        check_dim(dim)?;
        if data.len() != dim * dim {
            return Err(Error::Dimension(format!("{} entries for a {dim}x{dim} matrix", data.len())));
        }
        check_finite(&data)?;
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[&[Complex64]]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Dimension("matrix rows are not square".into()));
        }
        Self::from_row_major(dim, rows.iter().flat_map(|r| r.iter().copied()).collect())
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Dimension("matrix rows are not square".into()));
        }
        Self::from_row_major(dim, rows.iter().flat_map(|r| r.iter().map(|&x| Complex64::new(x, 0.0))).collect())
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        let mut m = Self::zeros(values.len())?;
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = Complex64::new(v, 0.0);
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row_major(&self) -> &[Complex64] {
        &self.data
    }

    pub fn adjoint(&self) -> CMatrix {
        let n = self.dim;
        let mut out = self.clone();
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = self[(j, i)].conj();
            }
        }
        out
    }

    /// Elementwise complex conjugate.
    pub fn conj(&self) -> CMatrix {
        CMatrix { dim: self.dim, data: self.data.iter().map(|z| z.conj()).collect() }
    }

    pub fn scale(&self, factor: Complex64) -> CMatrix {
        CMatrix { dim: self.dim, data: self.data.iter().map(|z| z * factor).collect() }
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn apply(&self, v: &CVector) -> Result<CVector> {
        if v.dim() != self.dim {
            return Err(Error::Dimension(format!("{}x{} matrix applied to dim {}", self.dim, self.dim, v.dim())));
        }
        let n = self.dim;
        let entries = (0..n).map(|i| (0..n).map(|j| self[(i, j)] * v[j]).sum()).collect();
        Ok(CVector { entries })
    }

    pub fn matmul(&self, rhs: &CMatrix) -> Result<CMatrix> {
        if rhs.dim != self.dim {
            return Err(Error::Dimension(format!("product of {}x{} and {}x{}", self.dim, self.dim, rhs.dim, rhs.dim)));
        }
        let n = self.dim;
        let mut out = CMatrix { dim: n, data: vec![ZERO; n * n] };
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == ZERO {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs[(k, j)];
                }
            }
        }
        Ok(out)
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        if self.dim != other.dim {
            return f64::INFINITY;
        }
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// `max |m_ij - conj(m_ji)|`.
    pub fn hermitian_asymmetry(&self) -> f64 {
        let n = self.dim;
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Averages `m` with its adjoint, removing rounding-level asymmetry.
    pub fn hermitian_part(&self) -> CMatrix {
        let adj = self.adjoint();
        let mut out = self.clone();
        for (o, a) in out.data.iter_mut().zip(&adj.data) {
            *o = (*o + a) * 0.5;
        }
        out
    }

    /// `tr(self · other)` without forming the product.
    pub fn trace_product(&self, other: &CMatrix) -> Complex64 {
        let n = self.dim;
        let mut acc = ZERO;
        for i in 0..n {
            for k in 0..n {
                acc += self[(i, k)] * other[(k, i)];
            }
        }
        acc
    }

    fn zip_with(&self, rhs: &CMatrix, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<CMatrix> {
        if rhs.dim != self.dim {
            return Err(Error::Dimension(format!("elementwise op on dims {} and {}", self.dim, rhs.dim)));
        }
        Ok(CMatrix { dim: self.dim, data: self.data.iter().zip(&rhs.data).map(|(a, b)| f(*a, *b)).collect() })
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.dim + j]
    }
}

// The operator impls panic on dimension mismatch; use `matmul` for a checked product.
impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.matmul(rhs).expect("matrix product dimension mismatch")
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        self.zip_with(rhs, |a, b| a + b).expect("matrix sum dimension mismatch")
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        self.zip_with(rhs, |a, b| a - b).expect("matrix difference dimension mismatch")
    }
}

impl fmt::Display for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.dim {
            let row: Vec<String> = (0..self.dim)
                .map(|j| {
                    let z = self[(i, j)];
                    format!("{:+.4}{:+.4}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "[{}]", row.join(", "))?;
        }
        Ok(())
    }
}

impl TryFrom<Vec<Vec<[f64; 2]>>> for CMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<[f64; 2]>>) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Dimension("matrix rows are not square".into()));
        }
        Self::from_row_major(dim, rows.into_iter().flatten().map(|[re, im]| Complex64::new(re, im)).collect())
    }
}

impl From<CMatrix> for Vec<Vec<[f64; 2]>> {
    fn from(m: CMatrix) -> Self {
        m.data.chunks(m.dim).map(|row| row.iter().map(|z| [z.re, z.im]).collect()).collect()
    }
}

/// Kronecker product of two-dimensional factors.
pub trait Kronecker: Sized {
    fn kron(&self, rhs: &Self) -> Result<Self>;
}

impl Kronecker for CVector {
    fn kron(&self, rhs: &CVector) -> Result<CVector> {
        if self.dim() != 2 || rhs.dim() != 2 {
            return Err(Error::Dimension(format!("tensor needs 2-dim factors, got {} and {}", self.dim(), rhs.dim())));
        }
        let entries = self.entries.iter().flat_map(|a| rhs.entries.iter().map(move |b| a * b)).collect();
        Ok(CVector { entries })
    }
}

impl Kronecker for CMatrix {
    fn kron(&self, rhs: &CMatrix) -> Result<CMatrix> {
        if self.dim != 2 || rhs.dim != 2 {
            return Err(Error::Dimension(format!(
                "tensor needs 2x2 factors, got {0}x{0} and {1}x{1}",
                self.dim, rhs.dim
            )));
        }
        let mut out = CMatrix::zeros(4)?;
        for (i, j, k, l) in index_quads() {
            out[(2 * i + k, 2 * j + l)] = self[(i, j)] * rhs[(k, l)];
        }
        Ok(out)
    }
}

fn index_quads() -> impl Iterator<Item = (usize, usize, usize, usize)> {
    (0..2).flat_map(|i| (0..2).flat_map(move |j| (0..2).flat_map(move |k| (0..2).map(move |l| (i, j, k, l)))))
}

/// `a ⊗ b` with the path factor first.
pub fn tensor<T: Kronecker>(a: &T, b: &T) -> Result<T> {
    a.kron(b)
}

/// Tensor factor of the 4-dimensional space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subsystem {
    Path,
    Polarization,
}

/// Reduced operator on `keep`, tracing out the other factor.
pub fn partial_trace(rho: &CMatrix, keep: Subsystem) -> Result<CMatrix> {
    if rho.dim() != 4 {
        return Err(Error::Dimension(format!("partial trace needs a 4x4 operator, got {0}x{0}", rho.dim())));
    }
    let mut out = CMatrix::zeros(2)?;
    for i in 0..2 {
        for j in 0..2 {
            out[(i, j)] = match keep {
                Subsystem::Path => (0..2).map(|k| rho[(2 * i + k, 2 * j + k)]).sum(),
                Subsystem::Polarization => (0..2).map(|k| rho[(2 * k + i, 2 * k + j)]).sum(),
            };
        }
    }
    Ok(out)
}

/// Spectral decomposition of a Hermitian matrix, eigenvalues descending.
#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Vec<CVector>,
}

impl Eigen {
    /// `Σ f(λᵢ) vᵢvᵢ†`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let n = self.values.len();
        let mut out = CMatrix::zeros(n).expect("eigen dimension already validated");
        for (&lambda, v) in self.values.iter().zip(&self.vectors) {
            let w = f(lambda);
            if w == 0.0 {
                continue;
            }
            for i in 0..n {
                for j in 0..n {
                    out[(i, j)] += v[i] * v[j].conj() * w;
                }
            }
        }
        out
    }

    pub fn reconstruct(&self) -> CMatrix {
        self.map(|x| x)
    }
}

/// Eigendecomposition by cyclic complex Jacobi rotations.
pub fn hermitian_eig(m: &CMatrix) -> Result<Eigen> {
    let asymmetry = m.hermitian_asymmetry();
    if asymmetry > HERMITIAN_TOL {
        return Err(Error::NotHermitian { asymmetry });
    }
    let n = m.dim();
    let mut a = m.hermitian_part();
    let mut v = CMatrix::identity(n)?;
    let scale = a.row_major().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(1.0);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|ij| a[ij].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= JACOBI_TOL * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let mag = apq.norm();
                if mag == 0.0 {
                    continue;
                }
                // Phase on column q makes the pivot real; a real Givens rotation then zeroes it.
                let phase = apq / mag;
                let alpha = a[(p, p)].re;
                let gamma = a[(q, q)].re;
                let angle = 0.5 * (2.0 * mag).atan2(gamma - alpha);
                let (s, c) = angle.sin_cos();
                let conj_phase = phase.conj();
                // Rotation J: column p = (c, -s e^{-iφ}), column q = (s, c e^{-iφ}) in rows (p, q).
                let jpp = Complex64::new(c, 0.0);
                let jqp = conj_phase * (-s);
                let jpq = Complex64::new(s, 0.0);
                let jqq = conj_phase * c;

                // A ← A J
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * jpp + akq * jqp;
                    a[(k, q)] = akp * jpq + akq * jqq;
                }
                // A ← J† A
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = jpp.conj() * apk + jqp.conj() * aqk;
                    a[(q, k)] = jpq.conj() * apk + jqq.conj() * aqk;
                }
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * jpp + vkq * jqp;
                    v[(k, q)] = vkp * jpq + vkq * jqq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[(y, y)].re.total_cmp(&a[(x, x)].re));
    let values = order.iter().map(|&k| a[(k, k)].re).collect();
    let vectors = order.iter().map(|&k| CVector { entries: (0..n).map(|i| v[(i, k)]).collect() }).collect();
    Ok(Eigen { values, vectors })
}

/// Singular values in descending order.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    let n = m.dim();
    let dense = nalgebra::DMatrix::<Complex64>::from_fn(n, n, |i, j| m[(i, j)]);
    let mut sv: Vec<f64> = dense.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Pauli matrices in the `(|0⟩, |1⟩)` basis.
pub fn pauli_x() -> CMatrix {
    CMatrix::from_rows(&[&[ZERO, ONE], &[ONE, ZERO]]).expect("2x2")
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_rows(&[&[ZERO, -I], &[I, ZERO]]).expect("2x2")
}

pub fn pauli_z() -> CMatrix {
    CMatrix::diagonal(&[1.0, -1.0]).expect("2x2")
}

//! Dense hermitian linear algebra on small matrices over the reals and the complex numbers.
//!
//! Everything is stored as row-major `Complex64`; matrices tagged [`Field::Real`] keep
//! their imaginary parts at exactly zero. The sizes used by the walks are tiny (q ≤ 8),
//! so the eigensolver is a cyclic complex Jacobi iteration.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Relative tolerance below which negative eigenvalues are clamped to zero.
pub const EPS_PSD: f64 = 1e-10;

const JACOBI_MAX_SWEEPS: usize = 64;

/// Scalar field of the matrix entries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    #[default]
    Real,
    Complex,
}

impl Field {
    /// Real dimension `d` of the field.
    pub fn dim(self) -> usize {
        match self {
            Field::Real => 1,
            Field::Complex => 2,
        }
    }

    /// The wider of two fields.
    pub fn join(self, other: Field) -> Field {
        if self == Field::Complex || other == Field::Complex {
            Field::Complex
        } else {
            Field::Real
        }
    }

    fn project(self, z: C64) -> C64 {
        match self {
            Field::Real => C64::new(z.re, 0.0),
            Field::Complex => z,
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Field::Real => f.write_str("real"),
            Field::Complex => f.write_str("complex"),
        }
    }
}

/// A dense `rows × cols` matrix over [`Field`].
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    field: Field,
    data: Vec<C64>,
}

/// Element of M_{p,q}: increments and partial sums of the group-case walks.
pub type RectMatrix = Matrix;

impl Matrix {
    pub fn zeros(rows: usize, cols: usize, field: Field) -> Self {
        Matrix {
            rows,
            cols,
            field,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize, field: Field) -> Self {
        let mut m = Matrix::zeros(n, n, field);
        for i in 0..n {
            m.data[i * n + i] = C64::new(1.0, 0.0);
        }
        m
    }

    /// Builds a matrix entry by entry. Imaginary parts are dropped for [`Field::Real`].
    pub fn from_fn(rows: usize, cols: usize, field: Field, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(field.project(f(i, j)));
            }
        }
        Matrix { rows, cols, field, data }
    }

    /// Builds a matrix from row-major entries.
    pub fn from_vec(rows: usize, cols: usize, field: Field, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        let data = data.into_iter().map(|z| field.project(z)).collect();
        Ok(Matrix { rows, cols, field, data })
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::ShapeMismatch("ragged rows".into()));
        }
        Ok(Matrix::from_fn(r, c, Field::Real, |i, j| C64::new(rows[i][j], 0.0)))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, z: C64) {
        self.data[i * self.cols + j] = self.field.project(z);
    }

    pub fn adjoint(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, self.field, |i, j| self.get(j, i).conj())
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let field = self.field.join(other.field);
        let mut out = Matrix::zeros(self.rows, other.cols, field);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                let row = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }

    /// `self^* · other` without materializing the adjoint.
    pub fn adjoint_matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows, "adjoint_matmul dimension mismatch");
        let field = self.field.join(other.field);
        let mut out = Matrix::zeros(self.cols, other.cols, field);
        for k in 0..self.rows {
            let arow = &self.data[k * self.cols..(k + 1) * self.cols];
            let brow = &other.data[k * other.cols..(k + 1) * other.cols];
            for (i, a) in arow.iter().enumerate() {
                let a = a.conj();
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(brow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            field: self.field,
            data: self.data.iter().map(|z| z * c).collect(),
        }
    }

    /// `self += c · other`.
    pub fn add_scaled(&mut self, other: &Matrix, c: f64) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.field = self.field.join(other.field);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * c;
        }
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(C64, C64) -> C64) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            field: self.field.join(other.field),
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect(),
        }
    }

    pub fn frob_norm(&self) -> f64 {
        self.frob_norm_sq().sqrt()
    }

    pub fn frob_norm_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// The real scalar product `Re tr(self^* other)`.
    pub fn real_inner(&self, other: &Matrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a.conj() * b).re).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// A hermitian q×q matrix; construction symmetrizes `A ← (A + A^*)/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix {
    m: Matrix,
}

impl HermitianMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if m.rows != m.cols || m.rows == 0 {
            return Err(Error::ShapeMismatch(format!(
                "hermitian matrix must be square and non-empty, got {}x{}",
                m.rows, m.cols
            )));
        }
        Ok(Self::symmetrized(m))
    }

    fn symmetrized(mut m: Matrix) -> Self {
        let n = m.rows;
        for i in 0..n {
            let d = m.data[i * n + i].re;
            m.data[i * n + i] = C64::new(d, 0.0);
            for j in (i + 1)..n {
                let a = m.data[i * n + j];
                let b = m.data[j * n + i];
                let avg = (a + b.conj()) * 0.5;
                m.data[i * n + j] = avg;
                m.data[j * n + i] = avg.conj();
            }
        }
        HermitianMatrix { m }
    }

    pub fn zeros(q: usize, field: Field) -> Self {
        HermitianMatrix {
            m: Matrix::zeros(q, q, field),
        }
    }

    pub fn identity(q: usize, field: Field) -> Self {
        HermitianMatrix {
            m: Matrix::identity(q, field),
        }
    }

    pub fn diag(values: &[f64], field: Field) -> Self {
        let q = values.len();
        HermitianMatrix {
            m: Matrix::from_fn(q, q, field, |i, j| {
                if i == j {
                    C64::new(values[i], 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            }),
        }
    }

    pub fn scalar(x: f64) -> Self {
        Self::diag(&[x], Field::Real)
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Matrix::from_real_rows(rows)?)
    }

    pub fn q(&self) -> usize {
        self.m.rows
    }

    pub fn field(&self) -> Field {
        self.m.field
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.m.get(i, j)
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.m
    }

    pub fn into_matrix(self) -> Matrix {
        self.m
    }

    /// The (0,0) entry; the value itself when q = 1.
    pub fn first(&self) -> f64 {
        self.m.data[0].re
    }

    pub fn square(&self) -> HermitianMatrix {
        Self::symmetrized(self.m.matmul(&self.m))
    }

    pub fn add(&self, other: &HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix { m: self.m.add(&other.m) }
    }

    pub fn sub(&self, other: &HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix { m: self.m.sub(&other.m) }
    }

    pub fn scale(&self, c: f64) -> HermitianMatrix {
        HermitianMatrix { m: self.m.scale(c) }
    }

    pub fn trace(&self) -> f64 {
        (0..self.q()).map(|i| self.m.get(i, i).re).sum()
    }

    pub fn frob_norm(&self) -> f64 {
        self.m.frob_norm()
    }

    pub fn is_zero(&self) -> bool {
        self.m.data.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }
}

/// Element of the cone Π_q of positive semidefinite matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct PsdMatrix {
    h: HermitianMatrix,
}

impl PsdMatrix {
    /// Validates `h` against the cone, clamping tiny negative eigenvalues.
    pub fn new(h: HermitianMatrix) -> Result<Self> {
        clamp_psd(&h, EPS_PSD)
    }

    pub fn zeros(q: usize, field: Field) -> Self {
        PsdMatrix {
            h: HermitianMatrix::zeros(q, field),
        }
    }

    pub fn identity(q: usize, field: Field) -> Self {
        PsdMatrix {
            h: HermitianMatrix::identity(q, field),
        }
    }

    pub fn diag(values: &[f64], field: Field) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::ConeViolation {
                min_eigenvalue: *v,
                bound: 0.0,
            });
        }
        Ok(PsdMatrix {
            h: HermitianMatrix::diag(values, field),
        })
    }

    pub fn scalar(x: f64) -> Result<Self> {
        Self::diag(&[x], Field::Real)
    }

    /// Wraps a matrix already known to lie in the cone (e.g. built from a spectral
    /// decomposition with nonnegative eigenvalues).
    pub(crate) fn from_herm_unchecked(h: HermitianMatrix) -> Self {
        PsdMatrix { h }
    }

    pub fn as_herm(&self) -> &HermitianMatrix {
        &self.h
    }

    pub fn into_herm(self) -> HermitianMatrix {
        self.h
    }

    pub fn q(&self) -> usize {
        self.h.q()
    }

    pub fn field(&self) -> Field {
        self.h.field()
    }

    pub fn square(&self) -> HermitianMatrix {
        self.h.square()
    }

    pub fn frob_norm(&self) -> f64 {
        self.h.frob_norm()
    }

    pub fn is_zero(&self) -> bool {
        self.h.is_zero()
    }
}

/// Spectral decomposition `a = U diag(values) U^*`, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl Eigen {
    /// `U diag(f(λ)) U^*`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> HermitianMatrix {
        let n = self.values.len();
        let u = &self.vectors;
        let mut out = Matrix::zeros(n, n, u.field());
        for (k, &lambda) in self.values.iter().enumerate() {
            let w = f(lambda);
            if w == 0.0 {
                continue;
            }
            for i in 0..n {
                let uik = u.get(i, k) * w;
                for j in 0..n {
                    out.data[i * n + j] += uik * u.get(j, k).conj();
                }
            }
        }
        HermitianMatrix::symmetrized(out)
    }
}

/// Eigendecomposition of a hermitian matrix by cyclic Jacobi rotations.
///
/// Eigenvectors are phase-normalized so that their largest-modulus component is real
/// and positive; equal eigenvalues are ordered lexicographically by eigenvector.
pub fn eig_herm(a: &HermitianMatrix) -> Result<Eigen> {
    let n = a.q();
    let field = a.field();
    let mut m = a.m.data.clone();
    let mut v = Matrix::identity(n, field).data;
    let scale = a.frob_norm();

    if n > 1 && scale > 0.0 {
        let mut converged = false;
        for _ in 0..JACOBI_MAX_SWEEPS {
            let off: f64 = (0..n)
                .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
                .map(|(i, j)| m[i * n + j].norm_sqr())
                .sum();
            if off.sqrt() <= 1e-15 * scale {
                converged = true;
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    rotate(&mut m, &mut v, n, p, q);
                }
            }
        }
        if !converged {
            return Err(Error::numerical(
                "eig_herm",
                format!("Jacobi did not converge after {JACOBI_MAX_SWEEPS} sweeps for {:?}", a.m.data),
            ));
        }
    }

    let values: Vec<f64> = (0..n).map(|i| m[i * n + i].re).collect();
    if values.iter().any(|x| !x.is_finite()) {
        return Err(Error::numerical("eig_herm", "non-finite eigenvalue"));
    }

    let mut columns: Vec<(f64, Vec<C64>)> = (0..n)
        .map(|k| {
            let mut col: Vec<C64> = (0..n).map(|i| v[i * n + k]).collect();
            normalize_phase(&mut col, field);
            (values[k], col)
        })
        .collect();
    columns.sort_by(|(la, ca), (lb, cb)| {
        la.total_cmp(lb).then_with(|| {
            ca.iter()
                .zip(cb)
                .map(|(x, y)| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });

    let values = columns.iter().map(|(l, _)| *l).collect();
    let vectors = Matrix::from_fn(n, n, field, |i, k| columns[k].1[i]);
    Ok(Eigen { values, vectors })
}

fn rotate(m: &mut [C64], v: &mut [C64], n: usize, p: usize, q: usize) {
    let b = m[p * n + q];
    let g = b.norm();
    if g == 0.0 {
        return;
    }
    let phase = b / g;
    let alpha = m[p * n + p].re;
    let beta = m[q * n + q].re;
    let theta = (beta - alpha) / (2.0 * g);
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        let t = 1.0 / (theta.abs() + (theta * theta + 1.0).sqrt());
        if theta < 0.0 {
            -t
        } else {
            t
        }
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let ph = phase.conj();
    // U = diag(1, conj(phase)) · [[c, s], [-s, c]]
    let u00 = C64::new(c, 0.0);
    let u01 = C64::new(s, 0.0);
    let u10 = ph * (-s);
    let u11 = ph * c;

    for k in 0..n {
        let akp = m[k * n + p];
        let akq = m[k * n + q];
        m[k * n + p] = akp * u00 + akq * u10;
        m[k * n + q] = akp * u01 + akq * u11;
    }
    for k in 0..n {
        let apk = m[p * n + k];
        let aqk = m[q * n + k];
        m[p * n + k] = u00.conj() * apk + u10.conj() * aqk;
        m[q * n + k] = u01.conj() * apk + u11.conj() * aqk;
    }
    m[p * n + q] = C64::new(0.0, 0.0);
    m[q * n + p] = C64::new(0.0, 0.0);
    m[p * n + p].im = 0.0;
    m[q * n + q].im = 0.0;
    for k in 0..n {
        let vkp = v[k * n + p];
        let vkq = v[k * n + q];
        v[k * n + p] = vkp * u00 + vkq * u10;
        v[k * n + q] = vkp * u01 + vkq * u11;
    }
}

fn normalize_phase(col: &mut [C64], field: Field) {
    let max = col.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    let pivot = col
        .iter()
        .position(|z| z.norm() >= max * (1.0 - 1e-12))
        .expect("max modulus component");
    let z = col[pivot];
    let rot = z.conj() / z.norm();
    for x in col.iter_mut() {
        *x = field.project(*x * rot);
    }
}

/// Projects a hermitian matrix onto the cone, failing when an eigenvalue lies below
/// `-tol·(1 + ‖a‖_F)`. Matrices already in the cone are returned unchanged.
pub fn clamp_psd(a: &HermitianMatrix, tol: f64) -> Result<PsdMatrix> {
    if a.q() == 1 {
        let x = a.first();
        let bound = tol * (1.0 + x.abs());
        return if !x.is_finite() {
            Err(Error::numerical("clamp_psd", "non-finite entry"))
        } else if x >= 0.0 {
            Ok(PsdMatrix::from_herm_unchecked(a.clone()))
        } else if x >= -bound {
            Ok(PsdMatrix::from_herm_unchecked(HermitianMatrix::diag(&[0.0], a.field())))
        } else {
            Err(Error::ConeViolation {
                min_eigenvalue: x,
                bound,
            })
        };
    }
    if !a.m.is_finite() {
        return Err(Error::numerical("clamp_psd", "non-finite entry"));
    }
    let eig = eig_herm(a)?;
    let min = eig.values[0];
    let bound = tol * (1.0 + a.frob_norm());
    if min >= 0.0 {
        return Ok(PsdMatrix::from_herm_unchecked(a.clone()));
    }
    if min < -bound {
        return Err(Error::ConeViolation {
            min_eigenvalue: min,
            bound,
        });
    }
    Ok(PsdMatrix::from_herm_unchecked(eig.reconstruct_with(|l| l.max(0.0))))
}

/// The positive semidefinite square root.
pub fn psd_sqrt(a: &PsdMatrix) -> Result<PsdMatrix> {
    if a.q() == 1 {
        return Ok(PsdMatrix::from_herm_unchecked(HermitianMatrix::diag(
            &[a.h.first().max(0.0).sqrt()],
            a.field(),
        )));
    }
    if a.is_zero() {
        return Ok(a.clone());
    }
    let eig = eig_herm(&a.h)?;
    Ok(PsdMatrix::from_herm_unchecked(eig.reconstruct_with(|l| l.max(0.0).sqrt())))
}

/// Square root of a hermitian matrix that is PSD up to rounding.
pub fn sqrt_clamped(a: &HermitianMatrix) -> Result<PsdMatrix> {
    psd_sqrt(&clamp_psd(a, EPS_PSD)?)
}

/// Inverse square root of a positive definite matrix.
pub fn inv_sqrt_pd(a: &HermitianMatrix) -> Result<HermitianMatrix> {
    let eig = eig_herm(a)?;
    let max = eig.values.last().copied().unwrap_or(0.0);
    if !(eig.values[0] > 1e-14 * max.max(f64::MIN_POSITIVE)) {
        return Err(Error::numerical(
            "inv_sqrt_pd",
            format!("matrix not positive definite (min eigenvalue {:e})", eig.values[0]),
        ));
    }
    Ok(eig.reconstruct_with(|l| 1.0 / l.sqrt()))
}

pub fn frob_norm(a: &HermitianMatrix) -> f64 {
    a.frob_norm()
}

pub fn trace(a: &HermitianMatrix) -> f64 {
    a.trace()
}

/// Determinant as the product of eigenvalues.
pub fn det_herm(a: &HermitianMatrix) -> Result<f64> {
    if a.q() == 1 {
        return Ok(a.first());
    }
    Ok(eig_herm(a)?.values.iter().product())
}

/// Cholesky-based `ln det` of a hermitian matrix; `None` unless strictly positive definite.
pub(crate) fn logdet_pd(a: &Matrix) -> Option<f64> {
    let n = a.rows;
    let mut l = vec![C64::new(0.0, 0.0); n * n];
    let mut logdet = 0.0;
    for j in 0..n {
        let mut d = a.get(j, j).re;
        for k in 0..j {
            d -= l[j * n + k].norm_sqr();
        }
        if !(d > 0.0) {
            return None;
        }
        let ljj = d.sqrt();
        logdet += 2.0 * ljj.ln();
        l[j * n + j] = C64::new(ljj, 0.0);
        for i in (j + 1)..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k].conj();
            }
            l[i * n + j] = s / ljj;
        }
    }
    Some(logdet)
}

/// Orthonormal coordinates of a hermitian matrix.
///
/// Layout: the q diagonal entries, then `√2·Re a_ij` for i < j in row-major order, then
/// (complex field only) `√2·Im a_ij` in the same order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HermVector {
    pub values: Vec<f64>,
}

impl HermVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn dot(&self, other: &HermVector) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

/// Dimension of H_q as a real vector space: `d·q(q−1)/2 + q`.
pub fn herm_dim(q: usize, field: Field) -> usize {
    field.dim() * q * (q - 1) / 2 + q
}

pub fn vectorize_herm(a: &HermitianMatrix) -> HermVector {
    let q = a.q();
    let mut values = Vec::with_capacity(herm_dim(q, a.field()));
    for i in 0..q {
        values.push(a.get(i, i).re);
    }
    let s2 = std::f64::consts::SQRT_2;
    for i in 0..q {
        for j in (i + 1)..q {
            values.push(s2 * a.get(i, j).re);
        }
    }
    if a.field() == Field::Complex {
        for i in 0..q {
            for j in (i + 1)..q {
                values.push(s2 * a.get(i, j).im);
            }
        }
    }
    HermVector { values }
}

pub fn devectorize_herm(v: &HermVector, q: usize, field: Field) -> Result<HermitianMatrix> {
    let dim = herm_dim(q, field);
    if v.dim() != dim {
        return Err(Error::ShapeMismatch(format!(
            "vector of length {} for H_{q} over {field} (dimension {dim})",
            v.dim()
        )));
    }
    let mut m = Matrix::zeros(q, q, field);
    for i in 0..q {
        m.set(i, i, C64::new(v.values[i], 0.0));
    }
    let inv = std::f64::consts::FRAC_1_SQRT_2;
    let npairs = q * (q - 1) / 2;
    let mut k = 0;
    for i in 0..q {
        for j in (i + 1)..q {
            let re = v.values[q + k] * inv;
            let im = if field == Field::Complex {
                v.values[q + npairs + k] * inv
            } else {
                0.0
            };
            m.set(i, j, C64::new(re, im));
            m.set(j, i, C64::new(re, -im));
            k += 1;
        }
    }
    HermitianMatrix::new(m)
}

/// A dense real square matrix, used for covariances on [`HermVector`] coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl CovMatrix {
    pub fn zeros(dim: usize) -> Self {
        CovMatrix {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        CovMatrix { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, x: f64) {
        self.data[i * self.dim + j] = x;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim.max(1)).map(<[f64]>::to_vec).collect()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.dim).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Eigendecomposition via the hermitian solver.
    pub fn eigen(&self) -> Result<Eigen> {
        let m = Matrix::from_fn(self.dim, self.dim, Field::Real, |i, j| C64::new(self.get(i, j), 0.0));
        eig_herm(&HermitianMatrix::new(m)?)
    }

    pub fn max_abs_diff(&self, other: &CovMatrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

//! Dense complex linear algebra used by the estimators.
//!
//! Only what the pipeline needs: a row-major complex matrix, Hankel
//! construction, a cyclic Jacobi eigensolver for Hermitian matrices and the
//! Frobenius projection onto the positive semidefinite cone.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Maximum number of cyclic Jacobi sweeps.
pub const MAX_SWEEPS: usize = 100;

/// Convergence threshold on the off-diagonal Frobenius norm, relative to ‖A‖_F.
pub const OFF_DIAGONAL_TOL: f64 = 1e-12;

/// Elementwise Hermitian tolerance, relative to max(1, max |a_ij|).
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Dense row-major complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major data.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} elements for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Real diagonal matrix.
    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = Complex64::new(d, 0.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<Complex64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    /// Elementwise complex conjugate.
    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn conj(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn scale(&self, alpha: Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * alpha).collect(),
        }
    }

    pub fn matmul(&self, other: &CMatrix) -> Result<CMatrix> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = CMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        if self.cols != v.len() {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|r| self.row(r).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn sub(&self, other: &CMatrix) -> Result<CMatrix> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &CMatrix) -> Result<CMatrix> {
        self.zip_with(other, |a, b| a + b)
    }

    fn zip_with(
        &self,
        other: &CMatrix,
        f: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Result<CMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Dimension(format!(
                "shape {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Largest elementwise deviation |a_ij − conj(a_ji)|; infinite for non-square input.
    pub fn hermitian_asymmetry(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in i..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Replaces the matrix by (A + Aᴴ)/2.
    pub fn hermitian_part(&self) -> CMatrix {
        CMatrix::from_fn(self.rows, self.cols, |i, j| {
            (self[(i, j)] + self[(j, i)].conj()) * 0.5
        })
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = Complex64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Hankel matrix of shape (K−L+1) × L with entry (r, c) = h[r + c].
pub fn hankel(h: &[Complex64], l: usize) -> Result<CMatrix> {
    let k = h.len();
    if l < 1 || l > k {
        return Err(Error::Dimension(format!(
            "smoothing factor {l} outside 1..={k}"
        )));
    }
    Ok(CMatrix::from_fn(k - l + 1, l, |r, c| h[r + c]))
}

/// Eigenpairs of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    /// Real eigenvalues, sorted descending.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, in the order of `values`.
    pub vectors: CMatrix,
    /// Jacobi sweeps used.
    pub sweeps: usize,
}

impl EigenDecomposition {
    /// V Λ Vᴴ.
    pub fn reconstruct(&self) -> CMatrix {
        let n = self.values.len();
        let mut out = CMatrix::zeros(n, n);
        for (k, &lambda) in self.values.iter().enumerate() {
            for i in 0..n {
                let vi = self.vectors[(i, k)] * lambda;
                for j in 0..n {
                    out[(i, j)] += vi * self.vectors[(j, k)].conj();
                }
            }
        }
        out
    }
}

fn off_diagonal_norm(a: &CMatrix) -> f64 {
    let n = a.rows;
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += a[(i, j)].norm_sqr();
            }
        }
    }
    acc.sqrt()
}

/// Eigendecomposition of a Hermitian matrix by cyclic complex Jacobi rotations.
///
/// Each rotation first removes the phase of a_pq with a diagonal unitary and
/// then applies the real symmetric Jacobi rotation to the resulting 2×2 block.
pub fn eig_hermitian(a: &CMatrix) -> Result<EigenDecomposition> {
    check_hermitian(a)?;
    jacobi(a.hermitian_part(), CMatrix::identity(a.rows))
}

/// Same as [`eig_hermitian`], started from a unitary `basis` that already
/// nearly diagonalizes `a` (for example the eigenvectors of a nearby matrix).
/// Jacobi then runs on basisᴴ·A·basis and needs far fewer sweeps.
pub fn eig_hermitian_warm(a: &CMatrix, basis: &CMatrix) -> Result<EigenDecomposition> {
    check_hermitian(a)?;
    if basis.rows != a.rows || basis.cols != a.cols {
        return Err(Error::Dimension(format!(
            "{}x{} basis for a {}x{} matrix",
            basis.rows, basis.cols, a.rows, a.cols
        )));
    }
    let rotated = basis.adjoint().matmul(&a.hermitian_part())?.matmul(basis)?;
    jacobi(rotated.hermitian_part(), basis.clone())
}

fn check_hermitian(a: &CMatrix) -> Result<()> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "eigendecomposition of a {}x{} matrix",
            a.rows, a.cols
        )));
    }
    let asymmetry = a.hermitian_asymmetry();
    if asymmetry > HERMITIAN_TOL * a.max_abs().max(1.0) {
        return Err(Error::NotHermitian { asymmetry });
    }
    Ok(())
}

fn jacobi(m: CMatrix, v: CMatrix) -> Result<EigenDecomposition> {
    jacobi_with_tol(m, v, OFF_DIAGONAL_TOL)
}

/// Warm-started solve with a caller-chosen off-diagonal tolerance, for inner
/// loops that do not need full precision.
pub(crate) fn eig_hermitian_warm_tol(a: &CMatrix, basis: &CMatrix, tol: f64) -> Result<EigenDecomposition> {
    check_hermitian(a)?;
    let rotated = basis.adjoint().matmul(&a.hermitian_part())?.matmul(basis)?;
    jacobi_with_tol(rotated.hermitian_part(), basis.clone(), tol)
}

fn jacobi_with_tol(mut m: CMatrix, v: CMatrix, tol: f64) -> Result<EigenDecomposition> {
    let n = m.rows;
    for i in 0..n {
        m[(i, i)] = Complex64::new(m[(i, i)].re, 0.0);
    }
    let norm = m.frobenius_norm();
    let threshold = tol * norm;
    // Rotations act on columns of V; keeping Vᵀ makes them row operations.
    let mut vt = v.transpose();

    let mut sweeps = 0;
    let mut off = off_diagonal_norm(&m);
    while off > threshold {
        if sweeps == MAX_SWEEPS {
            return Err(Error::NoConvergence {
                sweeps,
                off_norm: off,
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut m, &mut vt, p, q);
            }
        }
        off = off_diagonal_norm(&m);
    }

    let raw: Vec<f64> = (0..n).map(|i| m[(i, i)].re).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps the original index order among ties.
    order.sort_by(|&i, &j| raw[j].partial_cmp(&raw[i]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| raw[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| vt[(order[c], r)]);
    Ok(EigenDecomposition {
        values,
        vectors,
        sweeps,
    })
}

fn rows_pq(data: &mut [Complex64], n: usize, p: usize, q: usize) -> (&mut [Complex64], &mut [Complex64]) {
    let (lo, hi) = data.split_at_mut(q * n);
    (&mut lo[p * n..(p + 1) * n], &mut hi[..n])
}

/// Annihilates m[p][q] with the unitary U = diag(1, e^{-iφ}) · R(θ) on the
/// (p, q) plane. `vt` holds the accumulated eigenvectors as rows.
#[inline]
fn rotate(m: &mut CMatrix, vt: &mut CMatrix, p: usize, q: usize) {
    let apq = m[(p, q)];
    let mag = apq.norm();
    if mag == 0.0 || !mag.is_finite() {
        return;
    }
    let app = m[(p, p)].re;
    let aqq = m[(q, q)].re;
    // Skip rotations that cannot change the diagonal in floating point.
    if mag < f64::EPSILON * 1e-3 * (app.abs() + aqq.abs()) {
        m[(p, q)] = Complex64::new(0.0, 0.0);
        m[(q, p)] = Complex64::new(0.0, 0.0);
        return;
    }
    let phase = apq / mag;
    let theta = (aqq - app) / (2.0 * mag);
    let t = if theta >= 0.0 {
        1.0 / (theta + (theta * theta + 1.0).sqrt())
    } else {
        -1.0 / (-theta + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let (ps, pc) = (phase * s, phase * c);
    let n = m.rows;

    // Rows p, q of Uᴴ A U off the (p, q) block equal rows of Uᴴ A; the
    // columns follow by Hermitian symmetry.
    {
        let (row_p, row_q) = rows_pq(&mut m.data, n, p, q);
        for (x, y) in row_p.iter_mut().zip(row_q.iter_mut()) {
            let (a, b) = (*x, *y);
            *x = a * c - b * ps;
            *y = a * s + b * pc;
        }
    }
    for k in 0..n {
        if k != p && k != q {
            m.data[k * n + p] = m.data[p * n + k].conj();
            m.data[k * n + q] = m.data[q * n + k].conj();
        }
    }
    m[(p, q)] = Complex64::new(0.0, 0.0);
    m[(q, p)] = Complex64::new(0.0, 0.0);
    m[(p, p)] = Complex64::new(app - t * mag, 0.0);
    m[(q, q)] = Complex64::new(aqq + t * mag, 0.0);

    // V <- V U, i.e. rows p, q of Vᵀ mix with conj-free coefficients.
    let (pcs, pcc) = (ps.conj(), pc.conj());
    let (vp, vq) = rows_pq(&mut vt.data, n, p, q);
    for (x, y) in vp.iter_mut().zip(vq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = a * c - b * pcs;
        *y = a * s + b * pcc;
    }
}

/// Frobenius-nearest positive semidefinite matrix: negative eigenvalues clipped to zero.
pub fn project_psd(a: &CMatrix) -> Result<CMatrix> {
    let eig = eig_hermitian(a)?;
    Ok(psd_from_eigen(&eig))
}

pub(crate) fn psd_from_eigen(eig: &EigenDecomposition) -> CMatrix {
    let n = eig.values.len();
    let mut out = CMatrix::zeros(n, n);
    for (k, &lambda) in eig.values.iter().enumerate() {
        if lambda <= 0.0 {
            continue;
        }
        let col = eig.vectors.column(k);
        for i in 0..n {
            let vi = col[i] * lambda;
            for j in i..n {
                out[(i, j)] += vi * col[j].conj();
            }
        }
    }
    for i in 0..n {
        out[(i, i)] = Complex64::new(out[(i, i)].re, 0.0);
        for j in (i + 1)..n {
            out[(j, i)] = out[(i, j)].conj();
        }
    }
    out
}

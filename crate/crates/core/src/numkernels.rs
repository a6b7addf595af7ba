//! Dense linear-algebra substrate.
//!
//! Everything else in the crate works in embedded ambient coordinates, so the
//! kernels here only need to be correct and deterministic at desk scale
//! (matrices up to a few dozen rows). The decompositions are Jacobi-based:
//! one-sided Jacobi for the SVD and cyclic two-sided Jacobi for symmetric
//! eigenproblems. Both are accurate to a few ulps of the largest singular
//! value, which is what the retraction and projection code relies on.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Relative reconstruction tolerance for the decompositions.
pub const TOL_RECON: f64 = 1e-10;
/// Orthonormality tolerance for factor columns.
pub const TOL_ORTH: f64 = 1e-10;
/// Symmetry tolerance for `sym_eig` inputs.
pub const TOL_SYM: f64 = 1e-12;
/// Rank threshold, relative to the largest singular value.
pub const TOL_RANK: f64 = 1e-12;

const MAX_JACOBI_SWEEPS: usize = 100;

/// Row-major dense real matrix. Column vectors are `n x 1`.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                write!(f, "{:>12.6e} ", self[(i, j)])?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                expected: (rows, cols),
                got: (data.len(), 1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::eye(n, n)
    }

    /// `n x m` matrix with ones on the leading diagonal.
    pub fn eye(rows: usize, cols: usize) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows.min(cols) {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    /// Column vector from a slice.
    pub fn column(values: &[f64]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    /// Builds a matrix from row slices. Panics on ragged input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let n = rows.len();
        let m = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(n * m);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), m, "ragged rows");
            data.extend_from_slice(r);
        }
        Self { rows: n, cols: m, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite)
        }
    }

    pub fn ensure_shape(&self, shape: (usize, usize)) -> Result<()> {
        if self.shape() == shape {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected: shape,
                got: self.shape(),
            })
        }
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_col(&mut self, j: usize, values: &[f64]) {
        for (i, v) in values.iter().enumerate() {
            self[(i, j)] = *v;
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(
            self.cols, rhs.rows,
            "matmul shape mismatch {:?} x {:?}",
            self.shape(),
            rhs.shape()
        );
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (d, r) in dst.iter_mut().zip(row) {
                    *d += a * r;
                }
            }
        }
        out
    }

    /// `selfᵀ * rhs` without materialising the transpose.
    pub fn t_matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.rows, rhs.rows, "t_matmul shape mismatch");
        let mut out = Self::zeros(self.cols, rhs.cols);
        for k in 0..self.rows {
            for i in 0..self.cols {
                let a = self[(k, i)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs[(k, j)];
                }
            }
        }
        out
    }

    pub fn scale(&self, alpha: f64) -> Self {
        self.map(|v| alpha * v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| f(*v)).collect(),
        }
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, other: &Self, alpha: f64) -> Self {
        assert_eq!(self.shape(), other.shape(), "add_scaled shape mismatch");
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + alpha * b)
                .collect(),
        }
    }

    /// In-place `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        assert_eq!(self.shape(), other.shape(), "axpy shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape(), "dot shape mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn dist(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape(), "dist shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// `(A + Aᵀ) / 2` for square matrices.
    pub fn sym(&self) -> Self {
        assert_eq!(self.rows, self.cols, "sym of non-square matrix");
        let mut s = self.clone();
        for i in 0..self.rows {
            for j in 0..i {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        s
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// First `k` columns.
    pub fn leading_cols(&self, k: usize) -> Self {
        let mut out = Self::zeros(self.rows, k);
        for i in 0..self.rows {
            for j in 0..k {
                out[(i, j)] = self[(i, j)];
            }
        }
        out
    }

    /// Largest absolute entry of `A - Aᵀ`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &DenseMatrix {
    type Output = DenseMatrix;

    fn add(self, rhs: &DenseMatrix) -> DenseMatrix {
        self.add_scaled(rhs, 1.0)
    }
}

impl Sub for &DenseMatrix {
    type Output = DenseMatrix;

    fn sub(self, rhs: &DenseMatrix) -> DenseMatrix {
        self.add_scaled(rhs, -1.0)
    }
}

impl Mul for &DenseMatrix {
    type Output = DenseMatrix;

    fn mul(self, rhs: &DenseMatrix) -> DenseMatrix {
        self.matmul(rhs)
    }
}

impl Mul<f64> for &DenseMatrix {
    type Output = DenseMatrix;

    fn mul(self, rhs: f64) -> DenseMatrix {
        self.scale(rhs)
    }
}

impl Neg for &DenseMatrix {
    type Output = DenseMatrix;

    fn neg(self) -> DenseMatrix {
        self.scale(-1.0)
    }
}

/// Thin singular value decomposition `X = U diag(sigma) Vᵀ`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// `n x k`, orthonormal columns.
    pub u: DenseMatrix,
    /// Nonincreasing, nonnegative, length `k = min(n, m)`.
    pub sigma: Vec<f64>,
    /// `m x k`, orthonormal columns.
    pub v: DenseMatrix,
}

impl SvdResult {
    /// `sum_{i < rank} sigma_i u_i v_iᵀ`.
    pub fn reconstruct(&self, rank: usize) -> DenseMatrix {
        let (n, m) = (self.u.rows(), self.v.rows());
        let mut out = DenseMatrix::zeros(n, m);
        for k in 0..rank.min(self.sigma.len()) {
            let s = self.sigma[k];
            if s == 0.0 {
                continue;
            }
            for i in 0..n {
                let us = s * self.u[(i, k)];
                for j in 0..m {
                    out[(i, j)] += us * self.v[(j, k)];
                }
            }
        }
        out
    }

    /// `sum_{i < rank} u_i v_iᵀ`, the polar factor when `rank = k`.
    pub fn polar(&self, rank: usize) -> DenseMatrix {
        let (n, m) = (self.u.rows(), self.v.rows());
        let mut out = DenseMatrix::zeros(n, m);
        for k in 0..rank.min(self.sigma.len()) {
            for i in 0..n {
                let u = self.u[(i, k)];
                for j in 0..m {
                    out[(i, j)] += u * self.v[(j, k)];
                }
            }
        }
        out
    }
}

/// Flips column `j` of `primary` (and of `partner`, if given) so that the
/// first entry of largest magnitude is nonnegative.
fn fix_sign(primary: &mut DenseMatrix, partner: Option<&mut DenseMatrix>, j: usize) {
    let mut best = 0usize;
    let mut best_abs = -1.0;
    for i in 0..primary.rows() {
        let a = primary[(i, j)].abs();
        // strict comparison keeps the first index among (near) ties
        if a > best_abs * (1.0 + 1e-12) {
            best_abs = a;
            best = i;
        }
    }
    if primary[(best, j)] < 0.0 {
        for i in 0..primary.rows() {
            primary[(i, j)] = -primary[(i, j)];
        }
        if let Some(p) = partner {
            for i in 0..p.rows() {
                p[(i, j)] = -p[(i, j)];
            }
        }
    }
}

/// Completes the columns of `q` listed in `missing` to an orthonormal set,
/// using the standard basis vector with the largest residual each time.
fn complete_orthonormal(q: &mut DenseMatrix, filled: &mut Vec<usize>, missing: &[usize]) {
    let n = q.rows();
    for &j in missing {
        let mut best: Option<Vec<f64>> = None;
        let mut best_norm = -1.0;
        for e in 0..n {
            let mut v = vec![0.0; n];
            v[e] = 1.0;
            for _ in 0..2 {
                for &c in filled.iter() {
                    let proj: f64 = (0..n).map(|i| q[(i, c)] * v[i]).sum();
                    for (i, vi) in v.iter_mut().enumerate() {
                        *vi -= proj * q[(i, c)];
                    }
                }
            }
            let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nv > best_norm + 1e-12 {
                best_norm = nv;
                best = Some(v);
            }
        }
        let v = best.expect("ambient dimension exceeds column count");
        for i in 0..n {
            q[(i, j)] = v[i] / best_norm;
        }
        filled.push(j);
    }
}

/// Thin SVD by one-sided Jacobi rotations.
///
/// Sign convention: the first entry of largest magnitude in every `u_i` is
/// nonnegative, with `v_i` flipped alongside.
pub fn svd(x: &DenseMatrix) -> Result<SvdResult> {
    x.ensure_finite()?;
    if x.rows() < x.cols() {
        let t = svd(&x.transpose())?;
        let mut res = SvdResult {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        };
        for j in 0..res.sigma.len() {
            fix_sign(&mut res.u, Some(&mut res.v), j);
        }
        return Ok(res);
    }
    let (n, m) = x.shape();
    let mut work = x.clone();
    let mut v = DenseMatrix::identity(m);
    let eps = f64::EPSILON;

    let mut converged = m < 2;
    for _ in 0..MAX_JACOBI_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..m {
            for q in (p + 1)..m {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for i in 0..n {
                    let a = work[(i, p)];
                    let b = work[(i, q)];
                    alpha += a * a;
                    beta += b * b;
                    gamma += a * b;
                }
                if gamma == 0.0 || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..n {
                    let a = work[(i, p)];
                    let b = work[(i, q)];
                    work[(i, p)] = c * a - s * b;
                    work[(i, q)] = s * a + c * b;
                }
                for i in 0..m {
                    let a = v[(i, p)];
                    let b = v[(i, q)];
                    v[(i, p)] = c * a - s * b;
                    v[(i, q)] = s * a + c * b;
                }
            }
        }
        if !rotated {
            converged = true;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations: MAX_JACOBI_SWEEPS,
        });
    }

    let norms: Vec<f64> = (0..m)
        .map(|j| (0..n).map(|i| work[(i, j)].powi(2)).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));

    let sigma_max = norms[order[0]];
    let zero_thresh = sigma_max * eps * (n.max(m) as f64);
    let mut u = DenseMatrix::zeros(n, m);
    let mut vs = DenseMatrix::zeros(m, m);
    let mut sigma = Vec::with_capacity(m);
    let mut filled = Vec::new();
    let mut missing = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        let s = norms[j];
        for i in 0..m {
            vs[(i, k)] = v[(i, j)];
        }
        if s > zero_thresh && s > 0.0 {
            for i in 0..n {
                u[(i, k)] = work[(i, j)] / s;
            }
            filled.push(k);
            sigma.push(s);
        } else {
            missing.push(k);
            sigma.push(0.0);
        }
    }
    complete_orthonormal(&mut u, &mut filled, &missing);
    for k in 0..m {
        fix_sign(&mut u, Some(&mut vs), k);
    }
    Ok(SvdResult { u, sigma, v: vs })
}

/// Symmetric eigendecomposition by cyclic Jacobi.
///
/// Returns eigenvalues in nonincreasing order and eigenvectors as columns,
/// each normalised so its first largest-magnitude entry is nonnegative.
pub fn sym_eig(a: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    a.ensure_finite()?;
    let (n, m) = a.shape();
    if n != m {
        return Err(Error::ShapeMismatch {
            expected: (n, n),
            got: (n, m),
        });
    }
    let asym = a.asymmetry();
    if asym > TOL_SYM * a.max_abs().max(1.0) {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    let mut w = a.sym();
    let mut v = DenseMatrix::identity(n);
    let scale = w.norm();

    let mut converged = n < 2 || scale == 0.0;
    for _ in 0..MAX_JACOBI_SWEEPS {
        if converged {
            break;
        }
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| w[(i, j)].powi(2))
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = w[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (w[(q, q)] - w[(p, p)]) / (2.0 * apq);
                let t = if theta.is_infinite() {
                    0.0
                } else {
                    let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                    sign / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                if t == 0.0 {
                    w[(p, q)] = 0.0;
                    w[(q, p)] = 0.0;
                    continue;
                }
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let wkp = w[(k, p)];
                    let wkq = w[(k, q)];
                    w[(k, p)] = c * wkp - s * wkq;
                    w[(k, q)] = s * wkp + c * wkq;
                }
                for k in 0..n {
                    let wpk = w[(p, k)];
                    let wqk = w[(q, k)];
                    w[(p, k)] = c * wpk - s * wqk;
                    w[(q, k)] = s * wpk + c * wqk;
                }
                w[(p, q)] = 0.0;
                w[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        // one last check after the final sweep
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| w[(i, j)].powi(2))
            .sum::<f64>()
            .sqrt();
        if off > 1e-12 * scale {
            return Err(Error::NoConvergence {
                iterations: MAX_JACOBI_SWEEPS,
            });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| w[(j, j)].total_cmp(&w[(i, i)]).then(i.cmp(&j)));
    let vals: Vec<f64> = order.iter().map(|&i| w[(i, i)]).collect();
    let mut vecs = DenseMatrix::zeros(n, n);
    for (k, &j) in order.iter().enumerate() {
        for i in 0..n {
            vecs[(i, k)] = v[(i, j)];
        }
        fix_sign(&mut vecs, None, k);
    }
    Ok((vals, vecs))
}

/// Applies a scalar function to the spectrum of a symmetric matrix:
/// `V diag(f(lambda)) Vᵀ`.
pub fn sym_apply(a: &DenseMatrix, f: impl Fn(f64) -> f64) -> Result<DenseMatrix> {
    let (vals, vecs) = sym_eig(a)?;
    let n = vals.len();
    let mut out = DenseMatrix::zeros(n, n);
    for (k, lam) in vals.iter().enumerate() {
        let fl = f(*lam);
        if fl == 0.0 {
            continue;
        }
        for i in 0..n {
            let vi = fl * vecs[(i, k)];
            for j in 0..n {
                out[(i, j)] += vi * vecs[(j, k)];
            }
        }
    }
    Ok(out)
}

/// Thin QR factorisation with `R` carrying a strictly positive diagonal.
///
/// Modified Gram-Schmidt with one reorthogonalisation pass.
pub fn qr(x: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    x.ensure_finite()?;
    let (n, m) = x.shape();
    if n < m {
        return Err(Error::RankDeficient {
            pivot: 0.0,
            threshold: 0.0,
        });
    }
    let scale = (0..m)
        .map(|j| x.col(j).iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let threshold = TOL_RANK * scale.max(f64::MIN_POSITIVE);
    let mut q = x.clone();
    let mut r = DenseMatrix::zeros(m, m);
    for j in 0..m {
        for _pass in 0..2 {
            for k in 0..j {
                let proj: f64 = (0..n).map(|i| q[(i, k)] * q[(i, j)]).sum();
                r[(k, j)] += proj;
                for i in 0..n {
                    q[(i, j)] -= proj * q[(i, k)];
                }
            }
        }
        let nrm = (0..n).map(|i| q[(i, j)].powi(2)).sum::<f64>().sqrt();
        if nrm <= threshold {
            return Err(Error::RankDeficient {
                pivot: nrm,
                threshold,
            });
        }
        r[(j, j)] = nrm;
        for i in 0..n {
            q[(i, j)] /= nrm;
        }
    }
    Ok((q, r))
}

/// Orthonormal factor of the positive-diagonal QR decomposition.
pub fn qr_qf(x: &DenseMatrix) -> Result<DenseMatrix> {
    qr(x).map(|(q, _)| q)
}

/// `Lᵀ (L Lᵀ)⁻¹` for a full-row-rank `L`.
pub fn pinv(l: &DenseMatrix) -> Result<DenseMatrix> {
    l.ensure_finite()?;
    let gram = l.matmul(&l.transpose());
    let (vals, _) = sym_eig(&gram)?;
    let lam_max = vals.first().copied().unwrap_or(0.0);
    let lam_min = vals.last().copied().unwrap_or(0.0);
    // eigenvalues of L Lᵀ are squared singular values of L
    let threshold = (TOL_RANK * TOL_RANK) * lam_max;
    if lam_max <= 0.0 || lam_min <= threshold {
        return Err(Error::RankDeficient {
            pivot: lam_min.max(0.0).sqrt(),
            threshold: TOL_RANK * lam_max.max(0.0).sqrt(),
        });
    }
    let inv = sym_apply(&gram, |lam| 1.0 / lam)?;
    Ok(l.transpose().matmul(&inv))
}

/// Solves `A X = B` by LU with partial pivoting.
pub fn solve(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    a.ensure_finite()?;
    b.ensure_finite()?;
    let n = a.rows();
    a.ensure_shape((n, n))?;
    if b.rows() != n {
        return Err(Error::ShapeMismatch {
            expected: (n, b.cols()),
            got: b.shape(),
        });
    }
    let mut lu = a.clone();
    let mut x = b.clone();
    let scale = a.max_abs();
    let threshold = TOL_RANK * scale.max(f64::MIN_POSITIVE);
    for k in 0..n {
        let (piv, pval) = (k..n)
            .map(|i| (i, lu[(i, k)].abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pval <= threshold {
            return Err(Error::RankDeficient {
                pivot: pval,
                threshold,
            });
        }
        if piv != k {
            for j in 0..n {
                let tmp = lu[(k, j)];
                lu[(k, j)] = lu[(piv, j)];
                lu[(piv, j)] = tmp;
            }
            for j in 0..x.cols() {
                let tmp = x[(k, j)];
                x[(k, j)] = x[(piv, j)];
                x[(piv, j)] = tmp;
            }
        }
        for i in (k + 1)..n {
            let f = lu[(i, k)] / lu[(k, k)];
            if f == 0.0 {
                continue;
            }
            for j in k..n {
                lu[(i, j)] -= f * lu[(k, j)];
            }
            for j in 0..x.cols() {
                x[(i, j)] -= f * x[(k, j)];
            }
        }
    }
    for k in (0..n).rev() {
        for j in 0..x.cols() {
            let mut s = x[(k, j)];
            for i in (k + 1)..n {
                s -= lu[(k, i)] * x[(i, j)];
            }
            x[(k, j)] = s / lu[(k, k)];
        }
    }
    Ok(x)
}

/// Numerical rank: number of singular values above `TOL_RANK * sigma_max`.
pub fn rank(x: &DenseMatrix) -> Result<usize> {
    let s = svd(x)?;
    let smax = s.sigma.first().copied().unwrap_or(0.0);
    Ok(s.sigma.iter().filter(|&&v| v > TOL_RANK.max(1e-10) * smax).count())
}

/// Non-negative least squares `min ‖G μ − b‖, μ ≥ 0` (Lawson–Hanson).
///
/// `generators` holds one generator per column. Returns the coefficients.
pub fn nnls(generators: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let (n, k) = generators.shape();
    if b.len() != n {
        return Err(Error::ShapeMismatch {
            expected: (n, 1),
            got: (b.len(), 1),
        });
    }
    let mut mu = vec![0.0; k];
    if k == 0 {
        return Ok(mu);
    }
    let mut passive = vec![false; k];
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let tol = 1e-14 * (1.0 + bnorm) * (1.0 + generators.max_abs());
    let max_outer = 3 * k + 10;

    let residual = |mu: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| b[i] - (0..k).map(|j| generators[(i, j)] * mu[j]).sum::<f64>())
            .collect()
    };
    // least squares restricted to the passive set, via normal equations
    let restricted_ls = |passive: &[bool]| -> Result<Vec<f64>> {
        let idx: Vec<usize> = (0..k).filter(|&j| passive[j]).collect();
        let p = idx.len();
        let mut g = DenseMatrix::zeros(p, p);
        let mut rhs = DenseMatrix::zeros(p, 1);
        for (a, &ja) in idx.iter().enumerate() {
            for (c, &jc) in idx.iter().enumerate() {
                g[(a, c)] = (0..n).map(|i| generators[(i, ja)] * generators[(i, jc)]).sum();
            }
            rhs[(a, 0)] = (0..n).map(|i| generators[(i, ja)] * b[i]).sum();
        }
        let sol = solve(&g, &rhs)?;
        let mut z = vec![0.0; k];
        for (a, &ja) in idx.iter().enumerate() {
            z[ja] = sol[(a, 0)];
        }
        Ok(z)
    };

    for _ in 0..max_outer {
        let r = residual(&mu);
        let w: Vec<f64> = (0..k)
            .map(|j| (0..n).map(|i| generators[(i, j)] * r[i]).sum())
            .collect();
        let candidate = (0..k)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&a, &c| w[a].total_cmp(&w[c]));
        let Some(t) = candidate else {
            return Ok(mu);
        };
        passive[t] = true;
        loop {
            let z = restricted_ls(&passive)?;
            if (0..k).filter(|&j| passive[j]).all(|j| z[j] > 0.0) {
                mu = z;
                break;
            }
            let mut alpha = f64::INFINITY;
            for j in 0..k {
                if passive[j] && z[j] <= 0.0 {
                    let step = mu[j] / (mu[j] - z[j]);
                    alpha = alpha.min(step);
                }
            }
            for j in 0..k {
                mu[j] += alpha * (z[j] - mu[j]);
                if passive[j] && mu[j].abs() <= 1e-15 {
                    passive[j] = false;
                    mu[j] = 0.0;
                }
            }
        }
    }
    Err(Error::NoConvergence {
        iterations: max_outer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orth_error(q: &DenseMatrix) -> f64 {
        let g = q.t_matmul(q);
        g.dist(&DenseMatrix::identity(q.cols()))
    }

    #[test]
    fn svd_of_diagonal() {
        let s = svd(&DenseMatrix::diag(&[3.0, 1.0])).unwrap();
        assert_eq!(s.sigma, vec![3.0, 1.0]);
        assert_eq!(s.u.col(0), vec![1.0, 0.0]);
        assert_eq!(s.v.col(0), vec![1.0, 0.0]);
    }

    #[test]
    fn svd_of_zero_matrix() {
        let s = svd(&DenseMatrix::zeros(2, 2)).unwrap();
        assert_eq!(s.sigma, vec![0.0, 0.0]);
        assert!(orth_error(&s.u) < TOL_ORTH);
        assert!(orth_error(&s.v) < TOL_ORTH);
    }

    #[test]
    fn svd_of_swap_matrix() {
        let x = DenseMatrix::from_rows(&[[0.0, 2.0], [2.0, 0.0]]);
        let s = svd(&x).unwrap();
        assert!((s.sigma[0] - 2.0).abs() < 1e-14 && (s.sigma[1] - 2.0).abs() < 1e-14);
        assert!(s.reconstruct(2).dist(&x) <= 1e-12);
    }

    #[test]
    fn svd_wide_matrix() {
        let x = DenseMatrix::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        let s = svd(&x).unwrap();
        assert_eq!(s.sigma.len(), 2);
        assert!(s.reconstruct(2).dist(&x) <= 1e-12 * x.norm());
        assert!(orth_error(&s.u) < TOL_ORTH && orth_error(&s.v) < TOL_ORTH);
    }

    #[test]
    fn svd_rejects_nan() {
        let x = DenseMatrix::from_rows(&[[f64::NAN, 0.0]]);
        assert_eq!(svd(&x).unwrap_err(), Error::NonFinite);
    }

    #[test]
    fn eig_examples() {
        let (l, v) = sym_eig(&DenseMatrix::diag(&[4.0, 1.0])).unwrap();
        assert_eq!(l, vec![4.0, 1.0]);
        assert_eq!(v.col(0), vec![1.0, 0.0]);

        let (l, _) = sym_eig(&DenseMatrix::identity(3)).unwrap();
        assert_eq!(l, vec![1.0, 1.0, 1.0]);

        let (l, v) = sym_eig(&DenseMatrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]])).unwrap();
        assert!((l[0] - 3.0).abs() < 1e-14 && (l[1] - 1.0).abs() < 1e-14);
        let s = 0.5f64.sqrt();
        assert!((v[(0, 0)] - s).abs() < 1e-14 && (v[(1, 0)] - s).abs() < 1e-14);
    }

    #[test]
    fn eig_rejects_asymmetric() {
        let a = DenseMatrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]);
        assert!(matches!(sym_eig(&a), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn qf_examples() {
        let q = qr_qf(&DenseMatrix::eye(3, 2)).unwrap();
        assert_eq!(q, DenseMatrix::eye(3, 2));

        let q = qr_qf(&DenseMatrix::diag(&[2.0, 3.0])).unwrap();
        assert_eq!(q, DenseMatrix::identity(2));

        let q = qr_qf(&DenseMatrix::column(&[1.0, 1.0])).unwrap();
        let s = 0.5f64.sqrt();
        assert!((q[(0, 0)] - s).abs() < 1e-15 && (q[(1, 0)] - s).abs() < 1e-15);
    }

    #[test]
    fn qf_rank_deficient() {
        let x = DenseMatrix::from_rows(&[[1.0, 2.0], [1.0, 2.0]]);
        assert!(matches!(qr_qf(&x), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn pinv_examples() {
        let p = pinv(&DenseMatrix::from_rows(&[[1.0, 1.0]])).unwrap();
        assert!(p.dist(&DenseMatrix::column(&[0.5, 0.5])) < 1e-15);

        let p = pinv(&DenseMatrix::identity(2)).unwrap();
        assert!(p.dist(&DenseMatrix::identity(2)) < 1e-15);

        let p = pinv(&DenseMatrix::from_rows(&[[2.0, 0.0]])).unwrap();
        assert!(p.dist(&DenseMatrix::column(&[0.5, 0.0])) < 1e-15);
    }

    #[test]
    fn pinv_rank_deficient() {
        let l = DenseMatrix::from_rows(&[[1.0, 1.0], [2.0, 2.0]]);
        assert!(matches!(pinv(&l), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn solve_small_system() {
        let a = DenseMatrix::from_rows(&[[0.0, 1.0], [2.0, 1.0]]);
        let b = DenseMatrix::column(&[1.0, 5.0]);
        let x = solve(&a, &b).unwrap();
        assert!(x.dist(&DenseMatrix::column(&[2.0, 1.0])) < 1e-14);
    }

    #[test]
    fn nnls_cone_projection() {
        // generators (-1, 0) and (0, -1): the nonpositive quadrant
        let g = DenseMatrix::from_rows(&[[-1.0, 0.0], [0.0, -1.0]]);
        let mu = nnls(&g, &[-1.0, 2.0]).unwrap();
        assert!((mu[0] - 1.0).abs() < 1e-14 && mu[1] == 0.0);
    }
}

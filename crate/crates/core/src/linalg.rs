//! Dense real matrices, trial covariance, and the symmetric-definite
//! generalized eigenproblem.
//!
//! # Layout
//!
//! [`RealMatrix`] stores its entries in row-major order: entry `(i, j)` lives
//! at `data[i * cols + j]`. An EEG trial is a `channels × samples` matrix, so
//! each channel's time series is a contiguous row.
//!
//! # Generalized eigenproblem
//!
//! [`solve_generalized_eig`] solves `A w = λ B w` for symmetric `A` and
//! symmetric positive-definite `B` by Cholesky whitening:
//!
//! 1. `B + ridge · (tr(B)/C) · I = L Lᵀ`
//! 2. `M = L⁻¹ A L⁻ᵀ` (symmetric)
//! 3. `M v = λ v`
//! 4. `w = L⁻ᵀ v`, rescaled to unit Euclidean norm
//!
//! Returned eigenvectors follow a fixed sign convention: the entry of largest
//! magnitude is positive.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative ridge added to generalized-eigenproblem denominators.
pub const DEFAULT_RIDGE: f64 = 1e-8;

/// A dense, finite, row-major real matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixDoc")]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct MatrixDoc {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<MatrixDoc> for RealMatrix {
    type Error = Error;

    fn try_from(doc: MatrixDoc) -> Result<Self> {
        RealMatrix::new(doc.rows, doc.cols, doc.data)
    }
}

impl RealMatrix {
    /// Builds a matrix from row-major data, checking shape and finiteness.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!(
                "matrix must be at least 1x1, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "entry ({}, {}) is {}",
                pos / cols,
                pos % cols,
                data[pos]
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from a list of equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::Dimension("rows have unequal lengths".into()));
        }
        Self::new(nrows, ncols, rows.concat())
    }

    /// # Panics
    /// Panics if either dimension is zero.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// # Panics
    /// Panics if either dimension is zero or `f` returns a non-finite value.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                let v = f(i, j);
                assert!(v.is_finite(), "non-finite entry at ({i}, {j})");
                m.data[i * cols + j] = v;
            }
        }
        m
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

    /// Row-major entries.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// # Panics
    /// Panics on out-of-range indices or a non-finite value.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        assert!(value.is_finite(), "non-finite entry at ({i}, {j})");
        self.data[i * self.cols + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// Entries in column-major order.
    pub fn to_column_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                out.push(self.get(i, j));
            }
        }
        out
    }

    pub fn from_column_major(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        let mut row_major = vec![0.0; rows * cols];
        for j in 0..cols {
            for i in 0..rows {
                row_major[i * cols + j] = data[j * rows + i];
            }
        }
        Self::new(rows, cols, row_major)
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// `self · other`.
    pub fn matmul(&self, other: &RealMatrix) -> Result<RealMatrix> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                axpy(a, other.row(k), out_row);
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other`, without materializing the transpose.
    pub fn t_matmul(&self, other: &RealMatrix) -> Result<RealMatrix> {
        if self.rows != other.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply ({}x{})ᵀ by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.cols, other.cols);
        for j in 0..self.cols {
            let out_row = &mut out.data[j * other.cols..(j + 1) * other.cols];
            for k in 0..self.rows {
                let a = self.data[k * self.cols + j];
                if a == 0.0 {
                    continue;
                }
                axpy(a, other.row(k), out_row);
            }
        }
        Ok(out)
    }

    pub fn scaled(&self, factor: f64) -> RealMatrix {
        RealMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    /// Entry-wise sum; shapes must agree.
    pub fn add(&self, other: &RealMatrix) -> Result<RealMatrix> {
        self.check_same_shape(other)?;
        Ok(RealMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    /// `self += factor · other`.
    pub fn add_scaled(&mut self, factor: f64, other: &RealMatrix) -> Result<()> {
        self.check_same_shape(other)?;
        axpy(factor, &other.data, &mut self.data);
        Ok(())
    }

    fn check_same_shape(&self, other: &RealMatrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension(format!(
                "shape {:?} does not match {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// `(M + Mᵀ) / 2` for a square matrix.
    pub fn symmetrized(&self) -> Result<RealMatrix> {
        if !self.is_square() {
            return Err(Error::Dimension(format!(
                "cannot symmetrize a {}x{} matrix",
                self.rows, self.cols
            )));
        }
        let n = self.rows;
        Ok(RealMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.get(i, i)
            } else {
                0.5 * (self.get(i, j) + self.get(j, i))
            }
        }))
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::Dimension(format!(
                "vector of length {} for {}x{} matrix",
                v.len(),
                self.rows,
                self.cols
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    /// New matrix holding the listed rows, in order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<RealMatrix> {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(Error::Dimension(format!(
                    "row {i} out of range for {} rows",
                    self.rows
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        RealMatrix::new(indices.len(), self.cols, data)
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub(crate) fn from_nalgebra(m: &DMatrix<f64>) -> Result<RealMatrix> {
        let (rows, cols) = m.shape();
        Self::from_column_major(rows, cols, m.as_slice())
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Sample covariance `X Xᵀ / (S − 1)` of a `C × S` trial.
///
/// The channel means are assumed to be removed upstream and are not
/// subtracted here.
pub fn trial_covariance(trial: &RealMatrix) -> Result<RealMatrix> {
    let (c, s) = trial.shape();
    if s < 2 {
        return Err(Error::DegenerateTrial(format!(
            "covariance needs at least 2 samples, got {s}"
        )));
    }
    let mut cov = RealMatrix::zeros(c, c);
    accumulate_outer(trial, 1.0 / (s - 1) as f64, &mut cov);
    Ok(cov)
}

/// `acc += scale · X Xᵀ`, filled symmetrically.
pub(crate) fn accumulate_outer(trial: &RealMatrix, scale: f64, acc: &mut RealMatrix) {
    let c = trial.rows();
    for i in 0..c {
        let ri = trial.row(i);
        for j in i..c {
            let v = scale * dot(ri, trial.row(j));
            acc.data[i * c + j] += v;
            if i != j {
                acc.data[j * c + i] += v;
            }
        }
    }
}

/// Leading generalized eigenpairs of a symmetric-definite pencil.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenEigResult {
    /// Eigenvalues, non-increasing.
    pub eigenvalues: Vec<f64>,
    /// `C × f` matrix; column `j` pairs with `eigenvalues[j]`.
    pub eigenvectors: RealMatrix,
}

/// Solves `A w = λ B w` and returns the `f` pairs with the largest `λ`.
///
/// Both inputs are symmetrized first. The denominator is regularized as
/// `B + ridge · (tr(B)/C) · I`.
pub fn solve_generalized_eig(
    numerator: &RealMatrix,
    denominator: &RealMatrix,
    f: usize,
    ridge: f64,
) -> Result<GenEigResult> {
    if !numerator.is_square() || !denominator.is_square() || numerator.shape() != denominator.shape() {
        return Err(Error::Dimension(format!(
            "numerator {:?} and denominator {:?} must be equal-size square matrices",
            numerator.shape(),
            denominator.shape()
        )));
    }
    let c = numerator.rows();
    if f == 0 || f > c {
        return Err(Error::Dimension(format!(
            "requested {f} eigenpairs from a {c}x{c} problem"
        )));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "ridge must be finite and non-negative, got {ridge}"
        )));
    }

    let a = numerator.symmetrized()?.to_nalgebra();
    let mut b = denominator.symmetrized()?.to_nalgebra();
    let shift = ridge * denominator.trace() / c as f64;
    for i in 0..c {
        b[(i, i)] += shift;
    }

    let chol = Cholesky::new(b).ok_or_else(|| {
        Error::SingularDenominator(format!("denominator is not positive definite (ridge {ridge:e})"))
    })?;
    let l = chol.l();

    let singular = || Error::SingularDenominator("triangular solve failed".into());
    // M = L⁻¹ A L⁻ᵀ = L⁻¹ (L⁻¹ A)ᵀ since A is symmetric.
    let y = l.solve_lower_triangular(&a).ok_or_else(singular)?;
    let m = l.solve_lower_triangular(&y.transpose()).ok_or_else(singular)?;
    let m = (&m + m.transpose()) * 0.5;

    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));

    let mut eigenvalues = Vec::with_capacity(f);
    let mut vectors = DMatrix::<f64>::zeros(c, f);
    for (col, &idx) in order.iter().take(f).enumerate() {
        let v = eig.eigenvectors.column(idx).into_owned();
        let w = l.tr_solve_lower_triangular(&v).ok_or_else(singular)?;
        let mut w: Vec<f64> = w.iter().copied().collect();
        normalize_with_sign(&mut w);
        for (i, wi) in w.into_iter().enumerate() {
            vectors[(i, col)] = wi;
        }
        eigenvalues.push(eig.eigenvalues[idx]);
    }

    Ok(GenEigResult {
        eigenvalues,
        eigenvectors: RealMatrix::from_nalgebra(&vectors)?,
    })
}

/// Scales `v` to unit norm and flips it so its largest-magnitude entry is
/// positive (first such entry on ties).
pub fn normalize_with_sign(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return;
    }
    let mut pivot = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[pivot].abs() {
            pivot = i;
        }
    }
    let scale = if v[pivot] < 0.0 { -1.0 / norm } else { 1.0 / norm };
    for x in v.iter_mut() {
        *x *= scale;
    }
}

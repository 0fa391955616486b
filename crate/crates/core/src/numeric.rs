//! Small dense numeric kernel: the logistic link family plus the handful of
//! vector / symmetric-PSD-matrix operations the estimators are built from.
//!
//! Everything here is deliberately plain `f64` loops. Dimensions stay small
//! (tens, not thousands), so a general linear-algebra dependency would buy
//! nothing and cost determinism audits.

use thiserror::Error;

/// Errors from the numeric kernel.
#[derive(Debug, Error, PartialEq)]
pub enum NumericError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("matrix is not positive definite (pivot {pivot:.3e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("matrix is not symmetric: |a[{i}][{j}] - a[{j}][{i}]| = {diff:.3e}")]
    NotSymmetric { i: usize, j: usize, diff: f64 },
}

/// Logistic link `1 / (1 + exp(-x))`.
///
/// Branches on the sign of `x` so the exponential argument is always
/// non-positive; stable for the whole finite range (no overflow, no NaN).
pub fn sigmoid(x: f64) -> f64 {
    debug_assert!(x.is_finite());
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// First derivative of the link: `sigmoid(x) * (1 - sigmoid(x))`.
///
/// Computed as `sigmoid(x) * sigmoid(-x)`, which keeps the small factor as a
/// true exponential instead of a cancellation, so the result stays strictly
/// positive for |x| up to ~700.
pub fn sigmoid_deriv(x: f64) -> f64 {
    sigmoid(x) * sigmoid(-x)
}

/// Second derivative of the link: `sigmoid_deriv(x) * (1 - 2 * sigmoid(x))`.
pub fn sigmoid_second_deriv(x: f64) -> f64 {
    sigmoid_deriv(x) * (1.0 - 2.0 * sigmoid(x))
}

/// Dense column vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    /// Zero vector of dimension `dim` (`dim >= 1`).
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "vector dimension must be at least 1");
        Vector { data: vec![0.0; dim] }
    }

    /// Wraps raw entries; all entries must be finite.
    pub fn from_vec(data: Vec<f64>) -> Self {
        assert!(!data.is_empty(), "vector dimension must be at least 1");
        debug_assert!(data.iter().all(|x| x.is_finite()), "non-finite vector entry");
        Vector { data }
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dot: dimension mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// Euclidean norm.
    pub fn norm2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scaled(&self, c: f64) -> Vector {
        Vector { data: self.data.iter().map(|x| x * c).collect() }
    }

    /// In-place `self += c * other`.
    pub fn add_scaled(&mut self, other: &Vector, c: f64) {
        assert_eq!(self.dim(), other.dim(), "add_scaled: dimension mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn plus(&self, other: &Vector) -> Vector {
        let mut out = self.clone();
        out.add_scaled(other, 1.0);
        out
    }

    pub fn minus(&self, other: &Vector) -> Vector {
        let mut out = self.clone();
        out.add_scaled(other, -1.0);
        out
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl std::ops::IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

/// Dense symmetric matrix, kept positive semi-definite by construction at the
/// use sites (regularized Gram/Hessian accumulators). Row-major full storage;
/// symmetry is an invariant, not re-checked on every touch.
#[derive(Clone, Debug, PartialEq)]
pub struct PsdMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl PsdMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "matrix dimension must be at least 1");
        PsdMatrix { dim, data: vec![0.0; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    /// `c * I`.
    pub fn scaled_identity(dim: usize, c: f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = c;
        }
        m
    }

    /// Builds from explicit rows, verifying squareness and symmetry to 1e-9
    /// (entries are symmetrized to kill representation noise).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NumericError> {
        let dim = rows.len();
        assert!(dim >= 1, "matrix dimension must be at least 1");
        for row in rows {
            if row.len() != dim {
                return Err(NumericError::DimensionMismatch(row.len(), dim));
            }
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                let diff = (rows[i][j] - rows[j][i]).abs();
                if diff > 1e-9 {
                    return Err(NumericError::NotSymmetric { i, j, diff });
                }
            }
        }
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.data[i * dim + j] = 0.5 * (rows[i][j] + rows[j][i]);
            }
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|i| self.data[i * self.dim..(i + 1) * self.dim].to_vec())
            .collect()
    }

    /// In-place `self += c * I`.
    pub fn add_scaled_identity(&mut self, c: f64) {
        for i in 0..self.dim {
            self.data[i * self.dim + i] += c;
        }
    }

    /// In-place rank-one update `self += weight * v * v^T`.
    pub fn add_outer(&mut self, v: &Vector, weight: f64) {
        assert_eq!(self.dim, v.dim(), "add_outer: dimension mismatch");
        for i in 0..self.dim {
            let wi = weight * v[i];
            for j in 0..self.dim {
                self.data[i * self.dim + j] += wi * v[j];
            }
        }
    }

    /// In-place `self += c * other`.
    pub fn add_scaled(&mut self, other: &PsdMatrix, c: f64) {
        assert_eq!(self.dim, other.dim, "add_scaled: dimension mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn mat_vec(&self, v: &Vector) -> Vector {
        assert_eq!(self.dim, v.dim(), "mat_vec: dimension mismatch");
        let mut out = Vector::zeros(self.dim);
        for i in 0..self.dim {
            let row = &self.data[i * self.dim..(i + 1) * self.dim];
            out[i] = row.iter().zip(v.as_slice()).map(|(a, b)| a * b).sum();
        }
        out
    }

    /// `v^T * self * v`, clamped so PSD round-off (tiny negatives above
    /// -1e-12) reads as zero.
    pub fn quad_form(&self, v: &Vector) -> f64 {
        let q = v.dot(&self.mat_vec(v));
        clamp_nonnegative(q)
    }

    /// Lower-triangular Cholesky factorization; fails with the offending
    /// pivot when the matrix is not (numerically) positive definite.
    pub fn cholesky(&self) -> Result<Cholesky, NumericError> {
        let n = self.dim;
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut diag = self.get(j, j);
            for k in 0..j {
                diag -= l[j * n + k] * l[j * n + k];
            }
            if diag <= 0.0 || !diag.is_finite() {
                return Err(NumericError::NotPositiveDefinite { index: j, pivot: diag });
            }
            let root = diag.sqrt();
            l[j * n + j] = root;
            for i in (j + 1)..n {
                let mut sum = self.get(i, j);
                for k in 0..j {
                    sum -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = sum / root;
            }
        }
        Ok(Cholesky { dim: n, lower: l })
    }
}

/// Cached lower-triangular factor `L` with `L * L^T = M`; one factorization
/// is shared across every solve/quadratic-form in a round.
#[derive(Clone, Debug)]
pub struct Cholesky {
    dim: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Solves `M x = rhs`.
    pub fn solve(&self, rhs: &Vector) -> Vector {
        let y = self.forward(rhs);
        // back substitution with L^T
        let n = self.dim;
        let mut x = y;
        for i in (0..n).rev() {
            let mut sum = x[i];
            for j in (i + 1)..n {
                sum -= self.lower[j * n + i] * x[j];
            }
            x[i] = sum / self.lower[i * n + i];
        }
        x
    }

    /// `v^T M^{-1} v` as `||L^{-1} v||^2` — a sum of squares, so exactly
    /// non-negative regardless of rounding.
    pub fn inv_quad_form(&self, v: &Vector) -> f64 {
        let y = self.forward(v);
        y.dot(&y)
    }

    /// `log det M` from the factor diagonal.
    pub fn log_det(&self) -> f64 {
        let n = self.dim;
        (0..n).map(|i| self.lower[i * n + i].ln()).sum::<f64>() * 2.0
    }

    fn forward(&self, rhs: &Vector) -> Vector {
        assert_eq!(self.dim, rhs.dim(), "solve: dimension mismatch");
        let n = self.dim;
        let mut y = Vector::zeros(n);
        for i in 0..n {
            let mut sum = rhs[i];
            for j in 0..i {
                sum -= self.lower[i * n + j] * y[j];
            }
            y[i] = sum / self.lower[i * n + i];
        }
        y
    }
}

/// `sqrt(v^T m v)` — the Mahalanobis norm of `v` under `m`.
pub fn mahalanobis_norm(v: &Vector, m: &PsdMatrix) -> Result<f64, NumericError> {
    if v.dim() != m.dim() {
        return Err(NumericError::DimensionMismatch(v.dim(), m.dim()));
    }
    Ok(m.quad_form(v).sqrt())
}

/// Solves `m x = rhs` through a fresh Cholesky factorization.
pub fn psd_solve(m: &PsdMatrix, rhs: &Vector) -> Result<Vector, NumericError> {
    if rhs.dim() != m.dim() {
        return Err(NumericError::DimensionMismatch(rhs.dim(), m.dim()));
    }
    Ok(m.cholesky()?.solve(rhs))
}

/// Clamps PSD round-off: values in [-1e-12, 0) snap to 0, anything more
/// negative is a real bug and panics in debug builds.
pub(crate) fn clamp_nonnegative(q: f64) -> f64 {
    if q < 0.0 {
        debug_assert!(q >= -1e-12, "quadratic form significantly negative: {q}");
        0.0
    } else {
        q
    }
}

//! Dense row-major matrices and vectors shared by every other module.
//!
//! A [`DesignMatrix`] holds `n` samples of `p` predictors. Standardization
//! scales each column to squared norm `n`, which makes the covariance
//! `n⁻¹XᵀX` unit-diagonal with entries in `[-1, 1]`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance on `‖X_k‖₂² = n` for a standardized column.
pub const STANDARDIZED_TOL: f64 = 1e-8;
/// Absolute entrywise symmetry tolerance for covariance matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Smallest eigenvalue (relative to the spectral scale) still accepted as PSD.
pub const PSD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    values: Vec<f64>,
    n: usize,
    p: usize,
    standardized: bool,
    /// Per-column factors applied so far; `X_current = X_original · diag(scales)`.
    scales: Vec<f64>,
}

impl DesignMatrix {
    /// Builds a matrix from row-major storage.
    pub fn from_row_major(n: usize, p: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(Error::Dimension(format!("design matrix must be non-empty, got {n}x{p}")));
        }
        if values.len() != n * p {
            return Err(Error::Dimension(format!(
                "expected {} values for a {n}x{p} matrix, got {}",
                n * p,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: pos / p, col: pos % p });
        }
        Ok(Self { values, n, p, standardized: false, scales: vec![1.0; p] })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != p) {
            return Err(Error::Dimension(format!(
                "row {i} has {} entries, expected {p}",
                rows[i].len()
            )));
        }
        Self::from_row_major(n, p, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    /// Column factors accumulated by [`standardize_columns`] (all ones otherwise).
    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.p + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.p)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    pub fn column_sq_norm(&self, j: usize) -> f64 {
        (0..self.n).map(|i| self.get(i, j).powi(2)).sum()
    }

    /// `Xβ`.
    pub fn mul_vec(&self, beta: &[f64]) -> Vec<f64> {
        debug_assert_eq!(beta.len(), self.p);
        self.rows().map(|r| dot(r, beta)).collect()
    }

    /// `Xᵀv`.
    pub fn tr_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.n);
        let mut out = vec![0.0; self.p];
        for (row, &vi) in self.rows().zip(v) {
            if vi != 0.0 {
                for (o, &x) in out.iter_mut().zip(row) {
                    *o += x * vi;
                }
            }
        }
        out
    }

    /// Unnormalized Gram matrix `XᵀX`, row-major `p×p`.
    pub fn gram(&self) -> Vec<f64> {
        let p = self.p;
        let mut g = vec![0.0; p * p];
        for row in self.rows() {
            for j in 0..p {
                let xj = row[j];
                if xj == 0.0 {
                    continue;
                }
                for k in j..p {
                    g[j * p + k] += xj * row[k];
                }
            }
        }
        for j in 0..p {
            for k in 0..j {
                g[j * p + k] = g[k * p + j];
            }
        }
        g
    }

    /// Submatrix of the given columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.p) {
            return Err(Error::Dimension(format!("column {bad} out of range for p = {}", self.p)));
        }
        let mut values = Vec::with_capacity(self.n * cols.len());
        for row in self.rows() {
            values.extend(cols.iter().map(|&c| row[c]));
        }
        let mut out = Self::from_row_major(self.n, cols.len(), values)?;
        out.standardized = self.standardized;
        out.scales = cols.iter().map(|&c| self.scales[c]).collect();
        Ok(out)
    }

    /// Subtracts each column's mean. Opt-in; the estimators never center implicitly.
    pub fn center_columns(&self) -> Self {
        let mut means = vec![0.0; self.p];
        for row in self.rows() {
            for (m, &x) in means.iter_mut().zip(row) {
                *m += x;
            }
        }
        means.iter_mut().for_each(|m| *m /= self.n as f64);
        let values = self
            .rows()
            .flat_map(|row| row.iter().zip(&means).map(|(x, m)| x - m).collect::<Vec<_>>())
            .collect();
        Self { values, n: self.n, p: self.p, standardized: false, scales: self.scales.clone() }
    }

    /// Maps coefficients fitted on this (possibly rescaled) matrix back to the
    /// original column scale.
    pub fn unscale_coefficients(&self, beta: &[f64]) -> Vec<f64> {
        beta.iter().zip(&self.scales).map(|(b, c)| b * c).collect()
    }

    /// True if every column has squared norm `n` within `tol · n`.
    pub fn columns_have_norm_n(&self, tol: f64) -> bool {
        let n = self.n as f64;
        (0..self.p).all(|j| (self.column_sq_norm(j) - n).abs() <= tol * n)
    }
}

/// Scales every column to squared ℓ2-norm `n`.
pub fn standardize_columns(x: &DesignMatrix) -> Result<DesignMatrix> {
    let n = x.n as f64;
    let mut factors = Vec::with_capacity(x.p);
    for j in 0..x.p {
        let sq = x.column_sq_norm(j);
        if sq == 0.0 {
            return Err(Error::ZeroColumn(j));
        }
        factors.push((n / sq).sqrt());
    }
    let values = x
        .rows()
        .flat_map(|row| row.iter().zip(&factors).map(|(v, f)| v * f).collect::<Vec<_>>())
        .collect();
    let scales = x.scales.iter().zip(&factors).map(|(s, f)| s * f).collect();
    Ok(DesignMatrix { values, n: x.n, p: x.p, standardized: true, scales })
}

/// `Σ̂ = n⁻¹XᵀX`, upper triangle computed and mirrored.
pub fn covariance(x: &DesignMatrix) -> CovarianceMatrix {
    let inv_n = 1.0 / x.n as f64;
    let values = x.gram().into_iter().map(|g| g * inv_n).collect();
    CovarianceMatrix { values, p: x.p }
}

/// Multiplies column `k` by `signs[k]`, turning a sign-constrained problem into
/// a non-negative one.
pub fn apply_sign_pattern(x: &DesignMatrix, signs: &SignPattern) -> Result<DesignMatrix> {
    if signs.len() != x.p {
        return Err(Error::Dimension(format!(
            "sign pattern has length {}, design has {} columns",
            signs.len(),
            x.p
        )));
    }
    let s: Vec<f64> = signs.as_f64();
    let values = x
        .rows()
        .flat_map(|row| row.iter().zip(&s).map(|(v, s)| v * s).collect::<Vec<_>>())
        .collect();
    let scales = x.scales.iter().zip(&s).map(|(c, s)| c * s).collect();
    Ok(DesignMatrix { values, n: x.n, p: x.p, standardized: x.standardized, scales })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseVector {
    values: Vec<f64>,
}

impl ResponseVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: i, col: 0 });
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_against(&self, x: &DesignMatrix) -> Result<()> {
        if self.len() != x.n() {
            return Err(Error::Dimension(format!(
                "response has length {}, design has {} rows",
                self.len(),
                x.n()
            )));
        }
        Ok(())
    }
}

/// Symmetric `p×p` matrix, either an empirical `Σ̂` or a user-supplied population `Σ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceMatrix {
    values: Vec<f64>,
    p: usize,
}

impl CovarianceMatrix {
    /// Validates finiteness and symmetry (absolute tolerance [`SYMMETRY_TOL`]).
    pub fn new(p: usize, values: Vec<f64>) -> Result<Self> {
        Self::with_symmetry_tol(p, values, SYMMETRY_TOL)
    }

    pub fn with_symmetry_tol(p: usize, values: Vec<f64>, tol: f64) -> Result<Self> {
        if p == 0 || values.len() != p * p {
            return Err(Error::Dimension(format!(
                "covariance needs {}x{} values, got {}",
                p,
                p,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: pos / p, col: pos % p });
        }
        for i in 0..p {
            for j in 0..i {
                let gap = (values[i * p + j] - values[j * p + i]).abs();
                if gap > tol {
                    return Err(Error::NotSymmetric { i, j, gap });
                }
            }
        }
        Ok(Self { values, p })
    }

    /// Replaces the input by `(A + Aᵀ)/2`; the quadratic form is unchanged.
    pub fn symmetrized(p: usize, values: Vec<f64>) -> Result<Self> {
        if p == 0 || values.len() != p * p {
            return Err(Error::Dimension(format!("covariance needs {p}x{p} values")));
        }
        let mut sym = values.clone();
        for i in 0..p {
            for j in 0..p {
                sym[i * p + j] = 0.5 * (values[i * p + j] + values[j * p + i]);
            }
        }
        Self::new(p, sym)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.len();
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::Dimension("covariance rows must form a square matrix".into()));
        }
        Self::new(p, rows.concat())
    }

    pub fn identity(p: usize) -> Self {
        let mut values = vec![0.0; p * p];
        for i in 0..p {
            values[i * p + i] = 1.0;
        }
        Self { values, p }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.p + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.p..(i + 1) * self.p]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks_exact(self.p).map(<[f64]>::to_vec).collect()
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        self.values.chunks_exact(self.p).map(|r| dot(r, v)).collect()
    }

    /// `βᵀAβ`.
    pub fn quad_form(&self, beta: &[f64]) -> f64 {
        dot(&self.mul_vec(beta), beta)
    }

    pub fn min_entry(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { values: self.values.iter().map(|v| v * c).collect(), p: self.p }
    }

    /// Principal submatrix on `idx` (in the given order).
    pub fn submatrix(&self, idx: &[usize]) -> Self {
        let k = idx.len();
        let mut values = Vec::with_capacity(k * k);
        for &i in idx {
            for &j in idx {
                values.push(self.get(i, j));
            }
        }
        Self { values, p: k }
    }

    /// `diag(σ) A diag(σ)` for a sign vector given as ±1.0 entries.
    pub fn sign_flipped(&self, signs: &[f64]) -> Self {
        let p = self.p;
        let mut values = self.values.clone();
        for i in 0..p {
            for j in 0..p {
                values[i * p + j] *= signs[i] * signs[j];
            }
        }
        Self { values, p }
    }

    pub fn eigen(&self) -> SymmetricEigen<f64, nalgebra::Dyn> {
        let m = DMatrix::from_row_slice(self.p, self.p, &self.values);
        SymmetricEigen::new(m)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Smallest eigenvalue is at least `-tol · max(1, spectral radius)`.
    pub fn is_psd(&self, tol: f64) -> bool {
        let ev = self.eigen().eigenvalues;
        let scale = ev.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        ev.iter().all(|&v| v >= -tol * scale)
    }

    /// A factor `R` (`r×p`, row-major) with `RᵀR = A`, built from the
    /// eigendecomposition with negligible eigenvalues dropped. `None` when the
    /// matrix is not PSD within [`PSD_TOL`].
    pub fn psd_factor(&self) -> Option<Factor> {
        let eig = self.eigen();
        let scale = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if eig.eigenvalues.iter().any(|&v| v < -PSD_TOL * scale.max(1.0)) {
            return None;
        }
        let cutoff = scale * 1e-15 * self.p as f64;
        let p = self.p;
        let mut values = Vec::new();
        let mut rows = 0;
        for (k, &lam) in eig.eigenvalues.iter().enumerate() {
            if lam <= cutoff {
                continue;
            }
            let root = lam.sqrt();
            values.extend((0..p).map(|j| root * eig.eigenvectors[(j, k)]));
            rows += 1;
        }
        Some(Factor { values, rows, cols: p })
    }
}

/// Row-major factor of a PSD matrix.
#[derive(Debug, Clone)]
pub struct Factor {
    pub values: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientVector {
    values: Vec<f64>,
}

impl CoefficientVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(p: usize) -> Self {
        Self { values: vec![0.0; p] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Indices of nonzero entries, ascending.
    pub fn support(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }

    pub fn max_abs_diff(&self, other: &[f64]) -> f64 {
        max_abs_diff(&self.values, other)
    }
}

impl From<Vec<f64>> for CoefficientVector {
    fn from(values: Vec<f64>) -> Self {
        Self { values }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignPattern {
    signs: Vec<i8>,
}

impl SignPattern {
    pub fn new(signs: Vec<i8>) -> Result<Self> {
        if let Some(i) = signs.iter().position(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidArgument(format!(
                "sign pattern entry {i} is {}, expected +1 or -1",
                signs[i]
            )));
        }
        Ok(Self { signs })
    }

    pub fn all_positive(p: usize) -> Self {
        Self { signs: vec![1; p] }
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.signs.iter().map(|&s| f64::from(s)).collect()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Result of a column-pivoted least-squares solve.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub coef: Vec<f64>,
    pub rank: usize,
}

/// Minimizes `‖y − Aβ‖₂` where `A` is given by its columns.
///
/// Householder QR with column pivoting. Columns found numerically dependent
/// get coefficient zero (the basic solution), and `rank` reports how many
/// columns were kept.
pub fn least_squares_columns(columns: &[Vec<f64>], y: &[f64]) -> LeastSquares {
    let k = columns.len();
    let m = y.len();
    let mut a: Vec<Vec<f64>> = columns.to_vec();
    let mut b = y.to_vec();
    let mut perm: Vec<usize> = (0..k).collect();
    let mut diag = Vec::with_capacity(k.min(m));

    let max_norm = a.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).fold(0.0, f64::max);
    let rank_tol = max_norm * (m.max(k) as f64) * f64::EPSILON * 10.0;
    let mut rank = 0;

    for step in 0..k.min(m) {
        // Pivot: largest remaining column norm, lowest index on ties.
        let mut best = step;
        let mut best_norm = -1.0;
        for (j, col) in a.iter().enumerate().skip(step) {
            let nrm: f64 = col[step..].iter().map(|v| v * v).sum();
            if nrm > best_norm {
                best_norm = nrm;
                best = j;
            }
        }
        a.swap(step, best);
        perm.swap(step, best);

        let norm = best_norm.sqrt();
        if norm <= rank_tol || norm == 0.0 {
            break;
        }
        let x0 = a[step][step];
        let alpha = if x0 >= 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[step][step..].to_vec();
        v[0] -= alpha;
        let vtv: f64 = v.iter().map(|t| t * t).sum();
        if vtv > 0.0 {
            for col in a.iter_mut().skip(step + 1) {
                reflect(&v, vtv, &mut col[step..]);
            }
            reflect(&v, vtv, &mut b[step..]);
        }
        a[step][step] = alpha;
        for t in a[step][step + 1..].iter_mut() {
            *t = 0.0;
        }
        diag.push(alpha);
        rank += 1;
    }

    // Back substitution on the leading rank×rank triangle.
    let mut z = vec![0.0; rank];
    for i in (0..rank).rev() {
        let mut acc = b[i];
        for j in i + 1..rank {
            acc -= a[j][i] * z[j];
        }
        z[i] = acc / diag[i];
    }
    let mut coef = vec![0.0; k];
    for (i, zi) in z.into_iter().enumerate() {
        coef[perm[i]] = zi;
    }
    LeastSquares { coef, rank }
}

fn reflect(v: &[f64], vtv: f64, x: &mut [f64]) {
    let s = 2.0 * dot(v, x) / vtv;
    if s != 0.0 {
        for (xi, vi) in x.iter_mut().zip(v) {
            *xi -= s * vi;
        }
    }
}

//! Dense row-major matrix type and the linear-algebra primitives used
//! throughout the crate: products, Frobenius norms, largest squared singular
//! value by power iteration, and log-determinant with inverse for shifted
//! Gram matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense real matrix, row-major storage, 64-bit entries.
///
/// Public constructors reject non-finite entries; internal arithmetic does not
/// re-validate, so solver-level code is responsible for detecting divergence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<RawMatrix> for Matrix {
    type Error = Error;

    fn try_from(raw: RawMatrix) -> Result<Matrix> {
        Matrix::new(raw.rows, raw.cols, raw.data)
    }
}

impl Matrix {
    /// Builds a matrix from row-major data, validating the entry count and
    /// that every entry is finite.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::dim("Matrix::new", format!("empty shape {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::dim(
                "Matrix::new",
                format!("{rows}x{cols} needs {} entries, got {}", rows * cols, data.len()),
            ));
        }
        if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!(
                "non-finite entry {} at flat index {idx}",
                data[idx]
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Internal constructor for arithmetic results; skips validation.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_raw(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from row slices; all rows must share one length.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::dim("Matrix::from_rows", "no rows"));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::dim("Matrix::from_rows", "ragged rows"));
        }
        let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(rows.len(), cols, data)
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

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    /// Row-major entries.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Copies column `j` into a vector.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn set_column(&mut self, j: usize, col: &[f64]) {
        debug_assert_eq!(col.len(), self.rows);
        for (i, &v) in col.iter().enumerate() {
            self.set(i, j, v);
        }
    }

    /// Sub-matrix made of the listed columns, in order (repeats allowed).
    pub fn select_columns(&self, indices: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(self.rows, indices.len());
        for (jj, &j) in indices.iter().enumerate() {
            for i in 0..self.rows {
                out.set(i, jj, self.get(i, j));
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Standard matrix product `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::dim(
                "matmul",
                format!("{}x{} * {}x{}", self.rows, self.cols, other.rows, other.cols),
            ));
        }
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let o_row = &mut out[i * n..(i + 1) * n];
            for (p, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b) in o_row.iter_mut().zip(b_row.iter()) {
                    *o += a * b;
                }
            }
        }
        Ok(Matrix::from_raw(m, n, out))
    }

    /// `self^T * other` without materializing the transpose.
    pub fn matmul_tn(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::dim(
                "matmul_tn",
                format!("{}x{}^T * {}x{}", self.rows, self.cols, other.rows, other.cols),
            ));
        }
        let (m, k, n) = (self.cols, self.rows, other.cols);
        let mut out = vec![0.0; m * n];
        for p in 0..k {
            let a_row = &self.data[p * m..(p + 1) * m];
            let b_row = &other.data[p * n..(p + 1) * n];
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let o_row = &mut out[i * n..(i + 1) * n];
                for (o, &b) in o_row.iter_mut().zip(b_row.iter()) {
                    *o += a * b;
                }
            }
        }
        Ok(Matrix::from_raw(m, n, out))
    }

    /// `self * other^T` without materializing the transpose.
    pub fn matmul_nt(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::dim(
                "matmul_nt",
                format!("{}x{} * {}x{}^T", self.rows, self.cols, other.rows, other.cols),
            ));
        }
        let (m, k, n) = (self.rows, self.cols, other.rows);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let o_row = &mut out[i * n..(i + 1) * n];
            for (j, o) in o_row.iter_mut().enumerate() {
                let b_row = &other.data[j * k..(j + 1) * k];
                let mut acc = 0.0;
                for (&a, &b) in a_row.iter().zip(b_row.iter()) {
                    acc += a * b;
                }
                *o += acc;
            }
        }
        Ok(Matrix::from_raw(m, n, out))
    }

    /// Gram matrix `self^T * self`.
    pub fn gram(&self) -> Matrix {
        self.matmul_tn(self).expect("same matrix always conforms")
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::dim(
                "sub",
                format!("{:?} vs {:?}", self.shape(), other.shape()),
            ));
        }
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a - b)
            .collect();
        Ok(Matrix::from_raw(self.rows, self.cols, data))
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::dim(
                "add",
                format!("{:?} vs {:?}", self.shape(), other.shape()),
            ));
        }
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a + b)
            .collect();
        Ok(Matrix::from_raw(self.rows, self.cols, data))
    }

    pub fn scaled(&self, s: f64) -> Matrix {
        Matrix::from_raw(self.rows, self.cols, self.data.iter().map(|v| v * s).collect())
    }

    /// `self += s * other`; shapes must match.
    pub fn add_scaled_in_place(&mut self, other: &Matrix, s: f64) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::dim(
                "add_scaled_in_place",
                format!("{:?} vs {:?}", self.shape(), other.shape()),
            ));
        }
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += s * b;
        }
        Ok(())
    }

    /// Entrywise map.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix::from_raw(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn frob_norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Squared Frobenius distance between two same-shaped matrices.
    pub fn frob_err_sq(&self, other: &Matrix) -> Result<f64> {
        if self.shape() != other.shape() {
            return Err(Error::dim(
                "frob_err_sq",
                format!("{:?} vs {:?}", self.shape(), other.shape()),
            ));
        }
        Ok(self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        debug_assert_eq!(self.rows, self.cols);
        (0..self.rows).map(|i| self.data[i * self.cols + i]).sum()
    }

    /// Frobenius inner product `<self, other>`.
    pub fn dot(&self, other: &Matrix) -> Result<f64> {
        if self.shape() != other.shape() {
            return Err(Error::dim(
                "dot",
                format!("{:?} vs {:?}", self.shape(), other.shape()),
            ));
        }
        Ok(self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a * b)
            .sum())
    }

    /// Largest eigenvalue of `self^T self` (the squared spectral norm), by
    /// power iteration on the smaller of the two Gram matrices to relative
    /// tolerance 1e-9, capped at 1000 iterations. Returns 0 for the zero
    /// matrix.
    pub fn spectral_norm_sq(&self) -> f64 {
        let gram = if self.cols <= self.rows {
            self.matmul_tn(self)
        } else {
            self.matmul_nt(self)
        }
        .expect("gram of self always conforms");
        largest_eigenvalue_psd(&gram)
    }
}

/// Power iteration for the largest eigenvalue of a symmetric PSD matrix.
fn largest_eigenvalue_psd(g: &Matrix) -> f64 {
    let n = g.rows();
    if g.max_abs() == 0.0 {
        return 0.0;
    }
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 / (n as f64 + 1.0)).collect();
    normalize(&mut v);
    // Fall back to basis vectors if the start vector happens to be annihilated.
    let mut attempt = 0usize;
    let mut lambda = 0.0f64;
    loop {
        let mut converged = false;
        for _ in 0..1000 {
            let w = mat_vec(g, &v);
            let new_lambda: f64 = v.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
            let norm_w = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm_w == 0.0 {
                break;
            }
            v = w;
            normalize(&mut v);
            if (new_lambda - lambda).abs() <= 1e-9 * new_lambda.abs().max(f64::MIN_POSITIVE) {
                lambda = new_lambda;
                converged = true;
                break;
            }
            lambda = new_lambda;
        }
        if converged || lambda != 0.0 || attempt >= n {
            return lambda.max(0.0);
        }
        v = vec![0.0; n];
        v[attempt] = 1.0;
        attempt += 1;
    }
}

fn mat_vec(g: &Matrix, v: &[f64]) -> Vec<f64> {
    let n = g.rows();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let row = g.row(i);
        out[i] = row.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
    }
    out
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

/// Log-determinant and inverse of `g + delta*I` for a symmetric PSD `g`,
/// through a Cholesky factorization. One diagonal-jitter retry is attempted
/// before reporting a numerical failure.
pub fn logdet_and_inverse(g: &Matrix, delta: f64) -> Result<(f64, Matrix)> {
    if g.rows() != g.cols() {
        return Err(Error::dim(
            "logdet_and_inverse",
            format!("square matrix required, got {}x{}", g.rows(), g.cols()),
        ));
    }
    if delta <= 0.0 {
        return Err(Error::usage(format!("delta must be positive, got {delta}")));
    }
    let n = g.rows();
    let sym_tol = 1e-8 * g.max_abs().max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            if (g.get(i, j) - g.get(j, i)).abs() > sym_tol {
                return Err(Error::usage(format!(
                    "matrix not symmetric at ({i},{j}): {} vs {}",
                    g.get(i, j),
                    g.get(j, i)
                )));
            }
        }
    }
    let mut shifted = g.clone();
    for i in 0..n {
        let v = shifted.get(i, i) + delta;
        shifted.set(i, i, v);
    }
    match cholesky(&shifted) {
        Ok(chol) => Ok(finish_logdet(&chol, n)),
        Err(first_failure) => {
            // The delta shift normally guarantees positive definiteness; retry
            // once with a trace-scaled jitter before giving up.
            let jitter = 1e-12 * shifted.trace() / n as f64;
            let mut retry = shifted.clone();
            for i in 0..n {
                let v = retry.get(i, i) + jitter;
                retry.set(i, i, v);
            }
            match cholesky(&retry) {
                Ok(chol) => Ok(finish_logdet(&chol, n)),
                Err(_) => Err(Error::numerical(format!(
                    "Cholesky failed on {n}x{n} shifted Gram matrix ({first_failure}); \
                     trace {:.3e}, max |entry| {:.3e}, delta {delta:.3e}",
                    shifted.trace(),
                    shifted.max_abs(),
                ))),
            }
        }
    }
}

fn finish_logdet(chol: &Matrix, n: usize) -> (f64, Matrix) {
    let logdet = 2.0 * (0..n).map(|i| chol.get(i, i).ln()).sum::<f64>();
    // Solve L L^T X = I column by column.
    let mut inv = Matrix::zeros(n, n);
    for col in 0..n {
        let mut e = vec![0.0; n];
        e[col] = 1.0;
        // Forward: L y = e
        for i in 0..n {
            let mut sum = e[i];
            for k in 0..i {
                sum -= chol.get(i, k) * e[k];
            }
            e[i] = sum / chol.get(i, i);
        }
        // Backward: L^T x = y
        for i in (0..n).rev() {
            let mut sum = e[i];
            for k in (i + 1)..n {
                sum -= chol.get(k, i) * e[k];
            }
            e[i] = sum / chol.get(i, i);
        }
        inv.set_column(col, &e);
    }
    // Symmetrize to remove round-off asymmetry.
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (inv.get(i, j) + inv.get(j, i));
            inv.set(i, j, v);
            inv.set(j, i, v);
        }
    }
    (logdet, inv)
}

/// Lower-triangular Cholesky factor; fails on a non-positive pivot.
fn cholesky(a: &Matrix) -> std::result::Result<Matrix, String> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a.get(i, j);
            for k in 0..j {
                sum -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(format!("non-positive pivot {sum:.3e} at index {i}"));
                }
                l.set(i, j, sum.sqrt());
            } else {
                l.set(i, j, sum / l.get(j, j));
            }
        }
    }
    Ok(l)
}

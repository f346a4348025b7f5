//! Small dense complex linear algebra used by the detectors.
//!
//! Everything here works on [`ComplexMatrix`], a row-major matrix of
//! `Complex64`. The sizes involved are tiny (at most 12x4 for the extended
//! overloaded system), so plain loops beat anything fancier.

use num_complex::Complex64;
use std::fmt;
use std::ops::{Index, IndexMut};

/// Relative tolerance for the rank test on the R diagonal.
pub const RANK_TOL: f64 = 1e-10;
/// Relative pivot tolerance for Cholesky.
pub const PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum NumericsError {
    #[error("matrix is rank deficient (|r_kk| = {min_diag:e} vs max {max_diag:e})")]
    RankDeficient { min_diag: f64, max_diag: f64 },
    #[error("matrix is not positive definite (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix must have rows >= cols ({rows}x{cols})")]
    Wide { rows: usize, cols: usize },
}

/// Dense complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
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

    /// Builds a matrix from row-major entries.
    ///
    /// Panics if `data.len() != rows * cols`.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<Complex64>) -> Self {
        assert_eq!(data.len(), rows * cols, "entries must be rows*cols");
        Self { rows, cols, data }
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let data = rows
            .iter()
            .flat_map(|row| {
                assert_eq!(row.len(), c, "ragged rows");
                row.iter().map(|&v| Complex64::new(v, 0.0))
            })
            .collect();
        Self::from_row_major(r, c, data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn mul(&self, other: &ComplexMatrix) -> Self {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.cols, x.len(), "vector length differs from cols");
        self.data
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `selfᴴ · x`.
    pub fn adjoint_mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.rows, x.len(), "vector length differs from rows");
        let mut out = vec![Complex64::new(0.0, 0.0); self.cols];
        for (row, xi) in self.data.chunks_exact(self.cols).zip(x) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a.conj() * xi;
            }
        }
        out
    }

    /// `selfᴴ · self`.
    pub fn gram(&self) -> Self {
        let n = self.cols;
        let mut g = Self::zeros(n, n);
        for row in self.data.chunks_exact(n) {
            for i in 0..n {
                let ai = row[i].conj();
                for (gij, &aj) in g.data[i * n..(i + 1) * n].iter_mut().zip(row) {
                    *gij += ai * aj;
                }
            }
        }
        g
    }

    /// Keeps the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Self::from_fn(self.rows, cols.len(), |i, j| self[(i, cols[j])])
    }

    /// Stacks `other` below `self`.
    pub fn vstack(&self, other: &ComplexMatrix) -> Self {
        assert_eq!(self.cols, other.cols, "column counts differ");
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Self {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        }
    }

    /// Largest elementwise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for row in self.data.chunks(self.cols.max(1)) {
            write!(f, "  ")?;
            for z in row {
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Thin QR factorization `A = Q·R` with `Q` of shape rows×cols and `R`
/// upper triangular with a real, strictly positive diagonal.
///
/// Modified Gram–Schmidt with one reorthogonalization pass, which keeps
/// `QᴴQ` orthonormal to machine precision for the sizes used here.
pub fn qr_decompose(a: &ComplexMatrix) -> Result<(ComplexMatrix, ComplexMatrix), NumericsError> {
    let (m, n) = (a.rows, a.cols);
    if m < n {
        return Err(NumericsError::Wide { rows: m, cols: n });
    }
    let mut q = ComplexMatrix::zeros(m, n);
    let mut r = ComplexMatrix::zeros(n, n);
    let mut v = vec![Complex64::new(0.0, 0.0); m];
    let mut max_diag = 0.0f64;
    let mut min_diag = f64::INFINITY;

    for j in 0..n {
        for (i, vi) in v.iter_mut().enumerate() {
            *vi = a[(i, j)];
        }
        for _pass in 0..2 {
            for k in 0..j {
                let mut proj = Complex64::new(0.0, 0.0);
                for (i, vi) in v.iter().enumerate() {
                    proj += q[(i, k)].conj() * vi;
                }
                for (i, vi) in v.iter_mut().enumerate() {
                    *vi -= q[(i, k)] * proj;
                }
                r[(k, j)] += proj;
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        max_diag = max_diag.max(norm);
        min_diag = min_diag.min(norm);
        r[(j, j)] = Complex64::new(norm, 0.0);
        if norm > 0.0 {
            for (i, vi) in v.iter().enumerate() {
                q[(i, j)] = vi / norm;
            }
        }
    }

    if n > 0 && !(min_diag >= RANK_TOL * max_diag && max_diag > 0.0) {
        return Err(NumericsError::RankDeficient { min_diag, max_diag });
    }
    Ok((q, r))
}

/// Solves `A·X = B` for Hermitian positive definite `A` via Cholesky.
pub fn hermitian_solve(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix, NumericsError> {
    let n = a.rows;
    if a.cols != n {
        return Err(NumericsError::DimensionMismatch {
            expected: n,
            got: a.cols,
        });
    }
    if b.rows != n {
        return Err(NumericsError::DimensionMismatch {
            expected: n,
            got: b.rows,
        });
    }
    let l = cholesky(a)?;
    let mut x = b.clone();
    for col in 0..b.cols {
        // forward: L·z = b
        for i in 0..n {
            let mut s = x[(i, col)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, col)];
            }
            x[(i, col)] = s / l[(i, i)].re;
        }
        // backward: Lᴴ·x = z
        for i in (0..n).rev() {
            let mut s = x[(i, col)];
            for k in i + 1..n {
                s -= l[(k, i)].conj() * x[(k, col)];
            }
            x[(i, col)] = s / l[(i, i)].re;
        }
    }
    Ok(x)
}

/// Lower Cholesky factor `L` with `A = L·Lᴴ`.
pub fn cholesky(a: &ComplexMatrix) -> Result<ComplexMatrix, NumericsError> {
    let n = a.rows;
    let trace: f64 = (0..n).map(|i| a[(i, i)].re).sum();
    let floor = PIVOT_TOL * trace / n.max(1) as f64;
    let mut l = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if d.is_nan() || d <= floor {
            return Err(NumericsError::NotPositiveDefinite { row: j, pivot: d });
        }
        let djj = d.sqrt();
        l[(j, j)] = Complex64::new(djj, 0.0);
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Inverse of a Hermitian positive definite matrix.
pub fn hermitian_inverse(a: &ComplexMatrix) -> Result<ComplexMatrix, NumericsError> {
    hermitian_solve(a, &ComplexMatrix::identity(a.rows))
}

/// Solves the upper-triangular system `R·x = z`.
pub fn back_substitute(r: &ComplexMatrix, z: &[Complex64]) -> Vec<Complex64> {
    let n = r.cols;
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in i + 1..n {
            s -= r[(i, k)] * x[k];
        }
        x[i] = s / r[(i, i)];
    }
    x
}

/// `argmin ‖A·x − b‖₂` through the thin QR of `A`.
pub fn least_squares_solve(a: &ComplexMatrix, b: &[Complex64]) -> Result<Vec<Complex64>, NumericsError> {
    if b.len() != a.rows {
        return Err(NumericsError::DimensionMismatch {
            expected: a.rows,
            got: b.len(),
        });
    }
    let (q, r) = qr_decompose(a)?;
    let z = q.adjoint_mul_vec(b);
    Ok(back_substitute(&r, &z))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn col(v: &[f64]) -> Vec<Complex64> {
        v.iter().map(|&x| c(x, 0.0)).collect()
    }

    #[test]
    fn qr_single_column() {
        let a = ComplexMatrix::from_real_rows(&[&[3.0], &[4.0]]);
        let (q, r) = qr_decompose(&a).unwrap();
        assert!((q[(0, 0)] - c(0.6, 0.0)).norm() < 1e-15);
        assert!((q[(1, 0)] - c(0.8, 0.0)).norm() < 1e-15);
        assert!((r[(0, 0)] - c(5.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn qr_identity() {
        let a = ComplexMatrix::identity(3);
        let (q, r) = qr_decompose(&a).unwrap();
        assert!(q.max_abs_diff(&a) < 1e-15);
        assert!(r.max_abs_diff(&a) < 1e-15);
    }

    #[test]
    fn qr_complex_phase_goes_into_q() {
        let a = ComplexMatrix::from_row_major(1, 1, vec![c(0.0, 2.0)]);
        let (q, r) = qr_decompose(&a).unwrap();
        assert!((r[(0, 0)] - c(2.0, 0.0)).norm() < 1e-15);
        assert!((q[(0, 0)] - c(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn qr_rejects_dependent_columns() {
        let a = ComplexMatrix::from_real_rows(&[&[1.0, 2.0], &[2.0, 4.0], &[3.0, 6.0]]);
        assert!(matches!(
            qr_decompose(&a),
            Err(NumericsError::RankDeficient { .. })
        ));
        let zero = ComplexMatrix::zeros(2, 1);
        assert!(qr_decompose(&zero).is_err());
    }

    #[test]
    fn qr_rejects_wide() {
        let a = ComplexMatrix::zeros(1, 4);
        assert_eq!(
            qr_decompose(&a),
            Err(NumericsError::Wide { rows: 1, cols: 4 })
        );
    }

    #[test]
    fn solve_identity_and_scaled() {
        let b = ComplexMatrix::from_row_major(2, 2, vec![c(1.0, 2.0), c(-3.0, 0.5), c(0.0, 1.0), c(4.0, -4.0)]);
        let x = hermitian_solve(&ComplexMatrix::identity(2), &b).unwrap();
        assert!(x.max_abs_diff(&b) < 1e-15);

        let two = ComplexMatrix::identity(2).scale(c(2.0, 0.0));
        let x = hermitian_solve(&two, &ComplexMatrix::identity(2)).unwrap();
        assert!(x.max_abs_diff(&ComplexMatrix::identity(2).scale(c(0.5, 0.0))) < 1e-15);
    }

    #[test]
    fn solve_two_by_two() {
        let a = ComplexMatrix::from_real_rows(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let b = ComplexMatrix::from_real_rows(&[&[1.0], &[1.0]]);
        let x = hermitian_solve(&a, &b).unwrap();
        assert!((x[(0, 0)] - c(1.0 / 3.0, 0.0)).norm() < 1e-15);
        assert!((x[(1, 0)] - c(1.0 / 3.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn solve_rejects_indefinite() {
        let a = ComplexMatrix::from_real_rows(&[&[1.0, 2.0], &[2.0, 1.0]]);
        assert!(matches!(
            hermitian_solve(&a, &ComplexMatrix::identity(2)),
            Err(NumericsError::NotPositiveDefinite { row: 1, .. })
        ));
    }

    #[test]
    fn least_squares_examples() {
        let x = least_squares_solve(&ComplexMatrix::identity(3), &col(&[1.0, -2.0, 3.0])).unwrap();
        assert_eq!(x, col(&[1.0, -2.0, 3.0]));

        let a = ComplexMatrix::from_real_rows(&[&[1.0], &[1.0]]);
        let x = least_squares_solve(&a, &col(&[1.0, 3.0])).unwrap();
        assert!((x[0] - c(2.0, 0.0)).norm() < 1e-14);

        let a = ComplexMatrix::from_real_rows(&[&[2.0, 0.0], &[0.0, 4.0]]);
        let x = least_squares_solve(&a, &col(&[2.0, 8.0])).unwrap();
        assert!((x[0] - c(1.0, 0.0)).norm() < 1e-15);
        assert!((x[1] - c(2.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn least_squares_length_check() {
        let a = ComplexMatrix::identity(2);
        assert!(matches!(
            least_squares_solve(&a, &col(&[1.0])),
            Err(NumericsError::DimensionMismatch { expected: 2, got: 1 })
        ));
    }
}

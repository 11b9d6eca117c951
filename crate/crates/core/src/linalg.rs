//! Dense matrices sized for parameter dimensions up to eight.
//!
//! Everything downstream works with small symmetric matrices (Fisher
//! information, squared-error fields), so the implementation favours
//! predictable numerics over scale: cyclic Jacobi rotations for the
//! eigendecomposition, adjugate inversion for d <= 3, spectral inversion
//! and square roots above that.

use crate::error::{Error, Result};

/// Largest parameter dimension the eigen routines accept.
pub const MAX_DIM: usize = 8;

/// Relative eigenvalue floor for the positive-definiteness gate.
pub const SPD_RELATIVE_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix {
            rows: r,
            cols: c,
            data,
        }
    }

    pub fn diagonal(entries: &[f64]) -> Self {
        let mut m = Matrix::zeros(entries.len(), entries.len());
        for (i, &x) in entries.iter().enumerate() {
            m[(i, i)] = x;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Matrix {
        let mut out = self.clone();
        for x in &mut out.data {
            *x *= s;
        }
        out
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (x, y) in out.data.iter_mut().zip(&other.data) {
            *x += y;
        }
        out
    }

    /// x^T * self * y for column vectors given as slices.
    pub fn quadratic_form(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), self.rows);
        assert_eq!(y.len(), self.cols);
        let mut acc = 0.0;
        for i in 0..self.rows {
            let mut row = 0.0;
            for j in 0..self.cols {
                row += self[(i, j)] * y[j];
            }
            acc += x[i] * row;
        }
        acc
    }

    /// self * v for a column vector.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    /// Block-diagonal assembly of two square matrices.
    pub fn block_diag(a: &Matrix, b: &Matrix) -> Matrix {
        assert_eq!(a.rows, a.cols);
        assert_eq!(b.rows, b.cols);
        let n = a.rows + b.rows;
        let mut out = Matrix::zeros(n, n);
        for i in 0..a.rows {
            for j in 0..a.cols {
                out[(i, j)] = a[(i, j)];
            }
        }
        for i in 0..b.rows {
            for j in 0..b.cols {
                out[(a.rows + i, a.cols + j)] = b[(i, j)];
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn symmetry_gap(&self) -> f64 {
        let mut gap: f64 = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                gap = gap.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        gap
    }

    /// Average with the transpose. Removes roundoff asymmetry.
    pub fn symmetrized(&self) -> Matrix {
        assert!(self.is_square());
        let mut out = self.clone();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

// ---------------------------------------------------------------------------
// Eigendecomposition
// ---------------------------------------------------------------------------

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching orthonormal
/// eigenvectors as matrix columns.
pub fn sym_eigen(m: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    if !m.is_square() {
        return Err(Error::Domain(
            "eigendecomposition needs a square matrix".into(),
        ));
    }
    let n = m.rows();
    if n > MAX_DIM {
        return Err(Error::Unsupported(format!(
            "eigendecomposition implemented for dimension <= {MAX_DIM}, got {n}"
        )));
    }
    let scale = m.max_abs().max(1e-300);
    if m.symmetry_gap() > 1e-8 * scale {
        return Err(Error::Domain(format!(
            "matrix is not symmetric: gap {:e}",
            m.symmetry_gap()
        )));
    }

    let mut a = m.symmetrized();
    let mut v = Matrix::identity(n);
    let tol = 1e-15 * scale;

    for _sweep in 0..64 {
        let mut off: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off = off.max(a[(i, j)].abs());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= tol * 1e-2 {
                    continue;
                }
                let tau = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].partial_cmp(&a[(j, j)]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, new_col)] = v[(k, old_col)];
        }
    }
    Ok((values, vectors))
}

/// Positive-definiteness gate: smallest eigenvalue must exceed
/// `SPD_RELATIVE_FLOOR` times the largest.
pub fn spd_gate(eigenvalues: &[f64]) -> bool {
    let max = eigenvalues.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let min = eigenvalues.iter().fold(f64::INFINITY, |m, &x| m.min(x));
    max > 0.0 && min > SPD_RELATIVE_FLOOR * max
}

/// Inverse of a symmetric positive-definite matrix.
///
/// Adjugate formula for d <= 3, spectral inversion above that. Fails the
/// same positive-definiteness gate as the Fisher checks.
pub fn spd_inverse(m: &Matrix) -> Result<Matrix> {
    if !m.is_square() {
        return Err(Error::Domain("inverse needs a square matrix".into()));
    }
    let n = m.rows();
    match n {
        0 => Err(Error::Domain("inverse of an empty matrix".into())),
        1 => {
            let a = m[(0, 0)];
            if a <= 0.0 {
                return Err(Error::Regularity(format!("1x1 matrix not positive: {a}")));
            }
            Ok(Matrix::from_rows(&[&[1.0 / a]]))
        }
        2 | 3 => {
            let (values, _) = sym_eigen(m)?;
            if !spd_gate(&values) {
                return Err(Error::Regularity(format!(
                    "matrix fails the positive-definiteness gate: eigenvalues {values:?}"
                )));
            }
            Ok(adjugate_inverse(m))
        }
        _ => {
            let (values, vectors) = sym_eigen(m)?;
            if !spd_gate(&values) {
                return Err(Error::Regularity(format!(
                    "matrix fails the positive-definiteness gate: eigenvalues {values:?}"
                )));
            }
            let inv_diag = Matrix::diagonal(&values.iter().map(|&l| 1.0 / l).collect::<Vec<_>>());
            Ok(vectors
                .matmul(&inv_diag)
                .matmul(&vectors.transpose())
                .symmetrized())
        }
    }
}

fn adjugate_inverse(m: &Matrix) -> Matrix {
    match m.rows() {
        2 => {
            let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
            let det = a * d - b * c;
            Matrix::from_rows(&[&[d / det, -b / det], &[-c / det, a / det]])
        }
        3 => {
            let det = m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
                - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
                + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)]);
            let mut inv = Matrix::zeros(3, 3);
            for i in 0..3 {
                for j in 0..3 {
                    let (r0, r1) = match i {
                        0 => (1, 2),
                        1 => (0, 2),
                        _ => (0, 1),
                    };
                    let (c0, c1) = match j {
                        0 => (1, 2),
                        1 => (0, 2),
                        _ => (0, 1),
                    };
                    let minor = m[(r0, c0)] * m[(r1, c1)] - m[(r0, c1)] * m[(r1, c0)];
                    let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                    inv[(j, i)] = sign * minor / det;
                }
            }
            inv
        }
        _ => unreachable!("adjugate path is for d in 2..=3"),
    }
}

/// Determinant of a symmetric positive-semidefinite matrix via eigenvalues.
pub fn sym_det(m: &Matrix) -> Result<f64> {
    let (values, _) = sym_eigen(m)?;
    Ok(values.iter().product())
}

/// Spectral (symmetric PSD) square root: R with R * R^T = m.
///
/// Eigenvalues within roundoff of zero clamp to zero, so the root of a
/// singular field (a collapsed direction after a change of variables)
/// stays well defined.
pub fn sym_sqrt(m: &Matrix) -> Result<Matrix> {
    let (values, vectors) = sym_eigen(m)?;
    let max = values.iter().fold(0.0_f64, |acc, &x| acc.max(x));
    let clamp = 1e-14 * max.max(1e-300);
    let mut roots = Vec::with_capacity(values.len());
    for &l in &values {
        if l < -clamp {
            return Err(Error::Regularity(format!(
                "square root of a matrix with negative eigenvalue {l:e}"
            )));
        }
        roots.push(if l <= clamp { 0.0 } else { l.sqrt() });
    }
    let d = Matrix::diagonal(&roots);
    Ok(vectors
        .matmul(&d)
        .matmul(&vectors.transpose())
        .symmetrized())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn eigen_of_diagonal_is_sorted_diagonal() {
        let m = Matrix::diagonal(&[3.0, 1.0, 2.0]);
        let (values, vectors) = sym_eigen(&m).unwrap();
        assert_eq!(values, vec![1.0, 2.0, 3.0]);
        let prod = vectors.transpose().matmul(&vectors);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(prod[(i, j)], expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn eigen_known_2x2() {
        let m = Matrix::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let (values, _) = sym_eigen(&m).unwrap();
        assert_relative_eq!(values[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(values[1], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn eigen_rejects_asymmetric() {
        let m = Matrix::from_rows(&[&[1.0, 2.0], &[0.0, 1.0]]);
        assert!(sym_eigen(&m).is_err());
    }

    #[test]
    fn eigen_rejects_oversized() {
        let m = Matrix::identity(MAX_DIM + 1);
        assert!(matches!(sym_eigen(&m), Err(Error::Unsupported(_))));
    }

    #[test]
    fn adjugate_inverse_2x2_known() {
        let m = Matrix::from_rows(&[&[4.0, 1.0], &[1.0, 3.0]]);
        let inv = spd_inverse(&m).unwrap();
        assert_relative_eq!(inv[(0, 0)], 3.0 / 11.0, epsilon = 1e-14);
        assert_relative_eq!(inv[(0, 1)], -1.0 / 11.0, epsilon = 1e-14);
        assert_relative_eq!(inv[(1, 1)], 4.0 / 11.0, epsilon = 1e-14);
    }

    #[test]
    fn inverse_rejects_near_singular() {
        let m = Matrix::diagonal(&[1.0, 1e-14]);
        assert!(matches!(spd_inverse(&m), Err(Error::Regularity(_))));
    }

    #[test]
    fn sqrt_of_identity_is_identity() {
        let r = sym_sqrt(&Matrix::identity(4)).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(r[(i, j)], expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn sqrt_clamps_roundoff_negative_to_zero() {
        let m = Matrix::diagonal(&[1.0, -1e-16]);
        let r = sym_sqrt(&m).unwrap();
        assert_eq!(r[(1, 1)], 0.0);
    }

    fn random_spd(dim: usize, entries: &[f64]) -> Matrix {
        let mut b = Matrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                b[(i, j)] = entries[i * dim + j];
            }
        }
        b.transpose()
            .matmul(&b)
            .add(&Matrix::identity(dim).scale(1e-3))
    }

    proptest! {
        #[test]
        fn eigen_reconstructs(dim in 2usize..=6, entries in proptest::collection::vec(-1.0f64..1.0, 36)) {
            let m = random_spd(dim, &entries);
            let (values, vectors) = sym_eigen(&m).unwrap();
            let rebuilt = vectors
                .matmul(&Matrix::diagonal(&values))
                .matmul(&vectors.transpose());
            let scale = m.max_abs().max(1.0);
            for i in 0..dim {
                for j in 0..dim {
                    prop_assert!((rebuilt[(i, j)] - m[(i, j)]).abs() < 1e-10 * scale);
                }
            }
        }

        #[test]
        fn inverse_times_matrix_is_identity(dim in 2usize..=6, entries in proptest::collection::vec(-1.0f64..1.0, 36)) {
            let m = random_spd(dim, &entries);
            let inv = spd_inverse(&m).unwrap();
            let prod = inv.matmul(&m);
            for i in 0..dim {
                for j in 0..dim {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((prod[(i, j)] - expect).abs() < 1e-8);
                }
            }
        }

        #[test]
        fn sqrt_squares_back(dim in 2usize..=6, entries in proptest::collection::vec(-1.0f64..1.0, 36)) {
            let m = random_spd(dim, &entries);
            let r = sym_sqrt(&m).unwrap();
            let sq = r.matmul(&r.transpose());
            let scale = m.max_abs().max(1.0);
            for i in 0..dim {
                for j in 0..dim {
                    prop_assert!((sq[(i, j)] - m[(i, j)]).abs() < 1e-9 * scale);
                }
            }
        }
    }
}

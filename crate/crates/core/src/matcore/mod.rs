//! Dense complex matrices and the factorization primitives the
//! decompositions are built from.

mod eigen;
mod io;
mod qr;
mod svd;

pub use eigen::{hermitian_eigen, hermitian_sqrt};
pub use io::{matrix_from_json, matrix_to_json, MatrixFile};
pub use qr::{qr_decompose, rq_decompose};
pub use svd::{svd, Svd};

use std::fmt;
use std::ops::{Index, IndexMut, Mul};

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Default tolerances. Every operation that takes a [`Tolerances`] can be
/// given tighter or looser values per call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    /// Structural predicates (unitarity, triangularity, unit diagonals).
    pub structural: f64,
    /// Relative rank threshold for QR / LU pivots.
    pub rank: f64,
    /// Negative eigenvalues above `-psd` are clamped to zero.
    pub psd: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            structural: 1e-9,
            rank: 1e-12,
            psd: 1e-9,
        }
    }
}

/// Dense row-major complex matrix.
///
/// Entries are always finite; constructors reject NaN and infinities.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

/// Structural diagnostics of a matrix at a given tolerance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatrixShapeReport {
    pub is_unitary_cols: bool,
    pub is_upper_triangular: bool,
    pub diag: Vec<C64>,
    pub tolerance: f64,
}

impl CMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidDims(format!("{rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::DimMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidParams("non-finite matrix entry".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    /// Builds a matrix from real row-major entries.
    pub fn from_real(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        Self::new(rows, cols, entries.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::DimMismatch("ragged rows".into()));
        }
        Self::new(r, c, rows.concat())
    }

    pub fn from_diag(d: &[C64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &z) in d.iter().enumerate() {
            m[(i, i)] = z;
        }
        m
    }

    pub fn from_real_diag(d: &[f64]) -> Self {
        let d: Vec<C64> = d.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::from_diag(&d)
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[Vec<C64>]) -> Result<Self> {
        let c = columns.len();
        let r = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|col| col.len() != r) {
            return Err(Error::DimMismatch("ragged columns".into()));
        }
        let mut m = Self::zeros(r, c);
        for (j, col) in columns.iter().enumerate() {
            m.set_column(j, col);
        }
        Ok(m)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn row(&self, i: usize) -> Vec<C64> {
        self.data[i * self.cols..(i + 1) * self.cols].to_vec()
    }

    pub fn set_column(&mut self, j: usize, col: &[C64]) {
        for (i, &z) in col.iter().enumerate() {
            self[(i, j)] = z;
        }
    }

    pub fn diag(&self) -> Vec<C64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::DimMismatch(format!(
                "{}x{} * {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let rhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self† · rhs` without materializing the adjoint.
    pub fn adjoint_mul(&self, rhs: &Self) -> Result<Self> {
        if self.rows != rhs.rows {
            return Err(Error::DimMismatch(format!(
                "({}x{})† * {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.cols, rhs.cols);
        for k in 0..self.rows {
            let rhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
            for i in 0..self.cols {
                let a = self.data[k * self.cols + i].conj();
                if a == ZERO {
                    continue;
                }
                let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, x: &[C64]) -> Result<Vec<C64>> {
        if x.len() != self.cols {
            return Err(Error::DimMismatch(format!(
                "{}x{} * vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| {
                self.data[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect())
    }

    pub fn add(&self, rhs: &Self) -> Result<Self> {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self> {
        self.zip_with(rhs, |a, b| a - b)
    }

    fn zip_with(&self, rhs: &Self, f: impl Fn(C64, C64) -> C64) -> Result<Self> {
        if self.shape() != rhs.shape() {
            return Err(Error::DimMismatch(format!(
                "{:?} vs {:?}",
                self.shape(),
                rhs.shape()
            )));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn trace(&self) -> C64 {
        self.diag().into_iter().sum()
    }

    pub fn max_imag(&self) -> f64 {
        self.data.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.max_imag() <= tol * self.max_abs().max(1.0)
    }

    /// Real parts as a row-major vector.
    pub fn real_parts(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.re).collect()
    }

    /// `‖A − A†‖_F`.
    pub fn hermitian_deviation(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut acc = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                acc += (self[(i, j)] - self[(j, i)].conj()).norm_sqr();
            }
        }
        acc.sqrt()
    }

    /// `‖A†A − I‖_F`.
    pub fn orthonormality_error(&self) -> f64 {
        let g = self.adjoint_mul(self).expect("square Gram matrix");
        g.sub(&Self::identity(self.cols))
            .expect("matching shape")
            .frobenius_norm()
    }

    pub fn is_unitary_cols(&self, tol: f64) -> bool {
        self.orthonormality_error() <= tol
    }

    /// Largest modulus strictly below the diagonal.
    pub fn lower_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..i.min(self.cols) {
                worst = worst.max(self[(i, j)].norm());
            }
        }
        worst
    }

    /// Lower-triangular part is below `tol · max(‖A‖_F, 1)`.
    pub fn is_upper_triangular(&self, tol: f64) -> bool {
        self.lower_residual() <= tol * self.frobenius_norm().max(1.0)
    }

    pub fn shape_report(&self, tol: f64) -> MatrixShapeReport {
        MatrixShapeReport {
            is_unitary_cols: self.is_unitary_cols(tol),
            is_upper_triangular: self.is_upper_triangular(tol),
            diag: self.diag(),
            tolerance: tol,
        }
    }

    /// Copy of the `r × c` block starting at `(r0, c0)`.
    pub fn submatrix(&self, r0: usize, c0: usize, r: usize, c: usize) -> Self {
        let mut out = Self::zeros(r, c);
        for i in 0..r {
            for j in 0..c {
                out[(i, j)] = self[(r0 + i, c0 + j)];
            }
        }
        out
    }

    pub fn set_submatrix(&mut self, r0: usize, c0: usize, block: &Self) {
        for i in 0..block.rows {
            for j in 0..block.cols {
                self[(r0 + i, c0 + j)] = block[(i, j)];
            }
        }
    }

    /// Gathers the listed columns (0-based) in order.
    pub fn select_columns(&self, idx: &[usize]) -> Self {
        let mut out = Self::zeros(self.rows, idx.len());
        for i in 0..self.rows {
            for (j, &c) in idx.iter().enumerate() {
                out[(i, j)] = self[(i, c)];
            }
        }
        out
    }

    /// Principal-style gather of rows `ri` and columns `ci`.
    pub fn select(&self, ri: &[usize], ci: &[usize]) -> Self {
        let mut out = Self::zeros(ri.len(), ci.len());
        for (a, &i) in ri.iter().enumerate() {
            for (b, &j) in ci.iter().enumerate() {
                out[(a, b)] = self[(i, j)];
            }
        }
        out
    }

    pub fn vstack(&self, below: &Self) -> Result<Self> {
        if self.cols != below.cols {
            return Err(Error::DimMismatch("vstack column counts".into()));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&below.data);
        Ok(Self {
            rows: self.rows + below.rows,
            cols: self.cols,
            data,
        })
    }

    /// `blkdiag(A, …, A)` with `copies` blocks.
    pub fn block_extend(&self, copies: usize) -> Self {
        let mut out = Self::zeros(self.rows * copies, self.cols * copies);
        for b in 0..copies {
            out.set_submatrix(b * self.rows, b * self.cols, self);
        }
        out
    }

    /// LU factorization with partial pivoting. Returns the packed factors,
    /// the row permutation and its sign.
    fn lu(&self, rank_tol: f64) -> Result<(Self, Vec<usize>, f64)> {
        if !self.is_square() {
            return Err(Error::DimMismatch("LU needs a square matrix".into()));
        }
        let n = self.rows;
        let scale = self.max_abs();
        if scale == 0.0 {
            return Err(Error::Singular);
        }
        let mut a = self.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for k in 0..n {
            let (p, best) = (k..n)
                .map(|i| (i, a[(i, k)].norm()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if best <= rank_tol * scale {
                return Err(Error::Singular);
            }
            if p != k {
                for j in 0..n {
                    a.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let pivot = a[(k, k)];
            for i in k + 1..n {
                let f = a[(i, k)] / pivot;
                a[(i, k)] = f;
                if f == ZERO {
                    continue;
                }
                for j in k + 1..n {
                    let u = a[(k, j)];
                    a[(i, j)] -= f * u;
                }
            }
        }
        Ok((a, perm, sign))
    }

    /// Determinant via LU; zero for numerically singular input.
    pub fn determinant(&self) -> Result<C64> {
        match self.lu(0.0) {
            Ok((lu, _, sign)) => Ok(lu.diag().into_iter().product::<C64>() * sign),
            Err(Error::Singular) => Ok(ZERO),
            Err(e) => Err(e),
        }
    }

    pub fn inverse(&self) -> Result<Self> {
        self.inverse_tol(Tolerances::default().rank)
    }

    pub fn inverse_tol(&self, rank_tol: f64) -> Result<Self> {
        let (lu, perm, _) = self.lu(rank_tol)?;
        let n = self.rows;
        let mut inv = Self::zeros(n, n);
        for c in 0..n {
            // solve L U x = P e_c
            let mut x: Vec<C64> = perm.iter().map(|&p| if p == c { ONE } else { ZERO }).collect();
            for i in 0..n {
                let mut s = x[i];
                for j in 0..i {
                    s -= lu[(i, j)] * x[j];
                }
                x[i] = s;
            }
            for i in (0..n).rev() {
                let mut s = x[i];
                for j in i + 1..n {
                    s -= lu[(i, j)] * x[j];
                }
                x[i] = s / lu[(i, i)];
            }
            inv.set_column(c, &x);
        }
        Ok(inv)
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;

    /// Panics on a dimension mismatch; use [`CMatrix::matmul`] for a fallible product.
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.matmul(rhs).expect("matrix product dimensions")
    }
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:>11.6}{:+.6}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Phase `z / |z|`, or one for zero. Real input gives an exactly real result.
#[inline]
pub fn phase(z: C64) -> C64 {
    let r = z.norm();
    if r == 0.0 {
        ONE
    } else {
        z / r
    }
}

pub fn vec_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `a† b`.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cofactor_det(a: &CMatrix) -> C64 {
        let n = a.rows();
        if n == 1 {
            return a[(0, 0)];
        }
        (0..n)
            .map(|j| {
                let keep: Vec<usize> = (0..n).filter(|&c| c != j).collect();
                let minor = a.select(&(1..n).collect::<Vec<_>>(), &keep);
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                a[(0, j)] * cofactor_det(&minor) * sign
            })
            .sum()
    }

    #[test]
    fn rejects_non_finite_and_bad_lengths() {
        assert!(CMatrix::new(1, 1, vec![C64::new(f64::NAN, 0.0)]).is_err());
        assert!(CMatrix::new(2, 2, vec![ONE; 3]).is_err());
        assert!(CMatrix::new(0, 2, vec![]).is_err());
    }

    #[test]
    fn block_extend_examples() {
        let a = CMatrix::from_real(2, 2, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(a.block_extend(1), a);
        assert_eq!(CMatrix::identity(2).block_extend(3), CMatrix::identity(6));
        let e = a.block_extend(2);
        assert_eq!(e.shape(), (4, 4));
        assert_eq!(e.submatrix(0, 0, 2, 2), a);
        assert_eq!(e.submatrix(2, 2, 2, 2), a);
        assert_eq!(e.submatrix(0, 2, 2, 2), CMatrix::zeros(2, 2));
        assert_eq!(e.submatrix(2, 0, 2, 2), CMatrix::zeros(2, 2));
    }

    #[test]
    fn block_extend_determinant_power() {
        let a = CMatrix::new(
            3,
            3,
            vec![
                C64::new(1.0, 0.5),
                C64::new(-0.3, 0.2),
                C64::new(0.7, 0.0),
                C64::new(0.1, -0.4),
                C64::new(2.0, 0.1),
                C64::new(0.0, 1.0),
                C64::new(-1.2, 0.3),
                C64::new(0.4, 0.4),
                C64::new(0.9, -0.6),
            ],
        )
        .unwrap();
        for n in 1..=3 {
            let sub = a.submatrix(0, 0, n, n);
            let d = cofactor_det(&sub);
            for copies in 1..=4 {
                let ext = sub.block_extend(copies);
                let expect = d.powu(copies as u32);
                let got = ext.determinant().unwrap();
                assert!((got - expect).norm() <= 1e-10 * expect.norm().max(1.0));
                if n * copies <= 6 {
                    assert!((cofactor_det(&ext) - expect).norm() <= 1e-10 * expect.norm().max(1.0));
                }
            }
        }
    }

    #[test]
    fn inverse_and_determinant() {
        let a = CMatrix::from_real(2, 2, &[0.0, 2.0, 3.0, 1.0]).unwrap();
        assert!((a.determinant().unwrap() - C64::new(-6.0, 0.0)).norm() < 1e-14);
        let prod = &a * &a.inverse().unwrap();
        assert!(prod.sub(&CMatrix::identity(2)).unwrap().frobenius_norm() < 1e-14);
        let sing = CMatrix::from_real(2, 2, &[1.0, 2.0, 2.0, 4.0]).unwrap();
        assert_eq!(sing.inverse(), Err(Error::Singular));
    }

    #[test]
    fn adjoint_mul_matches_explicit() {
        let a = CMatrix::new(2, 3, (0..6).map(|k| C64::new(k as f64, 1.0 - k as f64)).collect()).unwrap();
        let b = CMatrix::new(2, 2, (0..4).map(|k| C64::new(0.5 * k as f64, 2.0)).collect()).unwrap();
        let lhs = a.adjoint_mul(&b).unwrap();
        let rhs = &a.adjoint() * &b;
        assert!(lhs.sub(&rhs).unwrap().frobenius_norm() < 1e-14);
    }
}

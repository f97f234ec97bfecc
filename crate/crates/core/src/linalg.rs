//! Small dense complex matrices.
//!
//! Every matrix in the simulator is tiny (the stacked destination vector has
//! at most `(L*T + 1) * N` entries), so this is a plain row-major `Vec` with
//! direct Gaussian elimination. Vectors are matrices with one column.
//!
//! The arithmetic operators (`*`, `+`, `-`) panic on shape mismatch; the
//! `checked_*` methods and [`solve`] report it as an error instead.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Relative pivot tolerance used by [`solve`]. A pivot below
/// `SINGULAR_TOL * max_row_norm(a)` marks the system as singular.
pub const SINGULAR_TOL: f64 = 1e-12;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "CMat must be at least 1x1");
        Self { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    /// Builds a matrix from row-major data, rejecting bad sizes and non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::DimMismatch(format!("empty matrix {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch { expected: rows * cols, got: data.len() });
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::DimMismatch("ragged rows".into()));
        }
        Self::from_vec(r, c, rows.concat())
    }

    /// Column vector. Panics on an empty slice.
    pub fn col(entries: &[C64]) -> Self {
        assert!(!entries.is_empty(), "empty column vector");
        Self { rows: entries.len(), cols: 1, data: entries.to_vec() }
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

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn column(&self, j: usize) -> CMat {
        assert!(j < self.cols);
        let entries: Vec<C64> = (0..self.rows).map(|i| self[(i, j)]).collect();
        CMat::col(&entries)
    }

    pub fn set_column(&mut self, j: usize, v: &CMat) {
        assert_eq!(v.rows, self.rows);
        for i in 0..self.rows {
            self[(i, j)] = v.data[i];
        }
    }

    /// Copy of rows `start..start + len`.
    pub fn row_range(&self, start: usize, len: usize) -> CMat {
        assert!(start + len <= self.rows && len > 0);
        let data = self.data[start * self.cols..(start + len) * self.cols].to_vec();
        CMat { rows: len, cols: self.cols, data }
    }

    pub fn set_row_range(&mut self, start: usize, block: &CMat) {
        assert!(start + block.rows <= self.rows && block.cols == self.cols);
        let w = self.cols;
        self.data[start * w..(start + block.rows) * w].copy_from_slice(&block.data);
    }

    pub fn hermitian(&self) -> CMat {
        let mut out = CMat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn conj(&self) -> CMat {
        CMat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z.conj()).collect() }
    }

    pub fn scale(&self, k: C64) -> CMat {
        CMat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * k).collect() }
    }

    pub fn scale_re(&self, k: f64) -> CMat {
        CMat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * k).collect() }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &CMat) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// `selfᴴ · other` for two column vectors of equal length.
    pub fn dot_h(&self, other: &CMat) -> C64 {
        assert!(self.cols == 1 && other.cols == 1 && self.rows == other.rows);
        self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn checked_mul(&self, rhs: &CMat) -> Result<CMat> {
        if self.cols != rhs.rows {
            return Err(Error::DimMismatch(format!(
                "{}x{} * {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = CMat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn checked_add(&self, rhs: &CMat) -> Result<CMat> {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn checked_sub(&self, rhs: &CMat) -> Result<CMat> {
        self.zip_with(rhs, |a, b| a - b)
    }

    fn zip_with(&self, rhs: &CMat, f: impl Fn(C64, C64) -> C64) -> Result<CMat> {
        if self.shape() != rhs.shape() {
            return Err(Error::DimMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let data = self.data.iter().zip(&rhs.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(CMat { rows: self.rows, cols: self.cols, data })
    }

    /// Adds `k` to every diagonal entry.
    pub fn add_diag(&self, k: f64) -> CMat {
        assert!(self.is_square());
        let mut out = self.clone();
        for i in 0..self.rows {
            out[(i, i)] += k;
        }
        out
    }

    /// Block-diagonal stacking of arbitrary rectangular blocks.
    pub fn block_diag(blocks: &[&CMat]) -> CMat {
        let rows = blocks.iter().map(|b| b.rows).sum();
        let cols = blocks.iter().map(|b| b.cols).sum();
        let mut out = CMat::zeros(rows, cols);
        let (mut r0, mut c0) = (0, 0);
        for b in blocks {
            for i in 0..b.rows {
                for j in 0..b.cols {
                    out[(r0 + i, c0 + j)] = b[(i, j)];
                }
            }
            r0 += b.rows;
            c0 += b.cols;
        }
        out
    }

    /// Vertical concatenation of blocks with equal column counts.
    pub fn vstack(blocks: &[&CMat]) -> CMat {
        let cols = blocks[0].cols;
        assert!(blocks.iter().all(|b| b.cols == cols), "vstack column mismatch");
        let rows = blocks.iter().map(|b| b.rows).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for b in blocks {
            data.extend_from_slice(&b.data);
        }
        CMat { rows, cols, data }
    }

    /// True when the Hermitian matrix admits a Cholesky factorization.
    pub fn is_positive_definite(&self) -> bool {
        if !self.is_square() {
            return false;
        }
        let n = self.rows;
        let mut l = vec![ZERO; n * n];
        for j in 0..n {
            let mut d = self[(j, j)].re;
            for k in 0..j {
                d -= l[j * n + k].norm_sqr();
            }
            if !(d > 0.0) {
                return false;
            }
            let d = d.sqrt();
            l[j * n + j] = C64::new(d, 0.0);
            for i in (j + 1)..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k].conj();
                }
                l[i * n + j] = s / d;
            }
        }
        true
    }
}

impl Index<(usize, usize)> for CMat {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &CMat {
    type Output = CMat;
    fn mul(self, rhs: &CMat) -> CMat {
        self.checked_mul(rhs).expect("matrix product shape mismatch")
    }
}

impl Add for &CMat {
    type Output = CMat;
    fn add(self, rhs: &CMat) -> CMat {
        self.checked_add(rhs).expect("matrix sum shape mismatch")
    }
}

impl Sub for &CMat {
    type Output = CMat;
    fn sub(self, rhs: &CMat) -> CMat {
        self.checked_sub(rhs).expect("matrix difference shape mismatch")
    }
}

impl Neg for &CMat {
    type Output = CMat;
    fn neg(self) -> CMat {
        self.scale_re(-1.0)
    }
}

impl AddAssign<&CMat> for CMat {
    fn add_assign(&mut self, rhs: &CMat) {
        assert_eq!(self.shape(), rhs.shape(), "matrix sum shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }
}

impl SubAssign<&CMat> for CMat {
    fn sub_assign(&mut self, rhs: &CMat) {
        assert_eq!(self.shape(), rhs.shape(), "matrix difference shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a -= b;
        }
    }
}

impl fmt::Debug for CMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

pub fn hermitian(m: &CMat) -> CMat {
    m.hermitian()
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
///
/// `b` may have several columns. Fails with [`Error::Singular`] when a pivot
/// falls below [`SINGULAR_TOL`] times the largest row norm of `a`.
pub fn solve(a: &CMat, b: &CMat) -> Result<CMat> {
    if !a.is_square() {
        return Err(Error::DimMismatch(format!("solve needs a square matrix, got {}x{}", a.rows, a.cols)));
    }
    if b.rows != a.rows {
        return Err(Error::DimMismatch(format!("rhs has {} rows, matrix has {}", b.rows, a.rows)));
    }
    let n = a.rows;
    let m = b.cols;
    let scale = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)].norm_sqr()).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let tol = SINGULAR_TOL * scale;
    let mut lu = a.data.clone();
    let mut x = b.data.clone();

    for k in 0..n {
        let (p, pmag) = (k..n)
            .map(|i| (i, lu[i * n + k].norm()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(pmag > tol) || scale == 0.0 {
            return Err(Error::Singular { pivot: pmag.max(0.0), tol });
        }
        if p != k {
            for j in 0..n {
                lu.swap(k * n + j, p * n + j);
            }
            for j in 0..m {
                x.swap(k * m + j, p * m + j);
            }
        }
        let piv = lu[k * n + k];
        for i in (k + 1)..n {
            let f = lu[i * n + k] / piv;
            if f == ZERO {
                continue;
            }
            for j in k..n {
                let t = lu[k * n + j];
                lu[i * n + j] -= f * t;
            }
            for j in 0..m {
                let t = x[k * m + j];
                x[i * m + j] -= f * t;
            }
        }
    }
    for k in (0..n).rev() {
        for j in 0..m {
            let mut s = x[k * m + j];
            for c in (k + 1)..n {
                s -= lu[k * n + c] * x[c * m + j];
            }
            x[k * m + j] = s / lu[k * n + k];
        }
    }
    Ok(CMat { rows: n, cols: m, data: x })
}

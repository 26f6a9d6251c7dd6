//! Compressed sparse row complex matrices.
//!
//! Entries are kept canonical: sorted row-major, one entry per (row, col),
//! exact zeros dropped.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<Complex64>,
}

impl SparseOperator {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        SparseOperator {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_triplets(dim, dim, (0..dim).map(|i| (i, i, Complex64::new(1.0, 0.0))))
    }

    pub fn diagonal(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        let n = v.len();
        Self::from_triplets(
            n,
            n,
            v.into_iter().enumerate().map(|(i, x)| (i, i, Complex64::new(x, 0.0))),
        )
    }

    /// Build from unsorted triplets; duplicates are summed.
    ///
    /// Panics if an index is out of bounds.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, Complex64)>,
    ) -> Self {
        let mut t: Vec<(usize, usize, Complex64)> = triplets.into_iter().collect();
        for &(r, c, _) in &t {
            assert!(r < nrows && c < ncols, "entry ({r},{c}) outside {nrows}x{ncols}");
        }
        t.sort_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(usize, usize, Complex64)> = Vec::with_capacity(t.len());
        for (r, c, v) in t {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        merged.retain(|e| e.2 != ZERO);
        let mut row_ptr = vec![0usize; nrows + 1];
        for &(r, _, _) in &merged {
            row_ptr[r + 1] += 1;
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseOperator {
            nrows,
            ncols,
            row_ptr,
            col_idx: merged.iter().map(|e| e.1).collect(),
            values: merged.iter().map(|e| e.2).collect(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Side length of a square operator.
    pub fn dim(&self) -> usize {
        debug_assert_eq!(self.nrows, self.ncols);
        self.nrows
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Canonical (row, col, value) entries, row-major.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => ZERO,
        }
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.ncols, self.nrows, self.entries().map(|(r, c, v)| (c, r, v.conj())))
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self::from_triplets(self.nrows, self.ncols, self.entries().map(|(r, c, v)| (r, c, v * s)))
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        Self::from_triplets(self.nrows, self.ncols, self.entries().chain(other.entries()))
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.nrows);
        let mut t = Vec::new();
        for r in 0..self.nrows {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    t.push((r, c, a * b));
                }
            }
        }
        Self::from_triplets(self.nrows, other.ncols, t)
    }

    pub fn commutator(&self, other: &Self) -> Self {
        self.matmul(other).sub(&other.matmul(self))
    }

    pub fn mul_vec(&self, x: &[Complex64], y: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = ZERO;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yr = acc;
        }
    }

    /// Largest entry magnitude; 0 for an empty operator.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Exact entrywise check `A == A†`.
    pub fn is_hermitian(&self) -> bool {
        self.nrows == self.ncols && self.entries().all(|(r, c, v)| self.get(c, r) == v.conj())
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::from_element(self.nrows, self.ncols, ZERO);
        for (r, c, v) in self.entries() {
            m[(r, c)] = v;
        }
        m
    }

    /// Restrict to the given row and column index sets, renumbered locally.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut col_pos = vec![usize::MAX; self.ncols];
        for (k, &c) in cols.iter().enumerate() {
            col_pos[c] = k;
        }
        let mut t = Vec::new();
        for (lr, &r) in rows.iter().enumerate() {
            for (c, v) in self.row(r) {
                let lc = col_pos[c];
                if lc != usize::MAX {
                    t.push((lr, lc, v));
                }
            }
        }
        Self::from_triplets(rows.len(), cols.len(), t)
    }

    /// Coordinate-list text dump: one `row col re im` line per entry, row-major,
    /// floats with 17 significant digits.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (r, c, v) in self.entries() {
            writeln!(s, "{r} {c} {:.16e} {:.16e}", v.re, v.im).unwrap();
        }
        s
    }

    /// Inverse of [`dump`](Self::dump).
    pub fn parse_dump(nrows: usize, ncols: usize, text: &str) -> Option<Self> {
        let mut t = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let mut it = line.split_whitespace();
            let r: usize = it.next()?.parse().ok()?;
            let c: usize = it.next()?.parse().ok()?;
            let re: f64 = it.next()?.parse().ok()?;
            let im: f64 = it.next()?.parse().ok()?;
            if r >= nrows || c >= ncols {
                return None;
            }
            t.push((r, c, Complex64::new(re, im)));
        }
        Some(Self::from_triplets(nrows, ncols, t))
    }
}

/// `out += alpha * A X` for a column-major dense `X` with `ncols` columns.
pub(crate) fn spmm_left_acc(
    a: &SparseOperator,
    x: &[Complex64],
    ncols: usize,
    alpha: Complex64,
    out: &mut [Complex64],
) {
    let (m, k) = (a.nrows, a.ncols);
    debug_assert_eq!(x.len(), k * ncols);
    debug_assert_eq!(out.len(), m * ncols);
    for j in 0..ncols {
        let xc = &x[j * k..(j + 1) * k];
        let oc = &mut out[j * m..(j + 1) * m];
        for (r, o) in oc.iter_mut().enumerate() {
            let mut acc = ZERO;
            for p in a.row_ptr[r]..a.row_ptr[r + 1] {
                acc += a.values[p] * xc[a.col_idx[p]];
            }
            *o += alpha * acc;
        }
    }
}

/// `out += alpha * X B†` for column-major `X` (`nrows` rows, `B.ncols` columns).
pub(crate) fn spmm_right_adj_acc(
    x: &[Complex64],
    nrows: usize,
    b: &SparseOperator,
    alpha: Complex64,
    out: &mut [Complex64],
) {
    debug_assert_eq!(x.len(), nrows * b.ncols);
    debug_assert_eq!(out.len(), nrows * b.nrows);
    // (X B†)[:, c] = sum_k X[:, k] conj(B[c, k])
    for c in 0..b.nrows {
        let oc = &mut out[c * nrows..(c + 1) * nrows];
        for p in b.row_ptr[c]..b.row_ptr[c + 1] {
            let w = alpha * b.values[p].conj();
            let k = b.col_idx[p];
            let xc = &x[k * nrows..(k + 1) * nrows];
            for (o, &xv) in oc.iter_mut().zip(xc) {
                *o += w * xv;
            }
        }
    }
}

//! Compressed sparse row matrices and a banded LU factorization.

use crate::error::{invalid, Error, Result};

/// Square or rectangular CSR matrix with sorted, duplicate-free column indices.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates.
    ///
    /// Duplicates are summed in the order they appear, so a fixed triplet
    /// order gives bit-identical matrices.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of range");
            counts[r + 1] += 1;
        }
        for r in 0..nrows {
            counts[r + 1] += counts[r];
        }
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        let mut next = counts.clone();
        for &(r, c, v) in triplets {
            cols[next[r]] = c;
            vals[next[r]] = v;
            next[r] += 1;
        }

        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        indptr.push(0);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for r in 0..nrows {
            row.clear();
            row.extend((counts[r]..counts[r + 1]).map(|k| (cols[k], vals[k])));
            // stable sort keeps the summation order of duplicates fixed
            row.sort_by_key(|&(c, _)| c);
            let mut k = 0;
            while k < row.len() {
                let c = row[k].0;
                let mut acc = 0.0;
                while k < row.len() && row[k].0 == c {
                    acc += row[k].1;
                    k += 1;
                }
                indices.push(c);
                values.push(acc);
            }
            indptr.push(indices.len());
        }
        Self { nrows, ncols, indptr, indices, values }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `r`.
    #[inline]
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.indptr[r]..self.indptr[r + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    /// `y = A x`
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (r, yr) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            *yr = cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum();
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `xᵀ A y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), self.nrows);
        (0..self.nrows)
            .map(|r| {
                let (cols, vals) = self.row(r);
                x[r] * cols.iter().zip(vals).map(|(&c, &v)| v * y[c]).sum::<f64>()
            })
            .sum()
    }

    pub fn transpose(&self) -> Self {
        let triplets: Vec<_> = self.iter().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, &triplets)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// `alpha·self + beta·other`
    pub fn lin_comb(&self, alpha: f64, other: &Self, beta: f64) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut triplets: Vec<_> = self.iter().map(|(r, c, v)| (r, c, alpha * v)).collect();
        triplets.extend(other.iter().map(|(r, c, v)| (r, c, beta * v)));
        Self::from_triplets(self.nrows, self.ncols, &triplets)
    }

    /// Adds `d[r]` to each diagonal entry, inserting missing diagonal entries.
    pub fn add_diagonal(&self, d: &[f64]) -> Self {
        assert_eq!(self.nrows, self.ncols);
        assert_eq!(d.len(), self.nrows);
        let mut triplets: Vec<_> = self.iter().collect();
        triplets.extend(d.iter().enumerate().map(|(r, &v)| (r, r, v)));
        Self::from_triplets(self.nrows, self.ncols, &triplets)
    }

    /// Scales column `c` by `d[c]` (right multiplication by `diag(d)`).
    pub fn scale_columns(&self, d: &[f64]) -> Self {
        assert_eq!(d.len(), self.ncols);
        let mut out = self.clone();
        for (c, v) in out.indices.iter().zip(out.values.iter_mut()) {
            *v *= d[*c];
        }
        out
    }

    /// Sub-matrix `A[rows, cols]` where `col_map[c]` gives the new index of column `c`.
    pub fn select(&self, rows: &[usize], col_map: &[Option<usize>], ncols: usize) -> Self {
        let mut triplets = Vec::new();
        for (nr, &r) in rows.iter().enumerate() {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                if let Some(nc) = col_map[c] {
                    triplets.push((nr, nc, v));
                }
            }
        }
        Self::from_triplets(rows.len(), ncols, &triplets)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|r| self.get(r, r)).collect()
    }

    /// Largest `|A_ij − A_ji|`.
    pub fn symmetry_defect(&self) -> f64 {
        self.iter()
            .map(|(r, c, v)| (v - self.get(c, r)).abs())
            .fold(0.0, f64::max)
    }

    /// Lower and upper bandwidths.
    pub fn bandwidths(&self) -> (usize, usize) {
        let mut lower = 0;
        let mut upper = 0;
        for (r, c, _) in self.iter() {
            if c < r {
                lower = lower.max(r - c);
            } else {
                upper = upper.max(c - r);
            }
        }
        (lower, upper)
    }

    /// Sparse product `self · other` (row-wise with a dense accumulator).
    pub fn matmul(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.ncols, other.nrows);
        let mut acc = vec![0.0; other.ncols];
        let mut marker = vec![usize::MAX; other.ncols];
        let mut pattern = Vec::new();
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for r in 0..self.nrows {
            pattern.clear();
            let (cols, vals) = self.row(r);
            for (&k, &a) in cols.iter().zip(vals) {
                let (ocols, ovals) = other.row(k);
                for (&c, &b) in ocols.iter().zip(ovals) {
                    if marker[c] != r {
                        marker[c] = r;
                        acc[c] = 0.0;
                        pattern.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            pattern.sort_unstable();
            for &c in &pattern {
                indices.push(c);
                values.push(acc[c]);
            }
            indptr.push(indices.len());
        }
        CsrMatrix { nrows: self.nrows, ncols: other.ncols, indptr, indices, values }
    }

    /// Dense product `self · other`, rows computed independently.
    pub fn matmul_dense(&self, other: &CsrMatrix, threading: crate::exec::Threading) -> faer::Mat<f64> {
        assert_eq!(self.ncols, other.nrows);
        let n = other.ncols;
        let rows = crate::exec::map_range(threading, self.nrows, |r| {
            let mut row = vec![0.0; n];
            let (cols, vals) = self.row(r);
            for (&k, &a) in cols.iter().zip(vals) {
                let (ocols, ovals) = other.row(k);
                for (&c, &b) in ocols.iter().zip(ovals) {
                    row[c] += a * b;
                }
            }
            row
        });
        faer::Mat::from_fn(self.nrows, n, |r, c| rows[r][c])
    }

    /// Keeps the listed columns, renumbered in the given order.
    pub fn select_columns(&self, keep: &[usize]) -> CsrMatrix {
        let mut map = vec![None; self.ncols];
        for (k, &c) in keep.iter().enumerate() {
            map[c] = Some(k);
        }
        let rows: Vec<usize> = (0..self.nrows).collect();
        self.select(&rows, &map, keep.len())
    }

    /// `A x` for a dense column block stored as `faer` matrix.
    pub fn mul_dense(&self, x: faer::MatRef<'_, f64>) -> faer::Mat<f64> {
        assert_eq!(x.nrows(), self.ncols);
        let mut out = faer::Mat::<f64>::zeros(self.nrows, x.ncols());
        for j in 0..x.ncols() {
            for r in 0..self.nrows {
                let (cols, vals) = self.row(r);
                out[(r, j)] = cols.iter().zip(vals).map(|(&c, &v)| v * x[(c, j)]).sum();
            }
        }
        out
    }

    pub fn to_dense(&self) -> faer::Mat<f64> {
        let mut m = faer::Mat::<f64>::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.iter() {
            m[(r, c)] += v;
        }
        m
    }
}

/// LU factorization without pivoting of a banded matrix.
///
/// Fill stays inside the band, so storage is `n × (lower + upper + 1)`.
/// Intended for the diagonally dominated finite element systems of this crate
/// (mass plus scaled convection-diffusion operators).
#[derive(Clone, Debug)]
pub struct BandedLu {
    n: usize,
    lower: usize,
    upper: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandedLu {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return invalid("banded LU needs a square matrix");
        }
        let n = a.nrows();
        let (lower, upper) = a.bandwidths();
        let width = lower + upper + 1;
        let mut data = vec![0.0; n * width];
        for (r, c, v) in a.iter() {
            data[r * width + (c + lower - r)] = v;
        }
        let mut lu = Self { n, lower, upper, width, data };
        lu.eliminate()?;
        Ok(lu)
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> usize {
        r * self.width + (c + self.lower - r)
    }

    fn eliminate(&mut self) -> Result<()> {
        let n = self.n;
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..n {
            let pivot = self.data[self.at(k, k)];
            if !pivot.is_finite() || pivot.abs() <= 1e-14 * scale {
                return Err(Error::Singular(format!("zero pivot {pivot:e} at row {k} of {n}")));
            }
            let rmax = (k + self.lower).min(n - 1);
            let cmax = (k + self.upper).min(n - 1);
            let pivot_row_start = self.at(k, k + 1);
            for r in k + 1..=rmax {
                let lk = self.at(r, k);
                let l = self.data[lk] / pivot;
                self.data[lk] = l;
                if l == 0.0 {
                    continue;
                }
                let row_start = self.at(r, k + 1);
                let len = cmax - k;
                for t in 0..len {
                    self.data[row_start + t] -= l * self.data[pivot_row_start + t];
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        for r in 0..n {
            let c0 = r.saturating_sub(self.lower);
            let mut acc = b[r];
            for c in c0..r {
                acc -= self.data[self.at(r, c)] * b[c];
            }
            b[r] = acc;
        }
        for r in (0..n).rev() {
            let cmax = (r + self.upper).min(n - 1);
            let mut acc = b[r];
            for c in r + 1..=cmax {
                acc -= self.data[self.at(r, c)] * b[c];
            }
            b[r] = acc / self.data[self.at(r, r)];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Jacobi-preconditioned conjugate gradients for SPD systems.
///
/// Stops when `‖r‖₂ ≤ rel_tol·‖b‖₂`; returns the iteration count.
pub fn conjugate_gradient(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<usize> {
    let n = b.len();
    let diag = a.diagonal();
    if diag.iter().any(|&d| d <= 0.0) {
        return Err(Error::Singular("non-positive diagonal in CG".into()));
    }
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0);
    }
    let mut r = a.mul_vec(x);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, d)| ri / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        if norm2(&r) <= rel_tol * bnorm {
            return Ok(it);
        }
        a.mul_vec_into(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if norm2(&r) <= rel_tol * bnorm {
        Ok(max_iter)
    } else {
        Err(Error::Singular(format!("CG did not converge in {max_iter} iterations")))
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use faer::prelude::*;

    fn tridiag(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.5));
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn duplicates_are_summed() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (0, 1, 2.0), (1, 0, 5.0)]);
        assert_eq!(a.get(0, 1), 3.0);
        assert_eq!(a.get(1, 0), 5.0);
        assert_eq!(a.get(0, 0), 0.0);
        assert_eq!(a.nnz(), 2);
    }

    #[test]
    fn banded_lu_matches_dense() {
        let n = 40;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 10.0 + i as f64 * 0.1));
            for off in 1..=3 {
                if i >= off {
                    t.push((i, i - off, -1.0 / off as f64));
                }
                if i + off < n {
                    t.push((i, i + off, 0.7 / off as f64));
                }
            }
        }
        let a = CsrMatrix::from_triplets(n, n, &t);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = BandedLu::factor(&a).unwrap().solve(&b);
        let dense = a.to_dense();
        let rhs = Mat::from_fn(n, 1, |i, _| b[i]);
        let reference = dense.partial_piv_lu().solve(&rhs);
        for i in 0..n {
            assert!((x[i] - reference[(i, 0)]).abs() < 1e-13);
        }
    }

    #[test]
    fn singular_is_reported() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        assert!(matches!(BandedLu::factor(&a), Err(Error::Singular(_))));
    }

    #[test]
    fn cg_solves_spd() {
        let n = 30;
        let a = tridiag(n);
        let sym = a.lin_comb(0.5, &a.transpose(), 0.5);
        let b = vec![1.0; n];
        let mut x = vec![0.0; n];
        conjugate_gradient(&sym, &b, &mut x, 1e-14, 500).unwrap();
        let r = sym.mul_vec(&x);
        assert!(r.iter().zip(&b).all(|(u, v)| (u - v).abs() < 1e-12));
    }

    #[test]
    fn products_match_dense() {
        let a = tridiag(6);
        let b = CsrMatrix::from_triplets(6, 3, &[(0, 0, 1.0), (2, 1, -2.0), (5, 2, 3.0), (3, 0, 0.5)]);
        let sparse = a.matmul(&b).to_dense();
        let dense = &a.to_dense() * &b.to_dense();
        let via = a.matmul_dense(&b, crate::exec::Threading::Sequential);
        for i in 0..6 {
            for j in 0..3 {
                assert!((sparse[(i, j)] - dense[(i, j)]).abs() < 1e-14);
                assert!((via[(i, j)] - dense[(i, j)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn transpose_and_bilinear() {
        let a = tridiag(5);
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [0.5, -1.0, 2.0, 0.0, 1.0];
        let lhs = a.bilinear(&x, &y);
        let rhs = a.transpose().bilinear(&y, &x);
        assert!((lhs - rhs).abs() < 1e-12);
        assert_eq!(a.bandwidths(), (1, 1));
    }
}

//! Compressed sparse row matrices with the handful of operations meta-path
//! counting needs: transpose, sparse-sparse product, and row extraction.

use std::ops::{AddAssign, Mul};

use ndarray::Array2;
use rayon::prelude::*;

/// Scalar types a [`CsrMatrix`] can hold.
pub trait Scalar:
    Copy + Default + PartialEq + AddAssign + Mul<Output = Self> + Send + Sync + std::fmt::Debug
{
    fn is_zero(&self) -> bool {
        *self == Self::default()
    }
}

impl Scalar for u64 {}
impl Scalar for f64 {}

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix<T> {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CsrMatrix {
            rows,
            cols,
            indptr: vec![0; rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self
    where
        T: From<u8>,
    {
        CsrMatrix {
            rows: n,
            cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n as u32).collect(),
            values: vec![T::from(1); n],
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are summed
    /// and explicit zeros dropped.
    ///
    /// Panics if a coordinate lies outside `rows x cols`.
    pub fn from_triplets<I>(rows: usize, cols: usize, triplets: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, T)>,
    {
        let mut entries: Vec<(usize, usize, T)> = triplets.into_iter().collect();
        for &(r, c, _) in &entries {
            assert!(r < rows && c < cols, "triplet ({r}, {c}) outside {rows}x{cols}");
        }
        entries.sort_by_key(|e| (e.0, e.1));

        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(entries.len());
        let mut values: Vec<T> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            last = Some((r, c));
            indices.push(c as u32);
            values.push(v);
            indptr[r + 1] += 1;
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        CsrMatrix {
            rows,
            cols,
            indptr,
            indices,
            values,
        }
        .pruned()
    }

    fn from_rows(rows: usize, cols: usize, row_data: Vec<(Vec<u32>, Vec<T>)>) -> Self {
        debug_assert_eq!(row_data.len(), rows);
        let nnz = row_data.iter().map(|(i, _)| i.len()).sum();
        let mut indptr = Vec::with_capacity(rows + 1);
        let mut indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        indptr.push(0);
        for (idx, vals) in row_data {
            indices.extend_from_slice(&idx);
            values.extend_from_slice(&vals);
            indptr.push(indices.len());
        }
        CsrMatrix {
            rows,
            cols,
            indptr,
            indices,
            values,
        }
    }

    fn pruned(self) -> Self {
        if !self.values.iter().any(Scalar::is_zero) {
            return self;
        }
        let rows = (0..self.rows)
            .map(|r| {
                let (idx, vals) = self.row(r);
                idx.iter()
                    .zip(vals)
                    .filter(|(_, v)| !v.is_zero())
                    .map(|(&c, &v)| (c, v))
                    .unzip()
            })
            .collect();
        Self::from_rows(self.rows, self.cols, rows)
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

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Column indices and values of row `r`, columns ascending.
    pub fn row(&self, r: usize) -> (&[u32], &[T]) {
        let span = self.indptr[r]..self.indptr[r + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let (idx, vals) = self.row(r);
        match idx.binary_search(&(c as u32)) {
            Ok(pos) => vals[pos],
            Err(_) => T::default(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.rows).flat_map(move |r| {
            let (idx, vals) = self.row(r);
            idx.iter().zip(vals).map(move |(&c, &v)| (r, c as usize, v))
        })
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.indices {
            counts[c as usize + 1] += 1;
        }
        for c in 0..self.cols {
            counts[c + 1] += counts[c];
        }
        let indptr = counts.clone();
        let mut cursor = counts;
        let mut indices = vec![0u32; self.nnz()];
        let mut values = vec![T::default(); self.nnz()];
        for r in 0..self.rows {
            let (idx, vals) = self.row(r);
            for (&c, &v) in idx.iter().zip(vals) {
                let slot = cursor[c as usize];
                indices[slot] = r as u32;
                values[slot] = v;
                cursor[c as usize] += 1;
            }
        }
        CsrMatrix {
            rows: self.cols,
            cols: self.rows,
            indptr,
            indices,
            values,
        }
    }

    /// Sparse-sparse product (row-wise Gustavson with a dense accumulator).
    /// Rows are computed in parallel on the current rayon pool; the output is
    /// independent of the worker count.
    pub fn matmul(&self, rhs: &CsrMatrix<T>) -> CsrMatrix<T> {
        assert_eq!(
            self.cols, rhs.rows,
            "matmul dimension mismatch: {}x{} * {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let width = rhs.cols;
        let row_data: Vec<(Vec<u32>, Vec<T>)> = (0..self.rows)
            .into_par_iter()
            .map_init(
                || (vec![T::default(); width], vec![false; width], Vec::<u32>::new()),
                |(acc, seen, touched), r| {
                    let (lidx, lvals) = self.row(r);
                    for (&k, &a) in lidx.iter().zip(lvals) {
                        let (ridx, rvals) = rhs.row(k as usize);
                        for (&c, &b) in ridx.iter().zip(rvals) {
                            let c = c as usize;
                            if !seen[c] {
                                seen[c] = true;
                                touched.push(c as u32);
                            }
                            acc[c] += a * b;
                        }
                    }
                    touched.sort_unstable();
                    let mut out_idx = Vec::with_capacity(touched.len());
                    let mut out_vals = Vec::with_capacity(touched.len());
                    for &c in touched.iter() {
                        let v = std::mem::take(&mut acc[c as usize]);
                        seen[c as usize] = false;
                        if !v.is_zero() {
                            out_idx.push(c);
                            out_vals.push(v);
                        }
                    }
                    touched.clear();
                    (out_idx, out_vals)
                },
            )
            .collect();
        Self::from_rows(self.rows, width, row_data)
    }

    /// Product of a sparse row vector (sorted indices) with this matrix.
    pub fn left_mul_row(&self, idx: &[u32], vals: &[T]) -> (Vec<u32>, Vec<T>) {
        let mut acc: std::collections::BTreeMap<u32, T> = std::collections::BTreeMap::new();
        for (&k, &a) in idx.iter().zip(vals) {
            let (ridx, rvals) = self.row(k as usize);
            for (&c, &b) in ridx.iter().zip(rvals) {
                *acc.entry(c).or_default() += a * b;
            }
        }
        acc.into_iter().filter(|(_, v)| !v.is_zero()).unzip()
    }

    /// Keeps only the given rows and columns, in the given order.
    pub fn submatrix(&self, keep_rows: &[usize], keep_cols: &[usize]) -> Self {
        let mut col_map = vec![u32::MAX; self.cols];
        for (new, &old) in keep_cols.iter().enumerate() {
            col_map[old] = new as u32;
        }
        let row_data = keep_rows
            .iter()
            .map(|&r| {
                let (idx, vals) = self.row(r);
                let mut pairs: Vec<(u32, T)> = idx
                    .iter()
                    .zip(vals)
                    .filter(|(&c, _)| col_map[c as usize] != u32::MAX)
                    .map(|(&c, &v)| (col_map[c as usize], v))
                    .collect();
                pairs.sort_unstable_by_key(|p| p.0);
                pairs.into_iter().unzip()
            })
            .collect();
        Self::from_rows(keep_rows.len(), keep_cols.len(), row_data)
    }

    pub fn to_dense(&self) -> Array2<T> {
        let mut out = Array2::from_elem((self.rows, self.cols), T::default());
        for (r, c, v) in self.iter() {
            out[[r, c]] = v;
        }
        out
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols && self.iter().all(|(r, c, v)| self.get(c, r) == v)
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(usize, usize, T) -> U) -> CsrMatrix<U> {
        let row_data = (0..self.rows)
            .map(|r| {
                let (idx, vals) = self.row(r);
                idx.iter()
                    .zip(vals)
                    .map(|(&c, &v)| (c, f(r, c as usize, v)))
                    .filter(|(_, v)| !v.is_zero())
                    .unzip()
            })
            .collect();
        CsrMatrix::<U>::from_rows(self.rows, self.cols, row_data)
    }
}

impl CsrMatrix<u64> {
    pub fn to_f64(&self) -> CsrMatrix<f64> {
        self.map(|_, _, v| v as f64)
    }

    /// Diagonal entries as a dense vector.
    pub fn diagonal(&self) -> Vec<u64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }
}

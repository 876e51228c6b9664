//! Minimal compressed-sparse-column matrices, sized for the KKT systems and
//! constraint operators built in this crate.

use nalgebra::{DMatrix, DVector};

/// CSC matrix with sorted, duplicate-free row indices per column.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CscMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            col_ptr: vec![0; ncols + 1],
            row_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds from (row, col, value) triplets, summing duplicates and
    /// dropping exact zeros.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut entries: Vec<(usize, usize, f64)> = triplets
            .iter()
            .copied()
            .filter(|&(r, c, v)| {
                assert!(r < nrows && c < ncols, "triplet out of bounds");
                v != 0.0
            })
            .collect();
        entries.sort_unstable_by_key(|&(r, c, _)| (c, r));

        let mut col_ptr = vec![0usize; ncols + 1];
        let mut row_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut i = 0;
        while i < entries.len() {
            let (r, c, mut v) = entries[i];
            let mut j = i + 1;
            while j < entries.len() && entries[j].0 == r && entries[j].1 == c {
                v += entries[j].2;
                j += 1;
            }
            if v != 0.0 {
                row_idx.push(r);
                values.push(v);
                col_ptr[c + 1] += 1;
            }
            i = j;
        }
        for c in 0..ncols {
            col_ptr[c + 1] += col_ptr[c];
        }
        Self {
            nrows,
            ncols,
            col_ptr,
            row_idx,
            values,
        }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut triplets = Vec::new();
        for c in 0..m.ncols() {
            for r in 0..m.nrows() {
                if m[(r, c)] != 0.0 {
                    triplets.push((r, c, m[(r, c)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), &triplets)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for c in 0..self.ncols {
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                m[(self.row_idx[p], c)] += self.values[p];
            }
        }
        m
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `out = self * x`.
    pub fn mul_vec(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(out.len(), self.nrows);
        out.fill(0.0);
        self.add_mul_vec(x, out);
    }

    /// `out += self * x`.
    pub fn add_mul_vec(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        for c in 0..self.ncols {
            let xc = x[c];
            if xc == 0.0 {
                continue;
            }
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                out[self.row_idx[p]] += self.values[p] * xc;
            }
        }
    }

    /// `out = self^T * y`.
    pub fn mul_vec_transpose(&self, y: &DVector<f64>, out: &mut DVector<f64>) {
        debug_assert_eq!(y.len(), self.nrows);
        debug_assert_eq!(out.len(), self.ncols);
        for c in 0..self.ncols {
            let mut acc = 0.0;
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                acc += self.values[p] * y[self.row_idx[p]];
            }
            out[c] = acc;
        }
    }

    /// Stacks matrices vertically; all must share `ncols`.
    pub fn vstack(blocks: &[&CscMatrix]) -> Self {
        assert!(!blocks.is_empty());
        let ncols = blocks[0].ncols;
        let mut triplets = Vec::new();
        let mut row_offset = 0;
        for b in blocks {
            assert_eq!(b.ncols, ncols, "vstack requires equal column counts");
            for c in 0..ncols {
                for p in b.col_ptr[c]..b.col_ptr[c + 1] {
                    triplets.push((row_offset + b.row_idx[p], c, b.values[p]));
                }
            }
            row_offset += b.nrows;
        }
        Self::from_triplets(row_offset, ncols, &triplets)
    }

    /// Iterates `(row, col, value)` entries in column-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.ncols).flat_map(move |c| {
            (self.col_ptr[c]..self.col_ptr[c + 1])
                .map(move |p| (self.row_idx[p], c, self.values[p]))
        })
    }

    /// Infinity norm of `self * x` computed without allocating.
    pub fn mul_vec_inf_norm(&self, x: &DVector<f64>, scratch: &mut DVector<f64>) -> f64 {
        self.mul_vec(x, scratch);
        scratch.amax()
    }
}

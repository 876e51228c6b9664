//! Sparse LDL^T factorization without pivoting, for symmetric quasi-definite
//! KKT matrices. Up-looking algorithm over the elimination tree; only the
//! upper-triangular part of the matrix is stored, with every diagonal entry
//! structurally present.

use nalgebra::DVector;

use super::sparse::CscMatrix;
use crate::Error;

/// Elimination tree and column counts, reusable across numeric refactors
/// with the same sparsity pattern.
#[derive(Debug, Clone)]
pub struct LdlSymbolic {
    n: usize,
    parent: Vec<isize>,
    l_colptr: Vec<usize>,
}

/// Numeric factor `A = L D L^T` with unit lower-triangular `L`.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    n: usize,
    l_colptr: Vec<usize>,
    l_rowidx: Vec<usize>,
    l_values: Vec<f64>,
    d_inv: Vec<f64>,
}

/// Computes the elimination tree and per-column nonzero counts of `L`.
///
/// `upper` must hold the upper-triangular part (row <= col) with sorted rows
/// and a structurally present diagonal in every column.
pub fn symbolic(upper: &CscMatrix) -> Result<LdlSymbolic, Error> {
    let n = upper.ncols;
    if upper.nrows != n {
        return Err(Error::Structure("KKT matrix must be square".into()));
    }
    let mut parent = vec![-1isize; n];
    let mut flag = vec![usize::MAX; n];
    let mut l_nz = vec![0usize; n];
    for j in 0..n {
        flag[j] = j;
        let mut has_diag = false;
        for p in upper.col_ptr[j]..upper.col_ptr[j + 1] {
            let r = upper.row_idx[p];
            if r > j {
                return Err(Error::Structure(
                    "KKT matrix must be upper triangular".into(),
                ));
            }
            if r == j {
                has_diag = true;
                continue;
            }
            // Walk up the tree from r, marking the path with j.
            let mut i = r;
            while flag[i] != j {
                if parent[i] == -1 {
                    parent[i] = j as isize;
                }
                l_nz[i] += 1;
                flag[i] = j;
                i = parent[i] as usize;
            }
        }
        if !has_diag {
            return Err(Error::Structure(format!(
                "KKT matrix is missing the diagonal entry in column {j}"
            )));
        }
    }
    let mut l_colptr = vec![0usize; n + 1];
    for j in 0..n {
        l_colptr[j + 1] = l_colptr[j] + l_nz[j];
    }
    Ok(LdlSymbolic {
        n,
        parent,
        l_colptr,
    })
}

/// Numeric factorization against a previously computed symbolic analysis.
pub fn factor(upper: &CscMatrix, sym: &LdlSymbolic) -> Result<LdlFactor, Error> {
    let n = sym.n;
    assert_eq!(upper.ncols, n);
    let nnz_l = sym.l_colptr[n];
    let mut l_rowidx = vec![0usize; nnz_l];
    let mut l_values = vec![0f64; nnz_l];
    let mut d = vec![0f64; n];
    let mut d_inv = vec![0f64; n];

    let mut y_val = vec![0f64; n];
    let mut y_marked = vec![false; n];
    let mut pattern = vec![0usize; n];
    let mut path = vec![0usize; n];
    let mut next_free = sym.l_colptr[..n].to_vec();

    for k in 0..n {
        // Scatter column k of A (strictly upper part) and collect the
        // pattern of row k of L, ancestors pushed before descendants.
        let mut pat_len = 0usize;
        d[k] = 0.0;
        for p in upper.col_ptr[k]..upper.col_ptr[k + 1] {
            let r = upper.row_idx[p];
            if r == k {
                d[k] = upper.values[p];
                continue;
            }
            y_val[r] += upper.values[p];
            if y_marked[r] {
                continue;
            }
            y_marked[r] = true;
            path[0] = r;
            let mut depth = 1usize;
            let mut next = sym.parent[r];
            while next != -1 && (next as usize) < k && !y_marked[next as usize] {
                y_marked[next as usize] = true;
                path[depth] = next as usize;
                depth += 1;
                next = sym.parent[next as usize];
            }
            while depth > 0 {
                depth -= 1;
                pattern[pat_len] = path[depth];
                pat_len += 1;
            }
        }

        // Process the pattern deepest-first: triangular solve against the
        // already-computed columns, then append row k to each column.
        for t in (0..pat_len).rev() {
            let c = pattern[t];
            let yc = y_val[c];
            y_val[c] = 0.0;
            y_marked[c] = false;
            for p in sym.l_colptr[c]..next_free[c] {
                y_val[l_rowidx[p]] -= l_values[p] * yc;
            }
            let l_kc = yc * d_inv[c];
            let slot = next_free[c];
            l_rowidx[slot] = k;
            l_values[slot] = l_kc;
            next_free[c] = slot + 1;
            d[k] -= yc * l_kc;
        }

        if d[k] == 0.0 || !d[k].is_finite() {
            return Err(Error::ZeroPivot(k));
        }
        d_inv[k] = 1.0 / d[k];
    }

    Ok(LdlFactor {
        n,
        l_colptr: sym.l_colptr.clone(),
        l_rowidx,
        l_values,
        d_inv,
    })
}

impl LdlFactor {
    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut DVector<f64>) {
        debug_assert_eq!(b.len(), self.n);
        for j in 0..self.n {
            let bj = b[j];
            if bj != 0.0 {
                for p in self.l_colptr[j]..self.l_colptr[j + 1] {
                    b[self.l_rowidx[p]] -= self.l_values[p] * bj;
                }
            }
        }
        for i in 0..self.n {
            b[i] *= self.d_inv[i];
        }
        for j in (0..self.n).rev() {
            let mut acc = b[j];
            for p in self.l_colptr[j]..self.l_colptr[j + 1] {
                acc -= self.l_values[p] * b[self.l_rowidx[p]];
            }
            b[j] = acc;
        }
    }
}

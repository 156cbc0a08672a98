//! Compressed sparse storage for symmetric matrices.
//!
//! Only the lower triangle (row >= column) is stored, column by column, with
//! row indices sorted inside each column and the diagonal always present.

use nalgebra::DMatrix;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseSym {
    dim: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSym {
    /// Builds from `(row, col, value)` triplets. Entries may sit in either
    /// triangle; duplicates (after mirroring) are summed. The diagonal is
    /// always materialised, as an explicit zero if nothing lands on it.
    pub fn from_triplets(dim: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut entries = Vec::with_capacity(triplets.len() + dim);
        for &(i, j, v) in triplets {
            if i >= dim || j >= dim {
                return Err(invalid(format!("entry ({i}, {j}) outside a {dim}x{dim} matrix")));
            }
            if !v.is_finite() {
                return Err(invalid(format!("entry ({i}, {j}) is not finite")));
            }
            let (r, c) = if i >= j { (i, j) } else { (j, i) };
            entries.push((c, r, v));
        }
        for d in 0..dim {
            entries.push((d, d, 0.0));
        }
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut col_ptr = vec![0usize; dim + 1];
        let mut row_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (c, r, v) in entries {
            if last == Some((c, r)) {
                *values.last_mut().unwrap() += v;
            } else {
                row_idx.push(r);
                values.push(v);
                col_ptr[c + 1] += 1;
                last = Some((c, r));
            }
        }
        for c in 0..dim {
            col_ptr[c + 1] += col_ptr[c];
        }
        Ok(Self {
            dim,
            col_ptr,
            row_idx,
            values,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            col_ptr: (0..=dim).collect(),
            row_idx: (0..dim).collect(),
            values: vec![1.0; dim],
        }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(invalid("matrix must be square"));
        }
        let n = m.nrows();
        let mut t = Vec::new();
        for j in 0..n {
            for i in j..n {
                if m[(i, j)] != 0.0 {
                    t.push((i, j, m[(i, j)]));
                }
            }
        }
        Self::from_triplets(n, &t)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Stored entries of the lower triangle, including explicit zeros.
    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Lower-triangle entries as `(row, col, value)` with `row >= col`.
    pub fn iter_lower(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |c| {
            (self.col_ptr[c]..self.col_ptr[c + 1]).map(move |p| (self.row_idx[p], c, self.values[p]))
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let rows = &self.row_idx[self.col_ptr[c]..self.col_ptr[c + 1]];
        match rows.binary_search(&r) {
            Ok(k) => self.values[self.col_ptr[c] + k],
            Err(_) => 0.0,
        }
    }

    /// Index into `values` of the stored entry `(i, j)`.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let rows = &self.row_idx[self.col_ptr[c]..self.col_ptr[c + 1]];
        rows.binary_search(&r).ok().map(|k| self.col_ptr[c] + k)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|c| self.values[self.col_ptr[c]]).collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= factor);
        out
    }

    /// Adds `shift` to every diagonal entry.
    pub fn add_diagonal(&mut self, shift: f64) {
        for c in 0..self.dim {
            self.values[self.col_ptr[c]] += shift;
        }
    }

    pub fn same_pattern(&self, other: &Self) -> bool {
        self.dim == other.dim && self.col_ptr == other.col_ptr && self.row_idx == other.row_idx
    }

    /// Symmetric matrix-vector product.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim, "vector length must match matrix order");
        let mut y = vec![0.0; self.dim];
        for c in 0..self.dim {
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                let r = self.row_idx[p];
                let v = self.values[p];
                y[r] += v * x[c];
                if r != c {
                    y[c] += v * x[r];
                }
            }
        }
        y
    }

    /// `x' M x`
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.mul_vec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.iter_lower() {
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
        m
    }

    /// Block-diagonal concatenation.
    pub fn block_diagonal(blocks: &[&SparseSym]) -> Self {
        let dim = blocks.iter().map(|b| b.dim).sum();
        let mut col_ptr = Vec::with_capacity(dim + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0);
        let mut offset = 0;
        for b in blocks {
            for c in 0..b.dim {
                for p in b.col_ptr[c]..b.col_ptr[c + 1] {
                    row_idx.push(b.row_idx[p] + offset);
                    values.push(b.values[p]);
                }
                col_ptr.push(row_idx.len());
            }
            offset += b.dim;
        }
        Self {
            dim,
            col_ptr,
            row_idx,
            values,
        }
    }
}

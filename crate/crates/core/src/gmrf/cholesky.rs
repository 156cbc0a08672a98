//! Sparse Cholesky factorization `P M P' = L L'` with a fill-reducing
//! ordering, plus the Takahashi selected inverse used for marginal variances.
//!
//! Analysis (ordering + factor pattern) is separated from the numeric phase so
//! a pattern can be analysed once and refactored many times.

use std::collections::{BTreeSet, HashSet};
use std::sync::Arc;

use nalgebra::DMatrix;

use super::sparse::SparseSym;
use super::structure::PrecisionStructure;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Ordering {
    Natural,
    #[default]
    MinimumDegree,
}

/// Ordering and factor pattern for one sparsity pattern.
#[derive(Debug)]
pub struct SymbolicCholesky {
    dim: usize,
    perm: Vec<usize>,
    inv_perm: Vec<usize>,
    l_col_ptr: Vec<usize>,
    l_row_idx: Vec<usize>,
    source_col_ptr: Vec<usize>,
    source_row_idx: Vec<usize>,
    /// Position in the factor values of each stored source entry.
    source_map: Vec<usize>,
}

impl SymbolicCholesky {
    pub fn analyze(m: &SparseSym, ordering: Ordering) -> Self {
        let n = m.dim();
        let perm = match ordering {
            Ordering::Natural => (0..n).collect::<Vec<_>>(),
            Ordering::MinimumDegree => minimum_degree(m),
        };
        let mut inv_perm = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            inv_perm[p] = k;
        }

        // Strictly-lower rows of the permuted matrix, by permuted column.
        let mut below: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (r, c, _) in m.iter_lower() {
            if r == c {
                continue;
            }
            let (pr, pc) = (inv_perm[r], inv_perm[c]);
            let (lo, hi) = if pr > pc { (pc, pr) } else { (pr, pc) };
            below[lo].push(hi);
        }

        let mut patterns: Vec<Vec<usize>> = Vec::with_capacity(n);
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut mark = vec![usize::MAX; n];
        for j in 0..n {
            let mut rows = Vec::new();
            for &r in &below[j] {
                if mark[r] != j {
                    mark[r] = j;
                    rows.push(r);
                }
            }
            for &c in &children[j] {
                for &r in &patterns[c] {
                    if r != j && mark[r] != j {
                        mark[r] = j;
                        rows.push(r);
                    }
                }
            }
            rows.sort_unstable();
            if let Some(&parent) = rows.first() {
                children[parent].push(j);
            }
            patterns.push(rows);
        }

        let mut l_col_ptr = Vec::with_capacity(n + 1);
        let mut l_row_idx = Vec::with_capacity(n + patterns.iter().map(Vec::len).sum::<usize>());
        l_col_ptr.push(0);
        for (j, rows) in patterns.iter().enumerate() {
            l_row_idx.push(j);
            l_row_idx.extend_from_slice(rows);
            l_col_ptr.push(l_row_idx.len());
        }

        let mut source_map = Vec::with_capacity(m.nnz());
        for (r, c, _) in m.iter_lower() {
            let (pr, pc) = (inv_perm[r], inv_perm[c]);
            let (lo, hi) = if pr > pc { (pc, pr) } else { (pr, pc) };
            let col = &l_row_idx[l_col_ptr[lo]..l_col_ptr[lo + 1]];
            let k = col.binary_search(&hi).expect("source entry inside factor pattern");
            source_map.push(l_col_ptr[lo] + k);
        }

        Self {
            dim: n,
            perm,
            inv_perm,
            l_col_ptr,
            l_row_idx,
            source_col_ptr: m.col_ptr().to_vec(),
            source_row_idx: m.row_idx().to_vec(),
            source_map,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `perm[k]` is the original index placed at position `k`.
    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn factor_nnz(&self) -> usize {
        self.l_row_idx.len()
    }

    pub fn matches(&self, m: &SparseSym) -> bool {
        m.dim() == self.dim && m.col_ptr() == self.source_col_ptr && m.row_idx() == self.source_row_idx
    }

    /// Numeric factorization of `m + jitter * I`. `m` must carry exactly the
    /// analysed pattern.
    pub fn factor(self: &Arc<Self>, m: &SparseSym, jitter: f64) -> Result<CholeskyFactor> {
        if !self.matches(m) {
            return Err(invalid("matrix pattern differs from the analysed pattern"));
        }
        let n = self.dim;
        let cp = &self.l_col_ptr;
        let ri = &self.l_row_idx;
        let mut vals = vec![0.0; ri.len()];
        for (k, &v) in m.values().iter().enumerate() {
            vals[self.source_map[k]] += v;
        }
        if jitter != 0.0 {
            for j in 0..n {
                vals[cp[j]] += jitter;
            }
        }

        // Left-looking: column k is queued on the row of its next unused entry.
        let mut work = vec![0.0; n];
        let mut next = vec![0usize; n];
        let mut head = vec![usize::MAX; n];
        let mut link = vec![usize::MAX; n];
        let mut log_det = 0.0;
        for j in 0..n {
            let diag_in = vals[cp[j]];
            for p in cp[j]..cp[j + 1] {
                work[ri[p]] = vals[p];
            }
            let mut k = head[j];
            head[j] = usize::MAX;
            while k != usize::MAX {
                let following = link[k];
                let pos = next[k];
                let ljk = vals[pos];
                for p in pos..cp[k + 1] {
                    work[ri[p]] -= vals[p] * ljk;
                }
                next[k] = pos + 1;
                if pos + 1 < cp[k + 1] {
                    let r = ri[pos + 1];
                    link[k] = head[r];
                    head[r] = k;
                }
                k = following;
            }
            let d = work[j];
            if !d.is_finite() || d <= 4.0 * f64::EPSILON * diag_in.abs() {
                return Err(Error::NotPositiveDefinite {
                    pivot: self.perm[j],
                    value: d,
                });
            }
            let ljj = d.sqrt();
            log_det += 2.0 * ljj.ln();
            vals[cp[j]] = ljj;
            work[j] = 0.0;
            for p in cp[j] + 1..cp[j + 1] {
                vals[p] = work[ri[p]] / ljj;
                work[ri[p]] = 0.0;
            }
            next[j] = cp[j] + 1;
            if cp[j] + 1 < cp[j + 1] {
                let r = ri[cp[j] + 1];
                link[j] = head[r];
                head[r] = j;
            }
        }

        Ok(CholeskyFactor {
            symbolic: Arc::clone(self),
            values: vals,
            log_det,
        })
    }
}

/// Minimum-degree ordering on an explicit elimination graph, ties broken by
/// lowest index.
fn minimum_degree(m: &SparseSym) -> Vec<usize> {
    let n = m.dim();
    let mut adj: Vec<HashSet<usize>> = vec![HashSet::new(); n];
    for (r, c, _) in m.iter_lower() {
        if r != c {
            adj[r].insert(c);
            adj[c].insert(r);
        }
    }
    let mut queue: BTreeSet<(usize, usize)> = (0..n).map(|v| (adj[v].len(), v)).collect();
    let mut order = Vec::with_capacity(n);
    while let Some((_, v)) = queue.pop_first() {
        order.push(v);
        let nbrs: Vec<usize> = adj[v].drain().collect();
        for &u in &nbrs {
            let before = adj[u].len();
            adj[u].remove(&v);
            for &w in &nbrs {
                if w != u {
                    adj[u].insert(w);
                }
            }
            let after = adj[u].len();
            if after != before {
                queue.remove(&(before, u));
                queue.insert((after, u));
            }
        }
    }
    order
}

/// Numeric factor `L` of `P M P'`, sharing its analysis.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    symbolic: Arc<SymbolicCholesky>,
    values: Vec<f64>,
    log_det: f64,
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.symbolic.dim
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn permutation(&self) -> &[usize] {
        &self.symbolic.perm
    }

    pub fn symbolic(&self) -> &Arc<SymbolicCholesky> {
        &self.symbolic
    }

    /// `(col_ptr, row_idx, values)` of the lower factor in permuted indices;
    /// the first entry of every column is its diagonal.
    pub fn lower_factor(&self) -> (&[usize], &[usize], &[f64]) {
        (&self.symbolic.l_col_ptr, &self.symbolic.l_row_idx, &self.values)
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if rhs.len() != n {
            return Err(invalid(format!("right-hand side has length {}, expected {n}", rhs.len())));
        }
        let perm = &self.symbolic.perm;
        let mut y: Vec<f64> = perm.iter().map(|&p| rhs[p]).collect();
        self.solve_permuted(&mut y);
        let mut x = vec![0.0; n];
        for (k, &p) in perm.iter().enumerate() {
            x[p] = y[k];
        }
        Ok(x)
    }

    fn solve_permuted(&self, y: &mut [f64]) {
        let cp = &self.symbolic.l_col_ptr;
        let ri = &self.symbolic.l_row_idx;
        let l = &self.values;
        let n = self.dim();
        for j in 0..n {
            y[j] /= l[cp[j]];
            let yj = y[j];
            for p in cp[j] + 1..cp[j + 1] {
                y[ri[p]] -= l[p] * yj;
            }
        }
        for j in (0..n).rev() {
            let mut s = y[j];
            for p in cp[j] + 1..cp[j + 1] {
                s -= l[p] * y[ri[p]];
            }
            y[j] = s / l[cp[j]];
        }
    }

    /// Solves `L' P z = w` for `z`: maps iid standard normals `w` to a draw
    /// with precision `M`.
    pub fn sample_transform(&self, w: &[f64]) -> Vec<f64> {
        let cp = &self.symbolic.l_col_ptr;
        let ri = &self.symbolic.l_row_idx;
        let l = &self.values;
        let n = self.dim();
        let mut y = w.to_vec();
        for j in (0..n).rev() {
            let mut s = y[j];
            for p in cp[j] + 1..cp[j + 1] {
                s -= l[p] * y[ri[p]];
            }
            y[j] = s / l[cp[j]];
        }
        let mut x = vec![0.0; n];
        for (k, &p) in self.symbolic.perm.iter().enumerate() {
            x[p] = y[k];
        }
        x
    }

    /// `P' L L' P` as a dense matrix (for checks on small instances).
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let n = self.dim();
        let (cp, ri, v) = self.lower_factor();
        let mut l = DMatrix::zeros(n, n);
        for j in 0..n {
            for p in cp[j]..cp[j + 1] {
                l[(ri[p], j)] = v[p];
            }
        }
        let c = &l * l.transpose();
        let inv = &self.symbolic.inv_perm;
        DMatrix::from_fn(n, n, |i, j| c[(inv[i], inv[j])])
    }

    /// Entries of `M^{-1}` on the factor pattern (Takahashi recursion).
    pub fn selected_inverse(&self) -> SelectedInverse {
        let cp = &self.symbolic.l_col_ptr;
        let ri = &self.symbolic.l_row_idx;
        let l = &self.values;
        let n = self.dim();
        let mut s = vec![0.0; l.len()];
        let lookup = |s: &[f64], i: usize, k: usize| -> f64 {
            let (r, c) = if i >= k { (i, k) } else { (k, i) };
            let col = &ri[cp[c]..cp[c + 1]];
            let pos = col.binary_search(&r).expect("entry on the factor pattern");
            s[cp[c] + pos]
        };
        for j in (0..n).rev() {
            let start = cp[j];
            let end = cp[j + 1];
            let ljj = l[start];
            for a in start + 1..end {
                let i = ri[a];
                let mut acc = 0.0;
                for b in start + 1..end {
                    acc += l[b] * lookup(&s, i, ri[b]);
                }
                s[a] = -acc / ljj;
            }
            let mut acc = 0.0;
            for b in start + 1..end {
                acc += l[b] * s[b];
            }
            s[start] = 1.0 / (ljj * ljj) - acc / ljj;
        }
        SelectedInverse {
            symbolic: Arc::clone(&self.symbolic),
            values: s,
        }
    }
}

/// Covariance entries on the factor pattern, addressed by original indices.
#[derive(Debug, Clone)]
pub struct SelectedInverse {
    symbolic: Arc<SymbolicCholesky>,
    values: Vec<f64>,
}

impl SelectedInverse {
    /// `None` when `(i, j)` is outside the factor pattern.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let sym = &self.symbolic;
        let (pi, pj) = (sym.inv_perm[i], sym.inv_perm[j]);
        let (r, c) = if pi >= pj { (pi, pj) } else { (pj, pi) };
        let col = &sym.l_row_idx[sym.l_col_ptr[c]..sym.l_col_ptr[c + 1]];
        col.binary_search(&r).ok().map(|k| self.values[sym.l_col_ptr[c] + k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let sym = &self.symbolic;
        (0..sym.dim)
            .map(|i| self.values[sym.l_col_ptr[sym.inv_perm[i]]])
            .collect()
    }
}

/// One-shot factorization of `m + jitter * I` with a fresh analysis.
pub fn cholesky(m: &PrecisionStructure, jitter: f64) -> Result<CholeskyFactor> {
    cholesky_sparse(m.entries(), jitter)
}

pub fn cholesky_sparse(m: &SparseSym, jitter: f64) -> Result<CholeskyFactor> {
    let symbolic = Arc::new(SymbolicCholesky::analyze(m, Ordering::MinimumDegree));
    symbolic.factor(m, jitter)
}

pub fn solve(factor: &CholeskyFactor, rhs: &[f64]) -> Result<Vec<f64>> {
    factor.solve(rhs)
}

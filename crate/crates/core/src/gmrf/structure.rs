//! Structure matrices of the GMRF priors and the neighbour graph they are
//! built from.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, SymmetricEigen};

use super::sparse::SparseSym;
use crate::error::{invalid, Error, Result};

/// Largest order `numeric_rank` will eigensolve densely.
pub const DENSE_RANK_LIMIT: usize = 4096;

/// Undirected neighbour graph over sites `1..=n_sites`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiteGraph {
    n_sites: usize,
    /// Unordered pairs stored as `(lo, hi)` with `lo < hi`, 1-based.
    edges: BTreeSet<(usize, usize)>,
}

impl SiteGraph {
    /// Rejects self-loops, duplicates (in either orientation) and endpoints
    /// outside `1..=n_sites`.
    pub fn new(n_sites: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut set = BTreeSet::new();
        for &(a, b) in edges {
            if a == b {
                return Err(invalid(format!("self-loop on site {a}")));
            }
            if a == 0 || b == 0 || a > n_sites || b > n_sites {
                return Err(invalid(format!("edge {a}-{b} outside sites 1..={n_sites}")));
            }
            if !set.insert((a.min(b), a.max(b))) {
                return Err(invalid(format!("duplicate edge {a}-{b}")));
            }
        }
        Ok(Self { n_sites, edges: set })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    /// 1-based neighbour lists, index 0 unused.
    pub fn neighbours(&self) -> Vec<Vec<usize>> {
        let mut nb = vec![Vec::new(); self.n_sites + 1];
        for &(a, b) in &self.edges {
            nb[a].push(b);
            nb[b].push(a);
        }
        nb
    }

    pub fn degree(&self, site: usize) -> usize {
        self.edges.iter().filter(|&&(a, b)| a == site || b == site).count()
    }

    /// Connected components as sorted 1-based site lists, ordered by their
    /// smallest site.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let nb = self.neighbours();
        let mut seen = vec![false; self.n_sites + 1];
        let mut out = Vec::new();
        for start in 1..=self.n_sites {
            if seen[start] {
                continue;
            }
            let mut comp = vec![start];
            seen[start] = true;
            let mut stack = vec![start];
            while let Some(v) = stack.pop() {
                for &u in &nb[v] {
                    if !seen[u] {
                        seen[u] = true;
                        comp.push(u);
                        stack.push(u);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.n_sites > 0 && self.components().len() == 1
    }

    /// Parses the edge-list format: `n <n_sites>` first, then `i j` pairs;
    /// `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut n_sites = None;
        let mut edges = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line_no = k + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let parse_num = |s: &str| {
                s.parse::<usize>().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("expected a non-negative integer, found {s:?}"),
                })
            };
            match n_sites {
                None => {
                    if fields.len() != 2 || fields[0] != "n" {
                        return Err(Error::Parse {
                            line: line_no,
                            message: "graph file must start with `n <n_sites>`".into(),
                        });
                    }
                    n_sites = Some(parse_num(fields[1])?);
                }
                Some(_) => {
                    if fields.len() != 2 {
                        return Err(Error::Parse {
                            line: line_no,
                            message: format!("expected `i j`, found {line:?}"),
                        });
                    }
                    edges.push((parse_num(fields[0])?, parse_num(fields[1])?));
                }
            }
        }
        let n = n_sites.ok_or_else(|| Error::Parse {
            line: 1,
            message: "empty graph file".into(),
        })?;
        Self::new(n, &edges)
    }

    pub fn to_edge_list(&self) -> String {
        let mut s = format!("n {}\n", self.n_sites);
        for &(a, b) in &self.edges {
            s.push_str(&format!("{a} {b}\n"));
        }
        s
    }

    /// Row/column presence grid as 0/1 CSV (no header), for inspection.
    pub fn presence_grid_csv(&self) -> String {
        let n = self.n_sites;
        let mut s = String::new();
        for r in 1..=n {
            let row: Vec<&str> = (1..=n).map(|c| if self.has_edge(r, c) { "1" } else { "0" }).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}

/// Sparse symmetric structure/precision matrix with its known rank deficiency
/// and the linear constraints `A x = 0` that remove its null space.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionStructure {
    entries: SparseSym,
    rank_deficiency: usize,
    constraints: Vec<Vec<f64>>,
}

impl PrecisionStructure {
    pub fn new(entries: SparseSym, rank_deficiency: usize, constraints: Vec<Vec<f64>>) -> Result<Self> {
        let dim = entries.dim();
        if rank_deficiency > dim {
            return Err(invalid("rank deficiency exceeds matrix order"));
        }
        if constraints.iter().any(|c| c.len() != dim) {
            return Err(invalid("constraint length differs from matrix order"));
        }
        Ok(Self {
            entries,
            rank_deficiency,
            constraints,
        })
    }

    pub fn dim(&self) -> usize {
        self.entries.dim()
    }

    pub fn entries(&self) -> &SparseSym {
        &self.entries
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries.get(i, j)
    }

    pub fn rank_deficiency(&self) -> usize {
        self.rank_deficiency
    }

    pub fn rank(&self) -> usize {
        self.dim() - self.rank_deficiency
    }

    pub fn constraints(&self) -> &[Vec<f64>] {
        &self.constraints
    }

    pub fn is_intrinsic(&self) -> bool {
        self.rank_deficiency > 0
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.entries.to_dense()
    }
}

/// ICAR structure: neighbour count on the diagonal, -1 for each edge, one
/// sum-to-zero constraint per connected component.
pub fn build_icar_structure(graph: &SiteGraph) -> Result<PrecisionStructure> {
    let n = graph.n_sites();
    if n == 0 {
        return Err(invalid("graph has no sites"));
    }
    let mut t = Vec::with_capacity(n + graph.n_edges());
    let mut degree = vec![0.0; n];
    for (a, b) in graph.edges() {
        t.push((b - 1, a - 1, -1.0));
        degree[a - 1] += 1.0;
        degree[b - 1] += 1.0;
    }
    for (i, d) in degree.into_iter().enumerate() {
        t.push((i, i, d));
    }
    let components = graph.components();
    let constraints = components
        .iter()
        .map(|comp| {
            let mut row = vec![0.0; n];
            for &s in comp {
                row[s - 1] = 1.0;
            }
            row
        })
        .collect();
    PrecisionStructure::new(SparseSym::from_triplets(n, &t)?, components.len(), constraints)
}

pub fn build_iid_structure(n: usize) -> Result<PrecisionStructure> {
    if n == 0 {
        return Err(invalid("iid structure needs n >= 1"));
    }
    PrecisionStructure::new(SparseSym::identity(n), 0, Vec::new())
}

/// Seasonal structure `S'S` where each row of `S` sums `period` consecutive
/// entries. Constraints: the sum over each seasonal phase is zero.
pub fn build_seasonal_structure(n_times: usize, period: usize) -> Result<PrecisionStructure> {
    if period < 2 {
        return Err(invalid(format!("season length {period} must be at least 2")));
    }
    if period > n_times {
        return Err(invalid(format!("season length {period} exceeds {n_times} time points")));
    }
    let windows = n_times - period + 1;
    // (S'S)_{ij} counts windows covering both i and j.
    let mut t = Vec::new();
    for i in 0..n_times {
        for j in i.saturating_sub(period - 1)..=i {
            let lo = i.saturating_sub(period - 1);
            let hi = j.min(windows - 1);
            if hi >= lo {
                t.push((i, j, (hi - lo + 1) as f64));
            }
        }
    }
    let constraints = (0..period)
        .map(|phase| {
            (0..n_times)
                .map(|t| if t % period == phase { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();
    PrecisionStructure::new(SparseSym::from_triplets(n_times, &t)?, period - 1, constraints)
}

/// Random-walk structure `D'D` with `D` the `order`-th difference matrix.
pub fn build_rw_structure(n_times: usize, order: usize) -> Result<PrecisionStructure> {
    let coeffs: &[f64] = match order {
        1 => &[-1.0, 1.0],
        2 => &[1.0, -2.0, 1.0],
        _ => return Err(invalid(format!("random-walk order {order} must be 1 or 2"))),
    };
    if n_times <= order {
        return Err(invalid(format!("random walk of order {order} needs more than {order} time points")));
    }
    let mut t = Vec::new();
    for start in 0..n_times - order {
        for (a, ca) in coeffs.iter().enumerate() {
            for (b, cb) in coeffs.iter().enumerate().take(a + 1) {
                t.push((start + a, start + b, ca * cb));
            }
        }
    }
    let mut constraints = vec![vec![1.0; n_times]];
    if order == 2 {
        constraints.push((0..n_times).map(|t| t as f64 - (n_times as f64 - 1.0) / 2.0).collect());
    }
    PrecisionStructure::new(SparseSym::from_triplets(n_times, &t)?, order, constraints)
}

/// Kronecker product `a ⊗ b`. Constraints are `c_a ⊗ e_j` and `e_i ⊗ c_b`,
/// reduced to a linearly independent set.
pub fn kronecker(a: &PrecisionStructure, b: &PrecisionStructure) -> Result<PrecisionStructure> {
    let (na, nb) = (a.dim(), b.dim());
    let a_full: Vec<(usize, usize, f64)> = full_entries(a.entries());
    let b_full: Vec<(usize, usize, f64)> = full_entries(b.entries());
    let mut t = Vec::with_capacity(a_full.len() * b_full.len() / 2 + 1);
    for &(ia, ja, va) in &a_full {
        for &(ib, jb, vb) in &b_full {
            let (i, j) = (ia * nb + ib, ja * nb + jb);
            if i >= j {
                t.push((i, j, va * vb));
            }
        }
    }
    let dim = na * nb;
    let entries = SparseSym::from_triplets(dim, &t)?;
    let rank = a.rank() * b.rank();

    let mut candidates = Vec::new();
    for ca in a.constraints() {
        for j in 0..nb {
            let mut row = vec![0.0; dim];
            for (i, &v) in ca.iter().enumerate() {
                row[i * nb + j] = v;
            }
            candidates.push(row);
        }
    }
    for cb in b.constraints() {
        for i in 0..na {
            let mut row = vec![0.0; dim];
            for (j, &v) in cb.iter().enumerate() {
                row[i * nb + j] = v;
            }
            candidates.push(row);
        }
    }
    let constraints = independent_rows(candidates);
    PrecisionStructure::new(entries, dim - rank, constraints)
}

fn full_entries(m: &SparseSym) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for (r, c, v) in m.iter_lower() {
        if v == 0.0 {
            continue;
        }
        out.push((r, c, v));
        if r != c {
            out.push((c, r, v));
        }
    }
    out
}

/// Keeps the rows that are linearly independent of the ones before them
/// (modified Gram-Schmidt test, original rows returned).
fn independent_rows(rows: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut kept = Vec::new();
    for row in rows {
        let norm0 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm0 == 0.0 {
            continue;
        }
        let mut r = row.clone();
        for q in &basis {
            let d: f64 = r.iter().zip(q).map(|(x, y)| x * y).sum();
            r.iter_mut().zip(q).for_each(|(x, y)| *x -= d * y);
        }
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-9 * norm0 {
            r.iter_mut().for_each(|x| *x /= norm);
            basis.push(r);
            kept.push(row);
        }
    }
    kept
}

/// Eigenvalues of the dense symmetric matrix, ascending.
pub fn eigenvalues(m: &PrecisionStructure) -> Result<Vec<f64>> {
    if m.dim() > DENSE_RANK_LIMIT {
        return Err(Error::UnsupportedSize {
            dim: m.dim(),
            max: DENSE_RANK_LIMIT,
        });
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(m.to_dense()).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(ev)
}

/// Number of eigenvalues above `1e-8` times the largest.
pub fn numeric_rank(m: &PrecisionStructure) -> Result<usize> {
    let ev = eigenvalues(m)?;
    let max = ev.iter().copied().fold(0.0_f64, f64::max);
    if max <= 0.0 {
        return Ok(0);
    }
    Ok(ev.iter().filter(|&&e| e > 1e-8 * max).count())
}

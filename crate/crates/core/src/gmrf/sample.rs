//! Exact draws from a (possibly intrinsic) GMRF restricted to `A x = 0`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::cholesky::{cholesky_sparse, CholeskyFactor};
use super::sparse::SparseSym;
use super::structure::PrecisionStructure;
use crate::error::{invalid, Error, Result};

/// Samples `N(0, Q^-1)` conditioned on the structure's constraints.
///
/// `Q + A'A` is factored instead of `Q`; on `A x = 0` the two quadratic forms
/// agree, so conditioning a draw from the former on the constraints
/// (kriging correction) yields the intended law.
#[derive(Debug, Clone)]
pub struct GmrfSampler {
    factor: CholeskyFactor,
    constraints: Vec<Vec<f64>>,
    /// `M^-1 A'`, one column per constraint.
    v: Vec<Vec<f64>>,
    s: Option<Cholesky<f64, Dyn>>,
    gram: Option<Cholesky<f64, Dyn>>,
}

impl GmrfSampler {
    pub fn new(q: &PrecisionStructure) -> Result<Self> {
        let dim = q.dim();
        let constraints = q.constraints().to_vec();
        let mut triplets: Vec<(usize, usize, f64)> = q.entries().iter_lower().collect();
        for row in &constraints {
            let support: Vec<(usize, f64)> =
                row.iter().enumerate().filter(|(_, a)| **a != 0.0).map(|(i, a)| (i, *a)).collect();
            for (k, &(i, a)) in support.iter().enumerate() {
                for &(j, b) in &support[..=k] {
                    triplets.push((i, j, a * b));
                }
            }
        }
        let m = SparseSym::from_triplets(dim, &triplets)?;
        let factor = cholesky_sparse(&m, 0.0)?;
        let v = constraints
            .iter()
            .map(|row| factor.solve(row))
            .collect::<Result<Vec<_>>>()?;
        let k = constraints.len();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let (s, gram) = if k == 0 {
            (None, None)
        } else {
            let s = DMatrix::from_fn(k, k, |a, b| dot(&constraints[a], &v[b]));
            let g = DMatrix::from_fn(k, k, |a, b| dot(&constraints[a], &constraints[b]));
            (
                Some(Cholesky::new(s).ok_or_else(|| Error::Degenerate("constraints not identifiable".into()))?),
                Some(Cholesky::new(g).ok_or_else(|| invalid("constraint rows are linearly dependent"))?),
            )
        };
        Ok(Self {
            factor,
            constraints,
            v,
            s,
            gram,
        })
    }

    pub fn dim(&self) -> usize {
        self.factor.dim()
    }

    fn residual(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.constraints.len(),
            self.constraints.iter().map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum()),
        )
    }

    /// Maps iid standard normals `z` to one constrained draw.
    pub fn sample(&self, z: &[f64]) -> Vec<f64> {
        assert_eq!(z.len(), self.dim(), "one standard normal per latent entry");
        let mut x = self.factor.sample_transform(z);
        if let (Some(s), Some(gram)) = (&self.s, &self.gram) {
            let c = s.solve(&self.residual(&x));
            for (vk, ck) in self.v.iter().zip(c.iter()) {
                for (xi, vi) in x.iter_mut().zip(vk) {
                    *xi -= vi * ck;
                }
            }
            // Orthogonal clean-up of rounding left by the correction.
            let c = gram.solve(&self.residual(&x));
            for (row, ck) in self.constraints.iter().zip(c.iter()) {
                for (xi, a) in x.iter_mut().zip(row) {
                    *xi -= a * ck;
                }
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmrf::structure::{build_icar_structure, SiteGraph};

    #[test]
    fn icar_draws_sum_to_zero() {
        let g = SiteGraph::new(4, &[(1, 2), (2, 3), (3, 4)]).unwrap();
        let s = GmrfSampler::new(&build_icar_structure(&g).unwrap()).unwrap();
        let x = s.sample(&[0.3, -1.2, 2.0, 0.7]);
        assert!(x.iter().sum::<f64>().abs() < 1e-12);
        assert!(x.iter().any(|v| v.abs() > 1e-3));
    }
}

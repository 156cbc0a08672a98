//! Gaussian approximation to the latent field given fixed hyperparameters:
//! Newton iterations on log prior + log likelihood, with linear constraints
//! `A x = 0` imposed by conditioning each step (kriging correction).

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{invalid, Error, Result};
use crate::gmrf::{CholeskyFactor, Ordering, PrecisionStructure, SelectedInverse, SparseSym, SymbolicCholesky};

const MAX_NEWTON_ITERATIONS: usize = 100;
const MAX_HALVINGS: usize = 30;
const RESIDUAL_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Likelihood {
    /// `y ~ Poisson(exp(eta))`
    PoissonLog,
    /// `y ~ Normal(eta, 1 / precision)`
    GaussianIdentity { precision: f64 },
}

impl Likelihood {
    /// Log-density, its derivative in `eta` and the negative second
    /// derivative.
    fn terms(self, y: f64, eta: f64) -> (f64, f64, f64) {
        match self {
            Likelihood::PoissonLog => {
                let mu = eta.exp();
                (y * eta - mu - ln_factorial(y), y - mu, mu)
            }
            Likelihood::GaussianIdentity { precision } => {
                let r = y - eta;
                (
                    0.5 * (precision / (2.0 * std::f64::consts::PI)).ln() - 0.5 * precision * r * r,
                    precision * r,
                    precision,
                )
            }
        }
    }
}

fn ln_factorial(y: f64) -> f64 {
    statrs::function::gamma::ln_gamma(y + 1.0)
}

/// Linear predictor entry `eta = sum_k w_k x_{i_k} + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorRow {
    pub terms: Vec<(usize, f64)>,
    pub offset: f64,
}

impl PredictorRow {
    /// `eta = x_index + offset`
    pub fn single(index: usize, offset: f64) -> Self {
        Self {
            terms: vec![(index, 1.0)],
            offset,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, w)| w * x[i]).sum::<f64>() + self.offset
    }
}

/// A latent Gaussian model at fixed hyperparameters.
///
/// The prior is `N(prior_mean, Q^{-1})` restricted to the constraints stored
/// in `prior_precision`; `Q` itself must be positive definite (intrinsic
/// blocks carry a small diagonal jitter).
#[derive(Debug, Clone)]
pub struct LatentGaussianProblem {
    pub prior_precision: PrecisionStructure,
    pub prior_mean: Vec<f64>,
    /// One linear-predictor row per observation.
    pub observation_map: Vec<PredictorRow>,
    pub likelihood: Likelihood,
    pub observations: Vec<Option<f64>>,
    /// Newton starting point; the prior mean when absent.
    pub initial: Option<Vec<f64>>,
}

impl LatentGaussianProblem {
    pub fn dim(&self) -> usize {
        self.prior_precision.dim()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.prior_mean.len() != d {
            return Err(invalid(format!("prior mean has length {}, expected {d}", self.prior_mean.len())));
        }
        if self.observation_map.len() != self.observations.len() {
            return Err(invalid(format!(
                "{} predictor rows for {} observations",
                self.observation_map.len(),
                self.observations.len()
            )));
        }
        for (k, row) in self.observation_map.iter().enumerate() {
            if row.terms.is_empty() {
                return Err(invalid(format!("observation {k} loads on no latent entry")));
            }
            if let Some(&(i, _)) = row.terms.iter().find(|&&(i, _)| i >= d) {
                return Err(invalid(format!("observation {k} loads on latent index {i} >= {d}")));
            }
            if !row.offset.is_finite() || row.terms.iter().any(|t| !t.1.is_finite()) {
                return Err(invalid(format!("observation {k} has a non-finite predictor")));
            }
        }
        for (k, y) in self.observations.iter().enumerate() {
            if let Some(y) = *y {
                let ok = match self.likelihood {
                    Likelihood::PoissonLog => y.is_finite() && y >= 0.0,
                    Likelihood::GaussianIdentity { .. } => y.is_finite(),
                };
                if !ok {
                    return Err(invalid(format!("observation {k} = {y} is outside the likelihood support")));
                }
            }
        }
        if let Likelihood::GaussianIdentity { precision } = self.likelihood {
            if !(precision > 0.0 && precision.is_finite()) {
                return Err(invalid("noise precision must be positive"));
            }
        }
        if let Some(init) = &self.initial {
            if init.len() != d {
                return Err(invalid("initial point has the wrong length"));
            }
        }
        if self.observations.iter().all(Option::is_none) {
            return Err(Error::Degenerate("every observation is missing".into()));
        }
        Ok(())
    }

    pub fn linear_predictor(&self, x: &[f64]) -> Vec<f64> {
        self.observation_map.iter().map(|r| r.eval(x)).collect()
    }

    pub fn log_likelihood(&self, x: &[f64]) -> f64 {
        self.observation_map
            .iter()
            .zip(&self.observations)
            .filter_map(|(row, y)| y.map(|y| self.likelihood.terms(y, row.eval(x)).0))
            .sum()
    }

    /// `log p(y | x) - (x - m)' Q (x - m) / 2`, the Newton objective.
    pub fn log_joint(&self, x: &[f64]) -> f64 {
        let dev: Vec<f64> = x.iter().zip(&self.prior_mean).map(|(a, b)| a - b).collect();
        self.log_likelihood(x) - 0.5 * self.prior_precision.entries().quad_form(&dev)
    }

    /// Gradient of [`Self::log_joint`].
    pub fn log_joint_gradient(&self, x: &[f64]) -> Vec<f64> {
        self.gradient_and_weights(x).0
    }

    fn gradient_and_weights(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let dev: Vec<f64> = x.iter().zip(&self.prior_mean).map(|(a, b)| a - b).collect();
        let mut grad: Vec<f64> = self.prior_precision.entries().mul_vec(&dev).iter().map(|v| -v).collect();
        let mut weights = vec![0.0; self.observations.len()];
        for (k, (row, y)) in self.observation_map.iter().zip(&self.observations).enumerate() {
            if let Some(y) = *y {
                let (_, d1, w) = self.likelihood.terms(y, row.eval(x));
                for &(i, c) in &row.terms {
                    grad[i] += c * d1;
                }
                weights[k] = w;
            }
        }
        (grad, weights)
    }
}

/// Symbolic analyses keyed by sparsity pattern, shared across the many
/// refactorizations of a hyperparameter search.
#[derive(Debug, Default)]
pub struct AnalysisCache {
    entries: Mutex<Vec<Arc<SymbolicCholesky>>>,
}

impl AnalysisCache {
    const CAPACITY: usize = 8;

    pub fn new() -> Self {
        Self::default()
    }

    pub fn factor(&self, m: &SparseSym) -> Result<CholeskyFactor> {
        self.analysis(m).factor(m, 0.0)
    }

    fn analysis(&self, m: &SparseSym) -> Arc<SymbolicCholesky> {
        if let Some(found) = self
            .entries
            .lock()
            .expect("analysis cache poisoned")
            .iter()
            .find(|s| s.matches(m))
        {
            return Arc::clone(found);
        }
        let fresh = Arc::new(SymbolicCholesky::analyze(m, Ordering::MinimumDegree));
        let mut entries = self.entries.lock().expect("analysis cache poisoned");
        if entries.len() == Self::CAPACITY {
            entries.remove(0);
        }
        entries.push(Arc::clone(&fresh));
        fresh
    }
}

/// Sparse rows of the constraint matrix `A` with a factored `A A'`.
#[derive(Debug, Clone)]
pub(crate) struct Constraints {
    rows: Vec<Vec<(usize, f64)>>,
    gram: Option<Cholesky<f64, Dyn>>,
}

impl Constraints {
    pub(crate) fn new(dense_rows: &[Vec<f64>]) -> Result<Self> {
        let rows: Vec<Vec<(usize, f64)>> = dense_rows
            .iter()
            .map(|r| r.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| (i, *v)).collect())
            .collect();
        let k = rows.len();
        let gram = if k == 0 {
            None
        } else {
            let g = DMatrix::from_fn(k, k, |a, b| sparse_dot(&rows[a], &rows[b]));
            Some(Cholesky::new(g).ok_or_else(|| invalid("constraint rows are linearly dependent"))?)
        };
        Ok(Self { rows, gram })
    }

    pub(crate) fn len(&self) -> usize {
        self.rows.len()
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub(crate) fn apply(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.rows.len(), self.rows.iter().map(|r| r.iter().map(|&(i, v)| v * x[i]).sum()))
    }

    fn dense_row(&self, k: usize, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for &(i, v) in &self.rows[k] {
            out[i] = v;
        }
        out
    }

    /// Orthogonal projection onto `A x = 0`.
    pub(crate) fn project(&self, v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        if let Some(gram) = &self.gram {
            let c = gram.solve(&self.apply(v));
            for (row, ck) in self.rows.iter().zip(c.iter()) {
                for &(i, a) in row {
                    out[i] -= a * ck;
                }
            }
        }
        out
    }
}

fn sparse_dot(a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
    let (mut i, mut j, mut s) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                s += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    s
}

/// `V = M^{-1} A'` and the factored `A V` for conditioning on `A x = 0`.
#[derive(Debug, Clone)]
pub(crate) struct Conditioning {
    v: Vec<Vec<f64>>,
    s: Cholesky<f64, Dyn>,
}

impl Conditioning {
    pub(crate) fn new(factor: &CholeskyFactor, constraints: &Constraints) -> Result<Option<Self>> {
        if constraints.is_empty() {
            return Ok(None);
        }
        let dim = factor.dim();
        let v = (0..constraints.len())
            .map(|k| factor.solve(&constraints.dense_row(k, dim)))
            .collect::<Result<Vec<_>>>()?;
        let k = v.len();
        let s = DMatrix::from_fn(k, k, |a, b| constraints.rows[a].iter().map(|&(i, w)| w * v[b][i]).sum());
        let s = Cholesky::new(s).ok_or_else(|| Error::Degenerate("constraints are not identifiable".into()))?;
        Ok(Some(Self { v, s }))
    }

    pub(crate) fn log_det(&self) -> f64 {
        2.0 * self.s.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// `x <- x - V (A V)^{-1} A x`
    pub(crate) fn correct(&self, x: &mut [f64], constraints: &Constraints) {
        let c = self.s.solve(&constraints.apply(x));
        for (vk, ck) in self.v.iter().zip(c.iter()) {
            for (xi, vi) in x.iter_mut().zip(vk) {
                *xi -= vi * ck;
            }
        }
    }

    /// `u' (A V)^{-1} u` for `u = V' w`, the variance removed from `w' x`.
    fn reduction(&self, terms: &[(usize, f64)]) -> f64 {
        let u = DVector::from_iterator(
            self.v.len(),
            self.v.iter().map(|vk| terms.iter().map(|&(i, w)| w * vk[i]).sum()),
        );
        u.dot(&self.s.solve(&u))
    }

    /// `b' (A V)^{-1} b` for an arbitrary vector `b` in constraint space.
    pub(crate) fn quad_inverse(&self, b: &DVector<f64>) -> f64 {
        b.dot(&self.s.solve(b))
    }
}

/// Positions in the curvature matrix `Q + B' W B` reused across iterations.
#[derive(Debug, Clone)]
pub(crate) struct HessianPlan {
    template: SparseSym,
    prior_pos: Vec<usize>,
    row_pos: Vec<Vec<(usize, f64)>>,
}

impl HessianPlan {
    pub(crate) fn new(problem: &LatentGaussianProblem) -> Result<Self> {
        let q = problem.prior_precision.entries();
        let rows: Vec<Vec<(usize, f64)>> = problem
            .observation_map
            .iter()
            .map(|r| {
                let mut merged = BTreeMap::new();
                for &(i, w) in &r.terms {
                    *merged.entry(i).or_insert(0.0) += w;
                }
                merged.into_iter().collect()
            })
            .collect();
        let mut triplets: Vec<(usize, usize, f64)> = q.iter_lower().map(|(r, c, _)| (r, c, 0.0)).collect();
        for row in &rows {
            for (a, &(i, _)) in row.iter().enumerate() {
                for &(j, _) in &row[..=a] {
                    triplets.push((i, j, 0.0));
                }
            }
        }
        let template = SparseSym::from_triplets(q.dim(), &triplets)?;
        let locate = |i: usize, j: usize| template.position(i, j).expect("entry on the curvature pattern");
        let prior_pos = q.iter_lower().map(|(r, c, _)| locate(r, c)).collect();
        let row_pos = rows
            .iter()
            .map(|row| {
                let mut out = Vec::with_capacity(row.len() * (row.len() + 1) / 2);
                for (a, &(i, wi)) in row.iter().enumerate() {
                    for &(j, wj) in &row[..=a] {
                        out.push((locate(i, j), wi * wj));
                    }
                }
                out
            })
            .collect();
        Ok(Self {
            template,
            prior_pos,
            row_pos,
        })
    }

    pub(crate) fn assemble(&self, q: &SparseSym, weights: &[f64]) -> SparseSym {
        let mut h = self.template.clone();
        let vals = h.values_mut();
        vals.iter_mut().for_each(|v| *v = 0.0);
        for (&p, &v) in self.prior_pos.iter().zip(q.values()) {
            vals[p] += v;
        }
        for (pairs, &w) in self.row_pos.iter().zip(weights) {
            if w != 0.0 {
                for &(p, c) in pairs {
                    vals[p] += w * c;
                }
            }
        }
        h
    }
}

/// Mode, curvature factor and conditioning at the mode.
#[derive(Debug, Clone)]
pub(crate) struct ModeFit {
    pub(crate) mode: Vec<f64>,
    pub(crate) factor: CholeskyFactor,
    pub(crate) conditioning: Option<Conditioning>,
    pub(crate) log_likelihood: f64,
    pub(crate) iterations: usize,
    pub(crate) residual: f64,
    pub(crate) initial_gradient: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn find_mode(
    problem: &LatentGaussianProblem,
    plan: &HessianPlan,
    constraints: &Constraints,
    cache: &AnalysisCache,
    start: Option<&[f64]>,
) -> Result<ModeFit> {
    let q = problem.prior_precision.entries();
    let start = start.or(problem.initial.as_deref()).unwrap_or(&problem.prior_mean);
    let mut x = constraints.project(start);
    let mut f = problem.log_joint(&x);
    if !f.is_finite() {
        x = constraints.project(&problem.prior_mean);
        f = problem.log_joint(&x);
        if !f.is_finite() {
            return Err(Error::Degenerate("objective is not finite at the prior mean".into()));
        }
    }
    let (g0, _) = problem.gradient_and_weights(&x);
    let initial_gradient = norm(&constraints.project(&g0));
    let tol = RESIDUAL_TOLERANCE * (1.0 + initial_gradient);

    let mut residual = f64::INFINITY;
    for it in 0..MAX_NEWTON_ITERATIONS {
        let (grad, weights) = problem.gradient_and_weights(&x);
        residual = norm(&constraints.project(&grad));
        let h = plan.assemble(q, &weights);
        let factor = cache.factor(&h)?;
        let conditioning = Conditioning::new(&factor, constraints)?;
        if residual <= tol {
            // One more Newton step from inside the tolerance, then the
            // curvature at the final point.
            let mut step = factor.solve(&grad)?;
            if let Some(c) = &conditioning {
                c.correct(&mut step, constraints);
            }
            let polished: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a + s).collect();
            let (factor, conditioning) = if problem.log_joint(&polished).is_finite() {
                x = polished;
                match problem.likelihood {
                    Likelihood::GaussianIdentity { .. } => (factor, conditioning),
                    Likelihood::PoissonLog => {
                        let (_, weights) = problem.gradient_and_weights(&x);
                        let factor = cache.factor(&plan.assemble(q, &weights))?;
                        let conditioning = Conditioning::new(&factor, constraints)?;
                        (factor, conditioning)
                    }
                }
            } else {
                (factor, conditioning)
            };
            return Ok(ModeFit {
                log_likelihood: problem.log_likelihood(&x),
                mode: x,
                factor,
                conditioning,
                iterations: it,
                residual,
                initial_gradient,
            });
        }
        let mut step = factor.solve(&grad)?;
        if let Some(c) = &conditioning {
            c.correct(&mut step, constraints);
        }
        let decrement: f64 = step.iter().zip(&grad).map(|(a, b)| a * b).sum();
        // Below rounding of the objective the full step is taken as is.
        if decrement <= 1e-10 * (1.0 + f.abs()) {
            for (xi, si) in x.iter_mut().zip(&step) {
                *xi += si;
            }
            f = problem.log_joint(&x);
            continue;
        }
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let cand: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a + scale * s).collect();
            let fc = problem.log_joint(&cand);
            if fc.is_finite() && fc >= f {
                x = cand;
                f = fc;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            return Err(Error::NoConvergence {
                iterations: it + 1,
                detail: format!("line search failed; gradient norm {residual:e}"),
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_NEWTON_ITERATIONS,
        detail: format!("gradient norm {residual:e}"),
    })
}

/// Gaussian approximation of the latent field at its conditional mode.
#[derive(Debug, Clone)]
pub struct GaussianApprox {
    pub mode: Vec<f64>,
    /// Factor of the curvature `Q + B' W B` at the mode (before conditioning).
    pub precision_factor: CholeskyFactor,
    pub marginal_sds: Vec<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    /// Norm of the projected gradient at the mode.
    pub residual: f64,
    /// Norm of the projected gradient at the starting point.
    pub initial_gradient: f64,
    selected: SelectedInverse,
    conditioning: Option<Conditioning>,
}

impl GaussianApprox {
    pub(crate) fn from_mode(fit: ModeFit) -> Self {
        let selected = fit.factor.selected_inverse();
        let mut variances = selected.diagonal();
        if let Some(c) = &fit.conditioning {
            for (i, v) in variances.iter_mut().enumerate() {
                *v -= c.reduction(&[(i, 1.0)]);
            }
        }
        let marginal_sds = variances.iter().map(|v| v.max(0.0).sqrt()).collect();
        Self {
            mode: fit.mode,
            precision_factor: fit.factor,
            marginal_sds,
            log_likelihood: fit.log_likelihood,
            iterations: fit.iterations,
            residual: fit.residual,
            initial_gradient: fit.initial_gradient,
            selected,
            conditioning: fit.conditioning,
        }
    }

    pub fn dim(&self) -> usize {
        self.mode.len()
    }

    /// Posterior variance of `sum_k w_k x_{i_k}`; `None` when a pair of
    /// indices falls outside the curvature pattern.
    pub fn linear_combination_variance(&self, terms: &[(usize, f64)]) -> Option<f64> {
        let mut v = 0.0;
        for &(i, wi) in terms {
            for &(j, wj) in terms {
                v += wi * wj * self.selected.get(i, j)?;
            }
        }
        if let Some(c) = &self.conditioning {
            v -= c.reduction(terms);
        }
        Some(v.max(0.0))
    }

    pub fn covariance(&self, i: usize, j: usize) -> Option<f64> {
        let mut v = self.selected.get(i, j)?;
        if let Some(c) = &self.conditioning {
            let both = c.reduction(&[(i, 1.0), (j, 1.0)]);
            let ii = c.reduction(&[(i, 1.0)]);
            let jj = c.reduction(&[(j, 1.0)]);
            v -= 0.5 * (both - ii - jj);
        }
        Some(v)
    }
}

/// Newton fit of the latent field with marginal standard deviations.
pub fn gaussian_approximation(problem: &LatentGaussianProblem) -> Result<GaussianApprox> {
    problem.validate()?;
    let constraints = Constraints::new(problem.prior_precision.constraints())?;
    let plan = HessianPlan::new(problem)?;
    let fit = find_mode(problem, &plan, &constraints, &AnalysisCache::new(), None)?;
    Ok(GaussianApprox::from_mode(fit))
}

//! Hyperparameter posterior under the Gaussian approximation and its
//! empirical-Bayes maximisation.

use std::sync::Mutex;

use super::latent::{find_mode, AnalysisCache, Conditioning, Constraints, GaussianApprox, HessianPlan, LatentGaussianProblem, ModeFit};
use super::nelder_mead::{minimize, NelderMeadOptions};
use crate::error::{invalid, Error, Result};

/// Maps log-scale hyperparameters `psi` to a latent Gaussian problem.
pub trait HyperModel: Sync {
    fn n_hyper(&self) -> usize;
    fn problem(&self, psi: &[f64]) -> Result<LatentGaussianProblem>;
    fn log_hyperprior(&self, psi: &[f64]) -> f64;
}

/// A [`HyperModel`] from a pair of closures.
pub struct FnHyperModel<B, P> {
    n_hyper: usize,
    build: B,
    prior: P,
}

impl<B, P> FnHyperModel<B, P>
where
    B: Fn(&[f64]) -> Result<LatentGaussianProblem> + Sync,
    P: Fn(&[f64]) -> f64 + Sync,
{
    pub fn new(n_hyper: usize, build: B, prior: P) -> Self {
        Self { n_hyper, build, prior }
    }
}

impl<B, P> HyperModel for FnHyperModel<B, P>
where
    B: Fn(&[f64]) -> Result<LatentGaussianProblem> + Sync,
    P: Fn(&[f64]) -> f64 + Sync,
{
    fn n_hyper(&self) -> usize {
        self.n_hyper
    }

    fn problem(&self, psi: &[f64]) -> Result<LatentGaussianProblem> {
        (self.build)(psi)
    }

    fn log_hyperprior(&self, psi: &[f64]) -> f64 {
        (self.prior)(psi)
    }
}

/// Log-density of `theta = log(tau)` when `tau ~ Gamma(shape, rate)`,
/// Jacobian included.
pub fn log_gamma_hyperprior(theta: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - statrs::function::gamma::ln_gamma(shape) + shape * theta - rate * theta.exp()
}

/// Evaluates the hyperparameter objective, reusing symbolic analyses and
/// warm-starting Newton from the best mode seen so far.
pub struct HyperEvaluator<'m, M: ?Sized> {
    model: &'m M,
    cache: AnalysisCache,
    warm: Mutex<Option<(f64, Vec<f64>)>>,
}

impl<'m, M: HyperModel + ?Sized> HyperEvaluator<'m, M> {
    pub fn new(model: &'m M) -> Self {
        Self {
            model,
            cache: AnalysisCache::new(),
            warm: Mutex::new(None),
        }
    }

    pub fn log_posterior(&self, psi: &[f64]) -> Result<f64> {
        self.evaluate(psi).map(|(v, _)| v)
    }

    fn evaluate(&self, psi: &[f64]) -> Result<(f64, ModeFit)> {
        if psi.len() != self.model.n_hyper() {
            return Err(invalid(format!(
                "{} hyperparameters given, model has {}",
                psi.len(),
                self.model.n_hyper()
            )));
        }
        if psi.iter().any(|p| !p.is_finite()) {
            return Err(invalid("hyperparameters must be finite"));
        }
        let problem = self.model.problem(psi)?;
        problem.validate()?;
        let constraints = Constraints::new(problem.prior_precision.constraints())?;
        let plan = HessianPlan::new(&problem)?;
        let start = self
            .warm
            .lock()
            .expect("warm start poisoned")
            .as_ref()
            .filter(|(_, m)| m.len() == problem.dim())
            .map(|(_, m)| m.clone());
        let fit = match find_mode(&problem, &plan, &constraints, &self.cache, start.as_deref()) {
            Ok(fit) => fit,
            Err(e) if start.is_some() && e.is_numerical() => {
                find_mode(&problem, &plan, &constraints, &self.cache, None)?
            }
            Err(e) => return Err(e),
        };

        let q = problem.prior_precision.entries();
        let prior_factor = self.cache.factor(q)?;
        let prior_conditioning = Conditioning::new(&prior_factor, &constraints)?;
        let dev: Vec<f64> = fit.mode.iter().zip(&problem.prior_mean).map(|(a, b)| a - b).collect();

        let mut value = fit.log_likelihood - 0.5 * q.quad_form(&dev) + 0.5 * prior_factor.log_det();
        if let Some(c) = &prior_conditioning {
            let am = constraints.apply(&problem.prior_mean);
            value += 0.5 * c.log_det() + 0.5 * c.quad_inverse(&am);
        }
        value -= 0.5 * fit.factor.log_det();
        if let Some(c) = &fit.conditioning {
            value -= 0.5 * c.log_det();
        }
        value += self.model.log_hyperprior(psi);
        if !value.is_finite() {
            return Err(Error::Degenerate(format!("hyperparameter objective is {value} at {psi:?}")));
        }

        let mut warm = self.warm.lock().expect("warm start poisoned");
        if warm.as_ref().is_none_or(|(best, _)| value > *best) {
            *warm = Some((value, fit.mode.clone()));
        }
        Ok((value, fit))
    }
}

/// `log p(y, x*, psi) - log p_G(x* | psi, y)` at the conditional mode `x*`.
pub fn log_hyper_posterior<M: HyperModel + ?Sized>(model: &M, psi: &[f64]) -> Result<f64> {
    HyperEvaluator::new(model).log_posterior(psi)
}

#[derive(Debug, Clone)]
pub struct EbFit {
    pub psi_mode: Vec<f64>,
    pub approx: GaussianApprox,
    pub log_posterior: f64,
    pub evaluations: usize,
}

pub fn eb_optimize<M: HyperModel + ?Sized>(model: &M, init_psi: &[f64]) -> Result<EbFit> {
    eb_optimize_with(model, init_psi, &NelderMeadOptions::default())
}

/// Maximises [`log_hyper_posterior`] by Nelder–Mead and returns the Gaussian
/// approximation at the maximiser.
pub fn eb_optimize_with<M: HyperModel + ?Sized>(
    model: &M,
    init_psi: &[f64],
    opts: &NelderMeadOptions,
) -> Result<EbFit> {
    let evaluator = HyperEvaluator::new(model);
    evaluator.evaluate(init_psi)?;
    let fatal: Mutex<Option<Error>> = Mutex::new(None);
    let found = minimize(
        |psi| match evaluator.evaluate(psi) {
            Ok((v, _)) => -v,
            Err(e) => {
                if !e.is_numerical() {
                    fatal.lock().expect("error slot poisoned").get_or_insert(e);
                }
                f64::INFINITY
            }
        },
        init_psi,
        opts,
    );
    if let Some(e) = fatal.into_inner().expect("error slot poisoned") {
        return Err(e);
    }
    let found = found?;
    let (log_posterior, fit) = evaluator.evaluate(&found.point)?;
    Ok(EbFit {
        psi_mode: found.point,
        approx: GaussianApprox::from_mode(fit),
        log_posterior,
        evaluations: found.evaluations + 2,
    })
}

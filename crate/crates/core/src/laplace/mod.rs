//! Laplace approximations: the scalar normal approximation of a density and
//! the Gaussian approximation / empirical-Bayes treatment of latent Gaussian
//! models.

pub mod hyper;
pub mod latent;
pub mod nelder_mead;
pub mod scalar;

pub use hyper::{
    eb_optimize, eb_optimize_with, log_gamma_hyperprior, log_hyper_posterior, EbFit, FnHyperModel, HyperEvaluator,
    HyperModel,
};
pub use latent::{gaussian_approximation, AnalysisCache, GaussianApprox, LatentGaussianProblem, Likelihood, PredictorRow};
pub use nelder_mead::{minimize, Minimum, NelderMeadOptions};
pub use scalar::{gamma_laplace, laplace_interval_integral, laplace_interval_integral_from, scalar_laplace, LaplaceFit, ScalarTarget};

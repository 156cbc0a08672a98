//! Spatio-temporal latent Gaussian models for intersection traffic counts.
//!
//! The crate covers the whole pipeline: GMRF prior construction
//! ([`gmrf`]), Gaussian approximation with empirical-Bayes hyperparameters
//! ([`laplace`]), the BYM + seasonal + iid model with a Type I interaction
//! ([`model`]), detector-export cleaning ([`ingest`]), MPE scoring and the
//! prior-mean baseline ([`evaluate`]), and a generator for synthetic networks
//! and counts ([`sim`]).

pub mod error;
pub mod gmrf;
pub mod evaluate;
pub mod ingest;
pub mod laplace;
pub mod model;
pub mod sim;

pub use error::{Error, Result};

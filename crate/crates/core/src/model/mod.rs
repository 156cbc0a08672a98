//! The spatio-temporal count model: BYM site effects, seasonal and iid time
//! effects and an iid site-time interaction, fitted by Gaussian
//! approximation with empirical-Bayes precisions.

pub mod assemble;
pub mod fit;
pub mod layout;
pub mod spec;

pub use assemble::{assemble, Cell, ObservationKey, StModel, TimeAxis};
pub use fit::{default_search, fit, fit_model, predict, FitResult, FittedRow, FittedTable};
pub use layout::{Block, BlockKind, LatentLayout};
pub use spec::{Config, Family, HyperPrior, Interaction, ModelSpec};

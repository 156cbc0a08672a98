//! Sparse structure/precision matrices of the GMRF priors and their
//! factorization.

pub mod cholesky;
pub mod sample;
pub mod sparse;
pub mod structure;

pub use cholesky::{cholesky, cholesky_sparse, solve, CholeskyFactor, Ordering, SelectedInverse, SymbolicCholesky};
pub use sample::GmrfSampler;
pub use sparse::SparseSym;
pub use structure::{
    build_icar_structure, build_iid_structure, build_rw_structure, build_seasonal_structure,
    eigenvalues, kronecker, numeric_rank, PrecisionStructure, SiteGraph,
};

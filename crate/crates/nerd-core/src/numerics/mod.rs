//! Deterministic, dependency-free numerical primitives.
//!
//! Everything downstream (diffusion, training, fitting, analysis) is built on
//! this module. Determinism contracts that the rest of the crate relies on:
//!
//! * [`RngStream`] — same seed ⇒ bit-identical draws; substreams are pure
//!   functions of (parent seed, index, tag), independent of how much the
//!   parent has been consumed.
//! * all tie-breaks (nearest centroid, merge pair, eigenvector sign, restart
//!   winner) resolve to the lowest index, so clustering and embeddings are
//!   reproducible bit-for-bit.

mod agglomerative;
mod kmeans;
mod mat;
mod mds;
mod ols;
mod pca;
mod rng;
mod special;
mod stats;

pub use agglomerative::{agglomerative_cluster, agglomerative_dendrogram, Dendrogram, Linkage, Merge};
pub use kmeans::{kmeans, KmeansResult};
pub use mat::{sym_eigen, Mat};
pub use mds::classical_mds;
pub use ols::{ols_fit, ols_fit_named, LinearFit};
pub use pca::{pca, PcaResult};
pub use rng::RngStream;
pub use special::{regularized_incomplete_beta, student_t_sf};
pub use stats::{gaussian_logpdf, logistic, mean, paired_t_test, pearson, sample_variance};

pub(crate) use stats::LN_2PI;

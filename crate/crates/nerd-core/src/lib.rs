//! Core algorithms for a desk-scale simulated decoded-neurofeedback lab.
//!
//! The crate is organized as a dependency-free computational core:
//!
//! * [`numerics`] — deterministic primitives: a splittable RNG, Gaussian
//!   densities, correlation and t statistics, OLS with inference, PCA,
//!   classical MDS, k-means and agglomerative clustering.
//! * [`diffusion`] — forward noising process, noise schedules, and stochastic
//!   denoising episodes.
//! * [`policy`] — the Gaussian policy network (one tanh hidden layer, mean
//!   and softplus-sigma heads) with hand-derived reverse-mode gradients and a
//!   finite-difference checking harness.
//! * [`envsim`] — linear decoder rewards and synthetic subject generation.
//! * [`training`] — the REINFORCE-with-baseline trainer with a diffusion
//!   anchor term, and the deterministic backprop-through-the-chain control
//!   trainer.
//! * [`fitting`] — per-epoch negative-log-likelihood fitting of trained
//!   models against a subject's achieved states and best-epoch selection.
//! * [`analysis`] — reward trajectories, representational dissimilarity
//!   matrices, MDS embeddings, noise-trajectory extraction, voxel/subject
//!   clustering, two-stage PCA, and the reward regression models.
//!
//! `no_std` + `alloc`: all floating-point transcendentals go through `libm`,
//! so results are bit-identical across platforms. File formats, plotting, and
//! the CLI live in the companion `nerd-lab` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod analysis;
pub mod diffusion;
pub mod envsim;
pub mod error;
pub mod fitting;
pub mod numerics;
pub mod policy;
pub mod training;

pub use error::{Error, Result};

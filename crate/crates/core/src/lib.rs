//! Measurement of class-manifold segregation dynamics in small fully connected
//! classifiers, detection of the inversion epoch, and analysis of the
//! "straggler" examples still misclassified there.
//!
//! The modules mirror the pipeline:
//!
//! - [`dataio`]: parse MNIST-family IDX files and CIFAR-10 batches, standardize,
//!   binarize by parity, derive subsampled / relabelled / noisy / pruned sets.
//! - [`network`]: MLP forward pass, summed cross-entropy, exact gradients.
//! - [`optim`]: GD, momentum, weight decay, minibatch SGD and Adam.
//! - [`geometry`]: unit-sphere class manifolds, gyration radii, centroid distance.
//! - [`dynamics`]: instrumented training, trajectory logs, inversion detection.
//! - [`stragglers`]: straggler sets, conservation statistics, pruning experiments.
//! - [`scaling`]: finite-size-scaling fit of the straggler fraction.
//! - [`experiment`]: config-driven experiment runner and summaries.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataio;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod io;
pub mod network;
pub mod optim;
pub mod scaling;
pub mod stragglers;

pub use error::{Error, Result};

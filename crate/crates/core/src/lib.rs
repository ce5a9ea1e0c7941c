//! Expected adversarial robustness for graph convolutional networks.
//!
//! The crate trains small GCN and GIN node classifiers, optionally hardens
//! them by projecting every weight matrix onto the orthonormal set with
//! Björck iterations (GCORN), computes closed-form upper bounds on the
//! probability that a bounded perturbation moves the output by more than a
//! threshold, runs feature and structure attacks, and estimates that
//! probability directly by stratified Monte-Carlo sampling of the
//! perturbation ball.
//!
//! Module map:
//! - [`graph`]: graphs, the self-loop normalized adjacency, walk sums,
//!   dataset IO and a stochastic block model generator.
//! - [`nn`]: dense matrices, GCN/GIN forward and backward passes, Adam
//!   training and model serialization.
//! - [`ortho`]: spectral-norm estimation and Björck projection.
//! - [`bounds`]: closed-form robustness bounds and norm conversions.
//! - [`attacks`]: Gaussian noise, PGD and random edge-flip attacks.
//! - [`estimator`]: ball sampling and the vulnerability estimator.
//! - [`cli`]: configuration handling and the `gcorn` command pipelines.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attacks;
pub mod bounds;
pub mod cli;
pub mod error;
pub mod estimator;
pub mod graph;
pub mod nn;
pub mod ortho;
pub mod rng;

pub use error::{Error, Result};
pub use graph::{Dataset, FeatureMatrix, Graph, NormalizedAdjacency, PreparedGraph, WalkSums};
pub use nn::{Activation, DenseMatrix, Model, ModelKind, TrainConfig};
pub use ortho::OrthoConfig;

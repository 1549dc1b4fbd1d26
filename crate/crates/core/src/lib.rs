//! Sparse signal recovery: classical sparse Bayesian learning solvers, the
//! L-SBL unrolled network with layerwise training, greedy and shrinkage
//! baselines, synthetic and MIMO-radar data generation, and the evaluation
//! metrics used to compare them.
//!
//! The crate is organized around one shared computation, the MAP stage of
//! [`bayes::map_estimate`]: every classical solver iterates it against a
//! cheap variance update, and every network layer runs it after a trained
//! dense stage. Training differentiates through the whole stack, matrix
//! solves included, on the tape in [`train::tape`].
//!
//! Everything is deterministic given a seed: the [`rng::Rng`] streams are
//! splittable, dataset generation assigns one stream per sample, and
//! training reduces batch gradients in a fixed order, so parallel and serial
//! runs agree bit for bit.

pub mod baselines;
pub mod bayes;
pub mod data;
pub mod datagen;
pub mod lsbl;
pub mod mat;
pub mod metrics;
pub mod radar;
pub mod rng;
pub mod train;

pub use data::{Dataset, PosteriorEstimate, Sample};
pub use mat::Mat;
pub use rng::Rng;

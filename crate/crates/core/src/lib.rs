//! Operator learning for neutron flux in a concrete maze.
//!
//! The crate generates its own training data with a one-group Monte Carlo
//! transport simulator, builds DeepONet training triples from randomized
//! Gaussian sources, trains a branch/trunk DeepONet plus fully connected and
//! convolutional baselines on a small dense-network engine, and benchmarks
//! them on accuracy (R², RMSE, MAE, RMSE/MAE) and inference speed.
//!
//! | module | role |
//! |--------|------|
//! | [`source`] | Gaussian source functions and sensor discretization |
//! | [`transport`] | maze geometry, Monte Carlo transport, track-length tally |
//! | [`dataset`] | corpus generation, function-level split, Set subsampling, file format |
//! | [`nn`] | dense layers, 1D convolution, reverse-mode gradients, Adam |
//! | [`models`] | DeepONet, FCN and CNN baselines, training, checkpoints |
//! | [`bench`] | metrics, experiment orchestration, reports |
//! | [`cli`] | subcommand dispatch used by the `deeponet-maze` binary |
//!
//! Runnable walkthroughs for each capability live in `examples/`.

pub mod bench;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod io;
pub mod models;
pub mod nn;
pub mod rng;
pub mod source;
pub mod transport;

pub use error::{Error, FormatError, Result};

//! Point-cloud completion network: a permutation-invariant multi-resolution
//! encoder and a fully-connected + folding decoder, with its training loop.

pub mod model;
pub mod train;

pub use model::{GprNet, GprNetConfig};
pub use train::{evaluate, noise_sweep, split_dataset, train_gprnet, EvalReport, TrainConfig};

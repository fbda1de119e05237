//! Minimal reverse-mode autodiff: tensors, tape, layers, Adam, checkpoints.

pub mod adam;
pub mod array;
pub mod checkpoint;
pub(crate) mod conv;
pub mod gradcheck;
pub mod nn;
pub mod tape;

pub use adam::AdamState;
pub use array::Array;
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use nn::{init_conv, init_linear, linear, shared_mlp, BoundParams, ParamSet};
pub use tape::{Tape, TensorId};

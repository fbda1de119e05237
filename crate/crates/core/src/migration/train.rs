//! MigrationNet training loop: per-pixel binary cross-entropy under Adam.

use std::path::PathBuf;

use rand::seq::SliceRandom;

use super::net::{bind_frozen, pixel_accuracy, MigrationNet};
use crate::autodiff::{save_checkpoint, AdamState, Array};
use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::rng::SeedSplitter;

#[derive(Debug, Clone)]
pub struct MigrationTrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Reshuffle the sample order every epoch.
    pub shuffle: bool,
    /// Overwritten at the end of every epoch; on a numerical failure the
    /// file keeps the last completed epoch.
    pub checkpoint_path: Option<PathBuf>,
    /// Stop early once mean pixel accuracy over the dataset reaches this.
    pub target_accuracy: Option<f64>,
}

impl MigrationTrainConfig {
    pub fn new(epochs: usize, learning_rate: f64, seed: u64) -> Self {
        MigrationTrainConfig {
            epochs,
            learning_rate,
            seed,
            shuffle: true,
            checkpoint_path: None,
            target_accuracy: None,
        }
    }
}

/// Train in place on `(input [1,H,W] in [0,1], mask [1,H,W] of 0/1)` pairs.
/// Returns the per-epoch mean loss. A non-finite loss or gradient aborts
/// and rolls the model back to the end of the last completed epoch.
pub fn train_migrationnet(
    model: &mut MigrationNet,
    dataset: &[(Array, Array)],
    cfg: &MigrationTrainConfig,
) -> Result<Vec<f64>> {
    if dataset.is_empty() {
        return Err(Error::invalid("training dataset is empty"));
    }
    for (i, (x, y)) in dataset.iter().enumerate() {
        if x.shape() != y.shape() {
            return Err(Error::ShapeMismatch {
                expected: x.shape().to_vec(),
                got: y.shape().to_vec(),
                context: "training pair input vs mask",
            });
        }
        if y.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::invalid(format!("mask {i} has values outside {{0,1}}")));
        }
    }
    let splitter = SeedSplitter::new(cfg.seed);
    let mut adam = AdamState::new(cfg.learning_rate);
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut last_good = model.params.clone();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut splitter.rng(epoch as u64));
        }
        let mut epoch_loss = 0.0;
        for &i in &order {
            let (x, y) = &dataset[i];
            let mut step = || -> Result<f64> {
                let mut tape = Tape::new();
                let bound = model.params.bind(&mut tape);
                let input = tape.constant(x.clone());
                let built = model.build(&mut tape, &bound, input)?;
                let loss = tape.bce_loss(built.output, y)?;
                let loss_val = tape.value(loss).scalar_value();
                if !loss_val.is_finite() {
                    return Err(Error::Numerical(format!(
                        "non-finite loss at epoch {epoch}, sample {i}"
                    )));
                }
                tape.backward(loss)?;
                let grads = bound.grads(&tape, &model.params);
                adam.step(&mut model.params, &grads)?;
                Ok(loss_val)
            };
            match step() {
                Ok(l) => epoch_loss += l,
                Err(e) => {
                    model.params = last_good.clone();
                    if let Some(path) = &cfg.checkpoint_path {
                        save_checkpoint(&model.params, path)?;
                    }
                    return Err(e);
                }
            }
        }
        curve.push(epoch_loss / dataset.len() as f64);
        last_good = model.params.clone();
        if let Some(path) = &cfg.checkpoint_path {
            save_checkpoint(&model.params, path)?;
        }
        if let Some(target) = cfg.target_accuracy {
            if mean_accuracy(model, dataset)? >= target {
                break;
            }
        }
    }
    Ok(curve)
}

/// Mean pixel accuracy of the model over a dataset.
pub fn mean_accuracy(model: &MigrationNet, dataset: &[(Array, Array)]) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::invalid("empty dataset"));
    }
    let mut acc = 0.0;
    for (x, y) in dataset {
        let mut tape = Tape::new();
        let bound = bind_frozen(&mut tape, &model.params);
        let input = tape.constant(x.clone());
        let built = model.build(&mut tape, &bound, input)?;
        acc += pixel_accuracy(tape.value(built.output), y)?;
    }
    Ok(acc / dataset.len() as f64)
}

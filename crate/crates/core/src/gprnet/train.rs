//! GPRNet training under the Chamfer loss, evaluation, and noise sweeps.

use std::io::Write;
use std::path::PathBuf;

use rand::seq::SliceRandom;

use super::model::GprNet;
use crate::autodiff::{save_checkpoint, AdamState, Array, Tape};
use crate::cloud::{chamfer_distance, chamfer_loss, l1_nn_distance, ChamferVariant, PointCloud};
use crate::error::{Error, Result};
use crate::rng::SeedSplitter;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Validation / test split sizes; the remainder trains.
    pub val_size: usize,
    pub test_size: usize,
    /// Best-validation parameters, overwritten whenever validation improves.
    pub checkpoint_path: Option<PathBuf>,
    /// Per-epoch metrics log: `step,train_cd,val_cd,lr`.
    pub metrics_csv: Option<PathBuf>,
    /// Stop early once mean train CD falls to this fraction of the initial.
    pub target_fraction: Option<f64>,
}

impl TrainConfig {
    pub fn new(epochs: usize, seed: u64) -> Self {
        TrainConfig {
            epochs,
            batch_size: 16,
            learning_rate: 5e-5,
            seed,
            val_size: 100,
            test_size: 150,
            checkpoint_path: None,
            metrics_csv: None,
            target_fraction: None,
        }
    }
}

/// One (sparse input, dense ground truth) training pair.
pub type Pair = (PointCloud, PointCloud);

/// Deterministic shuffle-then-partition split: validation first, then test,
/// remainder train.
pub fn split_dataset(pairs: &[Pair], cfg: &TrainConfig) -> Result<(Vec<Pair>, Vec<Pair>, Vec<Pair>)> {
    if cfg.val_size + cfg.test_size >= pairs.len() {
        return Err(Error::invalid(format!(
            "split sizes {}+{} leave no training data out of {}",
            cfg.val_size,
            cfg.test_size,
            pairs.len()
        )));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut SeedSplitter::new(cfg.seed).rng(0xD5));
    let pick = |r: std::ops::Range<usize>| r.map(|i| pairs[order[i]].clone()).collect::<Vec<_>>();
    let val = pick(0..cfg.val_size);
    let test = pick(cfg.val_size..cfg.val_size + cfg.test_size);
    let train = pick(cfg.val_size + cfg.test_size..pairs.len());
    Ok((train, val, test))
}

/// One logged training step: global step index, mean train CD over the
/// epoch, validation CD, effective learning rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub step: u64,
    pub train_cd: f64,
    /// `None` when no validation set was supplied.
    pub val_cd: Option<f64>,
    pub lr: f64,
}

/// Train in place. `train`/`val` hold (sparse, dense) pairs; sparse clouds
/// must already be resampled to the model's input size. Returns one log row
/// per epoch. A non-finite loss aborts, rolling back to the last completed
/// epoch (and that is what the checkpoint file keeps).
pub fn train_gprnet(
    model: &mut GprNet,
    train: &[Pair],
    val: &[Pair],
    cfg: &TrainConfig,
) -> Result<Vec<LogRow>> {
    if train.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    for (s, d) in train.iter().chain(val) {
        if s.len() != model.config.input_points {
            return Err(Error::invalid(format!(
                "sparse cloud has {} points, model expects {}; resample first",
                s.len(),
                model.config.input_points
            )));
        }
        if d.is_empty() {
            return Err(Error::invalid("dense ground truth is empty"));
        }
    }
    let splitter = SeedSplitter::new(cfg.seed);
    let mut adam = AdamState::new(cfg.learning_rate);
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut last_good = model.params.clone();
    let mut best_val = f64::INFINITY;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let initial_cd = mean_cd(model, train)?;
    let mut step: u64 = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut splitter.rng(1 + epoch as u64));
        let mut epoch_loss = 0.0;
        let mut epoch_batches = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let mut run = || -> Result<f64> {
                let mut tape = Tape::new();
                let bound = model.params.bind(&mut tape);
                let mut losses = Vec::with_capacity(batch.len());
                for &i in batch {
                    let (sparse, dense) = &train[i];
                    let x = tape.constant(Array::new(vec![sparse.len(), 3], sparse.to_flat())?);
                    let gt = Array::new(vec![dense.len(), 3], dense.to_flat())?;
                    let v = model.encode_on_tape(&mut tape, &bound, x)?;
                    let out = model.decode_on_tape(&mut tape, &bound, v)?;
                    losses.push(chamfer_loss(&mut tape, out, &gt, ChamferVariant::Squared)?);
                }
                let mut total = losses[0];
                for &l in &losses[1..] {
                    total = tape.add(total, l)?;
                }
                let loss = tape.scale(total, 1.0 / batch.len() as f64);
                let val = tape.value(loss).scalar_value();
                if !val.is_finite() {
                    return Err(Error::Numerical(format!(
                        "non-finite loss at epoch {epoch}, step {step}"
                    )));
                }
                tape.backward(loss)?;
                let grads = bound.grads(&tape, &model.params);
                adam.step(&mut model.params, &grads)?;
                Ok(val)
            };
            match run() {
                Ok(l) => {
                    epoch_loss += l;
                    epoch_batches += 1;
                    step += 1;
                }
                Err(e) => {
                    model.params = last_good.clone();
                    return Err(e);
                }
            }
        }
        let train_cd = epoch_loss / epoch_batches as f64;
        let val_cd = if val.is_empty() {
            None
        } else {
            Some(mean_cd(model, val)?)
        };
        log.push(LogRow {
            step,
            train_cd,
            val_cd,
            lr: adam.effective_lr(),
        });
        last_good = model.params.clone();
        if let Some(path) = &cfg.checkpoint_path {
            // keep the best-validation parameters (last epoch if no val set)
            if val_cd.map_or(true, |v| v <= best_val) {
                save_checkpoint(&model.params, path)?;
            }
        }
        if let Some(v) = val_cd {
            best_val = best_val.min(v);
        }
        if let Some(frac) = cfg.target_fraction {
            if mean_cd(model, train)? <= frac * initial_cd {
                break;
            }
        }
    }
    if let Some(path) = &cfg.metrics_csv {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "step,train_cd,val_cd,lr")?;
        for row in &log {
            let val = row.val_cd.map(|v| v.to_string()).unwrap_or_default();
            writeln!(f, "{},{},{},{}", row.step, row.train_cd, val, row.lr)?;
        }
    }
    Ok(log)
}

/// Mean Chamfer distance of completions over a pair set.
pub fn mean_cd(model: &GprNet, pairs: &[Pair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::invalid("empty pair set"));
    }
    let mut total = 0.0;
    for (sparse, dense) in pairs {
        let out = model.complete(sparse)?;
        total += chamfer_distance(&out, dense, ChamferVariant::Squared)?.0;
    }
    Ok(total / pairs.len() as f64)
}

/// Evaluation report in the conventional scales.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Mean Chamfer distance × 10³.
    pub mean_cd_x1e3: f64,
    /// Mean bidirectional L1 NN distance × 100.
    pub mean_l1_x100: f64,
    /// Per-sample (CD × 10³, L1 × 100).
    pub per_sample: Vec<(f64, f64)>,
}

pub fn evaluate(model: &GprNet, test: &[Pair]) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    let mut per_sample = Vec::with_capacity(test.len());
    for (sparse, dense) in test {
        let out = model.complete(sparse)?;
        let cd = chamfer_distance(&out, dense, ChamferVariant::Squared)?.0;
        let l1 = l1_nn_distance(&out, dense)?;
        per_sample.push((cd * 1e3, l1 * 100.0));
    }
    let n = per_sample.len() as f64;
    Ok(EvalReport {
        mean_cd_x1e3: per_sample.iter().map(|p| p.0).sum::<f64>() / n,
        mean_l1_x100: per_sample.iter().map(|p| p.1).sum::<f64>() / n,
        per_sample,
    })
}

/// Evaluate with Gaussian noise added to every sparse input, once per noise
/// level. Returns `(level, mean CD × 10³)` rows.
pub fn noise_sweep(
    model: &GprNet,
    test: &[Pair],
    levels: &[f64],
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    if test.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    let splitter = SeedSplitter::new(seed);
    let mut rows = Vec::with_capacity(levels.len());
    for (li, &sigma) in levels.iter().enumerate() {
        let noisy: Vec<Pair> = test
            .iter()
            .enumerate()
            .map(|(i, (s, d))| {
                Ok((
                    s.with_noise(sigma, splitter.derive((li * test.len() + i) as u64))?,
                    d.clone(),
                ))
            })
            .collect::<Result<_>>()?;
        let report = evaluate(model, &noisy)?;
        rows.push((sigma, report.mean_cd_x1e3));
    }
    Ok(rows)
}

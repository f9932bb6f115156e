//! Mini-batch training with AdamW, warmup + cosine decay, augmentation and
//! early stopping on validation macro-F1.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::Label;
use crate::metrics;
use crate::model::Trainable;
use crate::numerics::{adamw_step, cosine_lr, LrSchedule, OptimizerState};
use crate::signal::{augment, AugmentSpec, Window};
use crate::seed;

/// Windows per gradient chunk. Chunks are summed in a fixed order, so the
/// result does not depend on how many threads evaluate them.
const GRAD_CHUNK: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub weight_decay: f64,
    pub patience: usize,
    pub warmup_frac: f64,
    pub augment: AugmentSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 64,
            lr_max: 1e-4,
            lr_min: 0.0,
            weight_decay: 1e-4,
            patience: 20,
            warmup_frac: 0.05,
            augment: AugmentSpec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, window_len: usize) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("training epochs and batch_size must be positive".into()));
        }
        if !(self.lr_max >= 0.0 && self.lr_min >= 0.0 && self.lr_min <= self.lr_max) {
            return Err(Error::Config(format!(
                "learning rates must satisfy 0 <= lr_min ({}) <= lr_max ({})",
                self.lr_min, self.lr_max
            )));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight_decay must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.warmup_frac) {
            return Err(Error::Config("warmup_frac must be in [0, 1)".into()));
        }
        self.augment.validate(window_len)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_f1: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_f1: f64,
    pub best_val_loss: f64,
    pub patience: usize,
    pub stopped_early: bool,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<M> {
    /// Parameters from the best validation epoch.
    pub model: M,
    pub log: TrainingLog,
    /// Optimizer state after the last completed epoch.
    pub optimizer: OptimizerState,
}

/// Visiting order of `n` training windows in `epoch`.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seed::rng(seed::derive_indexed(seed, "shuffle", &[epoch as u64]));
    order.shuffle(&mut rng);
    order
}

fn class_of(w: &Window, classes: usize) -> Result<usize> {
    match w.label {
        Some(Label::Known(c)) if c < classes => Ok(c),
        Some(Label::Known(c)) => Err(Error::Label { label: c, classes }),
        _ => Err(Error::Config(format!("window {} has no known-class label", w.id))),
    }
}

/// Argmax predictions over a window set, in input order.
pub fn predict<M: Trainable>(model: &M, windows: &[Window]) -> Result<Vec<usize>> {
    windows
        .par_iter()
        .map(|w| {
            let logits = model.logits(&w.values)?;
            Ok(crate::attack::argmax(&logits))
        })
        .collect()
}

/// Argmax predictions and mean cross-entropy against `targets`.
fn evaluate<M: Trainable>(model: &M, windows: &[Window], targets: &[usize]) -> Result<(Vec<usize>, f64)> {
    let per: Vec<(usize, f64)> = windows
        .par_iter()
        .zip(targets)
        .map(|(w, &t)| {
            let logits = model.logits(&w.values)?;
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
            Ok((crate::attack::argmax(&logits), lse - logits[t]))
        })
        .collect::<Result<_>>()?;
    let loss = per.iter().map(|p| p.1).sum::<f64>() / per.len() as f64;
    Ok((per.into_iter().map(|p| p.0).collect(), loss))
}

/// Trains `model` on `train` and early-stops on `val` macro-F1.
///
/// Flat windows are excluded from the training set.
pub fn train<M: Trainable>(
    model: M,
    train: &[Window],
    val: &[Window],
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome<M>> {
    config.validate(model.window_len())?;
    let classes = model.num_classes();
    let train: Vec<&Window> = train.iter().filter(|w| !w.flat).collect();
    if train.is_empty() || val.is_empty() {
        return Err(Error::Config("training and validation splits must be non-empty".into()));
    }
    let targets: Vec<usize> = train.iter().map(|w| class_of(w, classes)).collect::<Result<_>>()?;
    let val_targets: Vec<usize> = val.iter().map(|w| class_of(w, classes)).collect::<Result<_>>()?;
    let val_truth: Vec<Label> = val_targets.iter().map(|c| Label::Known(*c)).collect();

    let batches_per_epoch = train.len().div_ceil(config.batch_size);
    let schedule = LrSchedule::with_warmup_fraction(config.epochs * batches_per_epoch, config.warmup_frac)?;
    let mut model = model;
    let mut state = OptimizerState::new(&model.parameters(), config.lr_max, config.lr_min, config.weight_decay);
    let mut best = model.clone();
    let mut log = TrainingLog {
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_f1: f64::NEG_INFINITY,
        best_val_loss: f64::INFINITY,
        patience: config.patience,
        stopped_early: false,
    };
    let mut since_best = 0;
    let mut step = 0usize;

    for epoch in 0..config.epochs {
        let order = epoch_order(train.len(), seed, epoch);
        let mut loss_sum = 0.0;
        let mut lr = 0.0;
        for batch in order.chunks(config.batch_size) {
            let chunks: Vec<Result<(f64, Vec<Vec<f64>>)>> = batch
                .par_chunks(GRAD_CHUNK)
                .map(|chunk| {
                    let mut acc: Option<(f64, Vec<Vec<f64>>)> = None;
                    for &i in chunk {
                        let idx = [epoch as u64, i as u64];
                        let aug_idx = [config.augment.seed, epoch as u64, i as u64];
                        let mut aug_rng = seed::rng(seed::derive_indexed(seed, "augment", &aug_idx));
                        let w = augment(train[i], &config.augment, &mut aug_rng);
                        let depth_seed = seed::derive_indexed(seed, "depth", &idx);
                        let (l, g) = model.loss_and_grads(&w.values, targets[i], depth_seed)?;
                        match acc.as_mut() {
                            None => acc = Some((l, g)),
                            Some((al, ag)) => {
                                *al += l;
                                for (a, b) in ag.iter_mut().zip(&g) {
                                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                                }
                            }
                        }
                    }
                    Ok(acc.expect("chunks are non-empty"))
                })
                .collect();
            let mut total: Option<(f64, Vec<Vec<f64>>)> = None;
            for c in chunks {
                let (l, g) = c?;
                match total.as_mut() {
                    None => total = Some((l, g)),
                    Some((tl, tg)) => {
                        *tl += l;
                        for (a, b) in tg.iter_mut().zip(&g) {
                            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                        }
                    }
                }
            }
            let (batch_loss, mut grads) = total.expect("batch is non-empty");
            let inv = 1.0 / batch.len() as f64;
            grads.iter_mut().flatten().for_each(|g| *g *= inv);
            loss_sum += batch_loss;
            lr = cosine_lr(step, &schedule, config.lr_max, config.lr_min)?;
            let mut params = model.parameters_mut();
            adamw_step(&mut params, &grads, &mut state, lr)?;
            step += 1;
        }

        let (preds, val_loss) = evaluate(&model, val, &val_targets)?;
        let preds: Vec<Label> = preds.into_iter().map(Label::Known).collect();
        let val_f1 = metrics::sample_metrics(&preds, &val_truth)?.f1;
        let train_loss = loss_sum / train.len() as f64;
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_f1,
            val_loss,
            lr,
        });
        log::debug!("epoch {epoch}: loss {train_loss:.5} val_f1 {val_f1:.4} val_loss {val_loss:.5} lr {lr:.3e}");
        // F1 saturates on small validation sets; equal F1 with lower
        // validation loss still counts as progress.
        let improved = val_f1 > log.best_val_f1 || (val_f1 == log.best_val_f1 && val_loss < log.best_val_loss);
        if improved {
            log.best_val_f1 = val_f1;
            log.best_val_loss = val_loss;
            log.best_epoch = epoch;
            best = model.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                log.stopped_early = true;
                break;
            }
        }
    }
    Ok(TrainOutcome {
        model: best,
        log,
        optimizer: state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LinearModel;

    fn windows(n: usize, classes: usize) -> Vec<Window> {
        (0..n)
            .map(|i| {
                let c = i % classes;
                Window {
                    id: format!("w{i}"),
                    subject_id: format!("s{c}"),
                    offset: 0,
                    values: (0..16).map(|j| if j % classes == c { 1.0 } else { 0.1 * (i % 3) as f64 }).collect(),
                    label: Some(Label::Known(c)),
                    flat: false,
                }
            })
            .collect()
    }

    #[test]
    fn epoch_order_is_permutation() {
        let mut o = epoch_order(37, 5, 3);
        assert_ne!(o, (0..37).collect::<Vec<_>>());
        o.sort_unstable();
        assert_eq!(o, (0..37).collect::<Vec<_>>());
    }

    #[test]
    fn zero_lr_leaves_parameters() {
        let m = LinearModel::new(16, 2, 1).unwrap();
        let w = windows(10, 2);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 4,
            lr_max: 0.0,
            lr_min: 0.0,
            augment: AugmentSpec::identity(),
            ..TrainConfig::default()
        };
        let out = train(m.clone(), &w, &w, &cfg, 1).unwrap();
        assert_eq!(out.model, m);
    }

    #[test]
    fn empty_split_is_config_error() {
        let m = LinearModel::new(16, 2, 1).unwrap();
        let w = windows(4, 2);
        assert!(matches!(train(m.clone(), &[], &w, &TrainConfig::default(), 0), Err(Error::Config(_))));
        assert!(matches!(train(m, &w, &[], &TrainConfig::default(), 0), Err(Error::Config(_))));
    }

    #[test]
    fn linear_baseline_learns_and_is_reproducible() {
        let w = windows(30, 3);
        let cfg = TrainConfig {
            epochs: 40,
            batch_size: 8,
            lr_max: 5e-2,
            patience: 40,
            augment: AugmentSpec::identity(),
            ..TrainConfig::default()
        };
        let a = train(LinearModel::new(16, 3, 2).unwrap(), &w, &w, &cfg, 7).unwrap();
        let b = train(LinearModel::new(16, 3, 2).unwrap(), &w, &w, &cfg, 7).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.model, b.model);
        assert_eq!(a.log.best_val_f1, 1.0);
    }
}

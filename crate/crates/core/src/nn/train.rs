//! Minibatch training with Adam, a step learning-rate schedule, and
//! best-validation checkpointing.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::batch::{argmax, Batch};
use super::checkpoint::Checkpoint;
use super::model::{batch_softmax_loss, softmax_cross_entropy, Model};
use super::spec::ModelSpec;
use crate::features::store::FeatureRow;
use crate::{Error, Result};

// Streams of the training seed, so the weight draw, the dropout masks, and
// the shuffle order are independent.
const INIT_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;
const SHUFFLE_STREAM: u64 = 3;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Learning-rate multiplier applied after every `lr_decay_every` epochs.
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 15,
            batch_size: 32,
            learning_rate: 1e-4,
            lr_decay: 0.1,
            lr_decay_every: 10,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be positive".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidConfig(
                "batch size must be at least 2 (batch normalization)".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::InvalidConfig("lr decay must be in (0, 1]".into()));
        }
        if self.lr_decay_every == 0 {
            return Err(Error::InvalidConfig("lr decay interval must be positive".into()));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0 < b && b < 1.0) {
                return Err(Error::InvalidConfig(format!("{name} must be in (0, 1)")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig("epsilon must be positive".into()));
        }
        Ok(())
    }

    /// Learning rate in force during a 1-based epoch.
    pub fn lr_for_epoch(&self, epoch: usize) -> f64 {
        self.learning_rate * self.lr_decay.powi(((epoch - 1) / self.lr_decay_every) as i32)
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub lr: f64,
}

pub fn write_metrics_csv(path: &Path, metrics: &[EpochMetrics]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "epoch,train_loss,train_acc,val_loss,val_acc,lr")?;
    for m in metrics {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            m.epoch, m.train_loss, m.train_acc, m.val_loss, m.val_acc, m.lr
        )?;
    }
    w.flush()?;
    Ok(())
}

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub metrics: Vec<EpochMetrics>,
}

fn check_rows(rows: &[FeatureRow], what: &'static str, dim: usize, classes: usize) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::EmptyInput(what));
    }
    for row in rows {
        if row.values.len() != dim {
            return Err(Error::ShapeMismatch(format!(
                "{what} row has {} values, model expects {dim}",
                row.values.len()
            )));
        }
        if row.label == 0 || row.label as usize > classes {
            return Err(Error::InvalidConfig(format!(
                "{what} row labeled {} but the model has classes 1..={classes}",
                row.label
            )));
        }
    }
    Ok(())
}

/// Mean loss and accuracy of the model on rows, in inference mode.
pub fn evaluate_rows(model: &Model<f32>, rows: &[FeatureRow], batch_size: usize) -> Result<(f64, f64)> {
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for chunk in rows.chunks(batch_size.max(1)) {
        let views: Vec<&[f32]> = chunk.iter().map(|r| r.values.as_slice()).collect();
        let logits = model.infer(Batch::from_rows(&views))?;
        for (i, row) in chunk.iter().enumerate() {
            let z = logits.sample(i);
            let label = (row.label - 1) as usize;
            let (loss, _) = softmax_cross_entropy(z, label);
            loss_sum += f64::from(loss);
            if argmax(z) == label {
                correct += 1;
            }
        }
    }
    Ok((loss_sum / rows.len() as f64, correct as f64 / rows.len() as f64))
}

/// Trains a freshly initialized model and returns the checkpoint of the
/// epoch with the highest validation accuracy (the earliest such epoch on
/// ties) plus the per-epoch metrics.
pub fn train(
    spec: &ModelSpec,
    train_rows: &[FeatureRow],
    val_rows: &[FeatureRow],
    feature_fingerprint: u64,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    spec.validate()?;
    check_rows(train_rows, "training set", spec.input_dim, spec.classes)?;
    check_rows(val_rows, "validation set", spec.input_dim, spec.classes)?;

    let mut model = Model::<f32>::from_spec(spec)?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    rng.set_stream(INIT_STREAM);
    model.init_weights(&mut rng);
    let mut dropout_rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(DROPOUT_STREAM);
    let mut shuffle_rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(SHUFFLE_STREAM);

    let mut opt = Adam::new(&mut model, cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut order: Vec<usize> = (0..train_rows.len()).collect();
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut best: Option<Checkpoint> = None;

    for epoch in 1..=cfg.epochs {
        let lr = cfg.lr_for_epoch(epoch);
        order.shuffle(&mut shuffle_rng);

        let mut seen = 0usize;
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() == 1 {
                log::warn!(
                    "dropping a trailing batch of 1 sample; batch normalization needs at least 2"
                );
                continue;
            }
            let views: Vec<&[f32]> =
                chunk.iter().map(|&i| train_rows[i].values.as_slice()).collect();
            let labels: Vec<usize> =
                chunk.iter().map(|&i| (train_rows[i].label - 1) as usize).collect();
            let logits = model.forward_train(Batch::from_rows(&views), &mut dropout_rng)?;
            let (loss, dlogits, ncorrect) = batch_softmax_loss(&logits, &labels);
            model.backward(dlogits)?;
            opt.step(&mut model, lr);
            loss_sum += loss * chunk.len() as f64;
            correct += ncorrect;
            seen += chunk.len();
        }
        if seen == 0 {
            return Err(Error::InvalidConfig(
                "every training batch was dropped; provide at least 2 samples".into(),
            ));
        }

        let (val_loss, val_acc) = evaluate_rows(&model, val_rows, cfg.batch_size)?;
        let m = EpochMetrics {
            epoch,
            train_loss: loss_sum / seen as f64,
            train_acc: correct as f64 / seen as f64,
            val_loss,
            val_acc,
            lr,
        };
        log::info!(
            "epoch {}: train loss {:.4} acc {:.4} | val loss {:.4} acc {:.4} | lr {:e}",
            m.epoch,
            m.train_loss,
            m.train_acc,
            m.val_loss,
            m.val_acc,
            m.lr
        );
        metrics.push(m);

        if best.as_ref().map_or(true, |b| val_acc > b.val_accuracy) {
            best = Some(Checkpoint {
                model: model.snapshot(),
                epoch,
                val_accuracy: val_acc,
                feature_fingerprint,
            });
        }
    }

    Ok(TrainOutcome {
        checkpoint: best.expect("at least one epoch ran"),
        metrics,
    })
}

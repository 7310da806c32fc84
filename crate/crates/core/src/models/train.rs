use std::sync::mpsc;
use std::thread;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::arch::{ArchitectureSpec, Variant};
use super::checkpoint::{EpochRecord, ModelCheckpoint, TrainingMetadata};
use super::network::{Batch, Model};
use crate::adam::{AdamConfig, AdamState};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::tensor::{Real, Tensor};
use crate::util::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// `None` picks the variant default: 1e-4 for `cnn-pool`, 1e-3 for `psc`.
    pub learning_rate: Option<f64>,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without a new best selection loss before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Batches assembled ahead of the optimizer on a helper thread; 0
    /// assembles inline.
    pub prefetch: usize,
    pub strict_determinism: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: None,
            batch_size: 32,
            epochs: 60,
            patience: 5,
            seed: 0,
            prefetch: 2,
            strict_determinism: false,
        }
    }
}

impl TrainConfig {
    pub fn learning_rate_for(&self, variant: Variant) -> f64 {
        self.learning_rate.unwrap_or(match variant {
            Variant::CnnPool => 1e-4,
            Variant::Psc => 1e-3,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(lr) = self.learning_rate {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// One training utterance and its `W`-dimensional target.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub features: &'a FeatureMatrix,
    pub target: &'a [f32],
}

fn assemble<F: Real>(examples: &[Example<'_>], idx: &[usize], w: usize) -> Result<(Batch<F>, Tensor<F>)> {
    let feats: Vec<&FeatureMatrix> = idx.iter().map(|&i| examples[i].features).collect();
    let batch = Batch::from_features(&feats)?;
    let mut t = Vec::with_capacity(idx.len() * w);
    for &i in idx {
        t.extend(examples[i].target.iter().map(|&v| F::from_f32(v).expect("f32 converts")));
    }
    Ok((batch, Tensor::from_vec(&[idx.len(), w], t)?))
}

fn check_examples(examples: &[Example<'_>], spec: &ArchitectureSpec, what: &str) -> Result<()> {
    for (i, ex) in examples.iter().enumerate() {
        if ex.target.len() != spec.output_dim {
            return Err(Error::InvalidInput(format!(
                "{what} utterance {i} has a {}-dimensional target, model predicts {}",
                ex.target.len(),
                spec.output_dim
            )));
        }
        if ex.target.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidInput(format!("{what} utterance {i} has a target outside [0,1]")));
        }
        if spec.time_extents(ex.features.rows()).is_err() {
            return Err(Error::InvalidInput(format!(
                "{what} utterance {i} has {} frames; the {} model needs at least {}",
                ex.features.rows(),
                spec.variant,
                spec.min_frames()
            )));
        }
    }
    Ok(())
}

/// Mean per-utterance loss over `examples`.
pub fn mean_loss<F: Real>(model: &Model<F>, examples: &[Example<'_>], batch_size: usize) -> Result<f64> {
    let idx: Vec<usize> = (0..examples.len()).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(batch_size.max(1)) {
        let (batch, targets) = assemble::<F>(examples, chunk, model.spec().output_dim)?;
        let (loss, _) = model.loss(&batch, &targets, false)?;
        total += loss.to_f64().expect("finite loss") * chunk.len() as f64;
    }
    Ok(total / examples.len() as f64)
}

/// Word probabilities for every item, batched and evaluated in parallel on
/// the current rayon pool.
pub fn predict_all<F: Real>(
    model: &Model<F>,
    items: &[&FeatureMatrix],
    batch_size: usize,
) -> Result<Vec<Vec<F>>> {
    let chunks: Vec<Result<Vec<Vec<F>>>> = items
        .par_chunks(batch_size.max(1))
        .map(|chunk| Ok(model.forward(&Batch::from_features(chunk)?)?.probabilities))
        .collect();
    let mut out = Vec::with_capacity(items.len());
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

fn with_context(e: Error, epoch: usize, batch: usize) -> Error {
    match e {
        Error::NonFinite(msg) => Error::NonFinite(format!("{msg} at epoch {epoch}, batch {batch}")),
        other => other,
    }
}

/// Minimizes the mean cross-entropy with Adam and returns the parameters of
/// the epoch with the lowest dev loss (train loss when `dev` is empty).
/// `on_epoch` sees every loss-curve entry as it is produced.
pub fn train<F: Real>(
    spec: &ArchitectureSpec,
    config: &TrainConfig,
    train: &[Example<'_>],
    dev: &[Example<'_>],
    vocab_fingerprint: u64,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<ModelCheckpoint> {
    spec.validate()?;
    config.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidInput("no training utterances".into()));
    }
    check_examples(train, spec, "train")?;
    check_examples(dev, spec, "dev")?;
    let w = spec.output_dim;
    let bs = config.batch_size;
    let lr = config.learning_rate_for(spec.variant);

    let mut model: Model<F> = Model::init(spec, &mut rng_for(config.seed, "init"))?;
    let mut adam = AdamState::new(AdamConfig::with_learning_rate(lr), model.params());
    let mut shuffle_rng = rng_for(config.seed, "shuffle");

    let evaluate = |model: &Model<F>| -> Result<Option<f64>> {
        if dev.is_empty() {
            Ok(None)
        } else {
            mean_loss(model, dev, bs).map(Some)
        }
    };
    let initial = EpochRecord {
        epoch: 0,
        train_loss: mean_loss(&model, train, bs)?,
        dev_loss: evaluate(&model)?,
    };
    on_epoch(&initial);
    let mut curve = vec![initial];
    let selection = |r: &EpochRecord| r.dev_loss.unwrap_or(r.train_loss);
    let mut best = (selection(&initial), 0, model.params().clone());
    let mut stale = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let prefetch = if config.strict_determinism { 0 } else { config.prefetch };

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let batches: Vec<&[usize]> = order.chunks(bs).collect();
        let mut total = 0.0;
        let mut step = |b: usize, batch: Batch<F>, targets: Tensor<F>| -> Result<()> {
            let (loss, grads) = model
                .loss(&batch, &targets, true)
                .map_err(|e| with_context(e, epoch, b))?;
            let loss = loss.to_f64().expect("loss converts");
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("loss at epoch {epoch}, batch {b}")));
            }
            total += loss * batch.len() as f64;
            adam.step(model.params_mut(), &grads.expect("gradients requested"))
                .map_err(|e| with_context(e, epoch, b))
        };
        if prefetch == 0 {
            for (b, idx) in batches.iter().enumerate() {
                let (batch, targets) = assemble(train, idx, w)?;
                step(b, batch, targets)?;
            }
        } else {
            thread::scope(|s| -> Result<()> {
                let (tx, rx) = mpsc::sync_channel(prefetch);
                let batches = &batches;
                s.spawn(move || {
                    for idx in batches {
                        if tx.send(assemble::<F>(train, idx, w)).is_err() {
                            break;
                        }
                    }
                });
                for (b, item) in rx.iter().enumerate() {
                    let (batch, targets) = item?;
                    step(b, batch, targets)?;
                }
                Ok(())
            })?;
        }
        let record = EpochRecord {
            epoch,
            train_loss: total / train.len() as f64,
            dev_loss: evaluate(&model)?,
        };
        on_epoch(&record);
        curve.push(record);
        log::info!(
            "epoch {epoch}: train {:.5} dev {:?}",
            record.train_loss,
            record.dev_loss
        );
        if selection(&record) < best.0 {
            best = (selection(&record), epoch, model.params().clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }

    let epochs_run = curve.len() - 1;
    let best_model = Model::from_params(spec, best.2)?;
    Ok(ModelCheckpoint::new(
        &best_model,
        vocab_fingerprint,
        TrainingMetadata {
            best_epoch: best.1,
            epochs_run,
            seed: config.seed,
            learning_rate: lr,
            batch_size: bs,
            loss_curve: curve,
            targets: None,
        },
    ))
}

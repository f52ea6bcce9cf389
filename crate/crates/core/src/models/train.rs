use serde::{Deserialize, Serialize};

use super::{BnMode, ModelInstance};
use crate::attacks::pgd_pixel_images;
use crate::data::Dataset;
use crate::tensor::{AdamConfig, AdamState, ParamUpdate, Rng, Tape, Tensor};
use crate::{Error, Result};

const EVAL_CHUNK: usize = 250;

/// Per-batch PGD applied before each update.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdversarialSettings {
    pub epsilon: f32,
    pub eta: f32,
    pub steps: usize,
}

impl AdversarialSettings {
    /// ε = 0.03 with 7 inner steps of ε/4.
    pub fn standard() -> Self {
        Self::with_epsilon(0.03)
    }

    pub fn with_epsilon(epsilon: f32) -> Self {
        Self {
            epsilon,
            eta: epsilon / 4.0,
            steps: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f32,
    pub seed: u64,
    pub adversarial: Option<AdversarialSettings>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 64,
            lr: 1e-3,
            seed: 0,
            adversarial: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("epochs and batch size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate {}", self.lr)));
        }
        if let Some(a) = &self.adversarial {
            if !(a.epsilon >= 0.0 && a.epsilon.is_finite() && a.eta.is_finite()) || a.steps == 0 {
                return Err(Error::InvalidArgument(format!("adversarial settings {a:?}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f32,
    pub accuracy: f32,
}

fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn check_data(model: &ModelInstance, data: &Dataset) -> Result<()> {
    let spec = model.spec();
    if data.num_classes > spec.num_classes {
        return Err(Error::InvalidArgument(format!(
            "dataset has {} classes, model {}",
            data.num_classes, spec.num_classes
        )));
    }
    if data.height() != spec.height || data.width() != spec.width {
        return Err(Error::shape(
            "dataset",
            format!(
                "images are {}x{}, model expects {}x{}",
                data.height(),
                data.width(),
                spec.height,
                spec.width
            ),
        ));
    }
    Ok(())
}

/// Minimises mean softmax cross-entropy with Adam. Batches are drawn from a
/// per-epoch seeded shuffle; a trailing batch of one item is skipped since
/// batch statistics are undefined for it. Frozen parameters and frozen
/// channels are never written.
pub fn train(model: &mut ModelInstance, data: &Dataset, config: &TrainConfig) -> Result<Vec<EpochMetrics>> {
    config.validate()?;
    check_data(model, data)?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut adam = AdamState::new(AdamConfig {
        lr: config.lr,
        ..AdamConfig::default()
    });
    let masks: Vec<Option<Vec<bool>>> = model.params().iter().map(|p| p.frozen_mask()).collect();
    let shuffler = Rng::new(config.seed).split_named("train.shuffle");
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        shuffler.split(epoch as u64).shuffle(&mut order);
        let (mut loss_sum, mut correct, mut seen) = (0.0f64, 0usize, 0usize);
        for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
            if chunk.len() < 2 {
                continue;
            }
            let labels: Vec<usize> = chunk.iter().map(|&i| data.labels[i]).collect();
            let mut images = data.images.gather_batch(chunk);
            if let Some(adv) = &config.adversarial {
                images = pgd_pixel_images(model, &images, &labels, adv.epsilon, adv.eta, adv.steps)?;
            }
            let mut tape = Tape::new();
            let x = tape.constant(images);
            let mut stats = std::mem::take(model.bn_stats_mut());
            let recorded = model.record(&mut tape, x, BnMode::Train(&mut stats), true);
            *model.bn_stats_mut() = stats;
            let recorded = recorded?;
            let loss = tape.softmax_xent(recorded.logits, &labels).map_err(|e| match e {
                Error::NonFinite(_) => Error::Divergence {
                    epoch,
                    batch,
                    loss: f32::NAN,
                },
                other => other,
            })?;
            let loss_value = tape.value(loss).data()[0];
            let logits = tape.value(recorded.logits);
            let k = logits.dim(1);
            correct += logits
                .data()
                .chunks(k)
                .zip(&labels)
                .filter(|(row, &l)| argmax(row) == l)
                .count();
            seen += labels.len();
            loss_sum += f64::from(loss_value) * labels.len() as f64;

            let mut grads = tape.backward(loss)?;
            let mut grad_tensors = Vec::new();
            for handle in recorded.params.iter().flatten() {
                grad_tensors.push(grads.take(*handle)?);
            }
            let mut updates = Vec::with_capacity(grad_tensors.len());
            let mut g = grad_tensors.iter();
            for ((param, handle), mask) in model.params_mut().iter_mut().zip(&recorded.params).zip(&masks) {
                if handle.is_some() {
                    updates.push(ParamUpdate {
                        value: &mut param.value,
                        grad: g.next().expect("one gradient per handle"),
                        frozen: mask.as_deref(),
                    });
                }
            }
            adam.step(&mut updates).map_err(|e| match e {
                Error::NonFinite(_) => Error::Divergence {
                    epoch,
                    batch,
                    loss: loss_value,
                },
                other => other,
            })?;
        }
        history.push(EpochMetrics {
            epoch,
            loss: if seen > 0 {
                (loss_sum / seen as f64) as f32
            } else {
                f32::NAN
            },
            accuracy: if seen > 0 { correct as f32 / seen as f32 } else { 0.0 },
        });
    }
    Ok(history)
}

/// Eval-mode argmax predictions; ties go to the lowest class index.
pub fn predict(model: &ModelInstance, images: &Tensor) -> Result<Vec<usize>> {
    let n = images.dim(0);
    let mut out = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let end = (start + EVAL_CHUNK).min(n);
        let logits = model.logits(&images.slice_batch(start, end))?;
        let k = logits.dim(1);
        out.extend(logits.data().chunks(k).map(argmax));
        start = end;
    }
    Ok(out)
}

/// Fraction of items whose prediction equals the label.
pub fn evaluate(model: &ModelInstance, data: &Dataset) -> Result<f32> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_data(model, data)?;
    let preds = predict(model, &data.images)?;
    let correct = preds.iter().zip(&data.labels).filter(|(p, l)| p == l).count();
    Ok(correct as f32 / data.len() as f32)
}

//! Mini-batch SGD with momentum on softmax cross-entropy.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{argmax, softmax, LayeredModel};
use crate::error::{Error, Result};
use crate::image::ImageSample;
use crate::rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 20,
            epochs: 20,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    /// `None` when no validation data was supplied.
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

/// One entry per completed epoch.
pub type TrainTrace = Vec<EpochStats>;

fn check_labels<T: Scalar>(model: &LayeredModel<T>, data: &[ImageSample]) -> Result<()> {
    for s in data {
        match s.label {
            Some(l) if l < model.class_count() => {}
            Some(l) => {
                return Err(Error::ClassOutOfRange {
                    index: l,
                    class_count: model.class_count(),
                })
            }
            None => return Err(Error::Empty("training sample without label".into())),
        }
    }
    Ok(())
}

/// Cross-entropy loss and accuracy of `model` on labeled samples.
pub fn evaluate<T: Scalar>(model: &LayeredModel<T>, data: &[ImageSample]) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for s in data {
        let logits = model.logits(s)?;
        let label = s.label.unwrap_or(0);
        let p = softmax(&logits)[label].as_f64();
        loss -= p.max(1e-300).ln();
        if argmax(&logits) == label {
            correct += 1;
        }
    }
    let n = data.len().max(1) as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Trains a copy of `model`. Batches are drawn from a per-epoch shuffle
/// seeded by `cfg.seed`; gradients are averaged over the batch in sample
/// order, so the result is a pure function of the inputs.
pub fn train_classifier<T: Scalar>(
    model: &LayeredModel<T>,
    train: &[ImageSample],
    val: &[ImageSample],
    cfg: &TrainConfig,
) -> Result<(LayeredModel<T>, TrainTrace)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    check_labels(model, train)?;
    check_labels(model, val)?;

    let mut model = model.clone();
    let mut velocity: Vec<Vec<T>> = model
        .layers()
        .iter()
        .map(|l| vec![T::zero(); l.param_count()])
        .collect();
    let mut grads: Vec<Vec<T>> = velocity.clone();
    let lr = T::lit(cfg.learning_rate);
    let mu = T::lit(cfg.momentum);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut rng = rng::seeded(cfg.seed);
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            grads
                .iter_mut()
                .for_each(|g| g.iter_mut().for_each(|v| *v = T::zero()));
            for &i in batch {
                let sample = &train[i];
                let label = sample.label.unwrap_or(0);
                let (inputs, logits) = model.forward_trace(model.image_values(sample)?);
                let probs = softmax(&logits);
                loss_sum -= probs[label].as_f64().max(1e-300).ln();
                if argmax(&logits) == label {
                    correct += 1;
                }
                let mut grad = probs;
                grad[label] -= T::one();
                for ((layer, input), pg) in model
                    .layers()
                    .iter()
                    .zip(&inputs)
                    .zip(grads.iter_mut())
                    .rev()
                {
                    let pg = if pg.is_empty() {
                        None
                    } else {
                        Some(pg.as_mut_slice())
                    };
                    grad = layer.backward(input, &grad, pg);
                }
            }
            let scale = T::one() / T::from_usize_lossy(batch.len());
            for ((layer, g), v) in model
                .layers_mut()
                .iter_mut()
                .zip(&grads)
                .zip(velocity.iter_mut())
            {
                let Some((w, b)) = layer.params_mut() else {
                    continue;
                };
                let params = w.iter_mut().chain(b.iter_mut());
                for ((p, &gi), vi) in params.zip(g).zip(v.iter_mut()) {
                    *vi = mu * *vi - lr * gi * scale;
                    *p += *vi;
                }
            }
        }
        if model
            .layers()
            .iter()
            .any(|l| l.params().iter().any(|p| !p.is_finite()))
        {
            return Err(Error::NonFinite(format!(
                "model parameters after epoch {}",
                epoch + 1
            )));
        }
        let (val_loss, val_accuracy) = if val.is_empty() {
            (None, None)
        } else {
            let (l, a) = evaluate(&model, val)?;
            (Some(l), Some(a))
        };
        trace.push(EpochStats {
            epoch: epoch + 1,
            train_loss: loss_sum / train.len() as f64,
            train_accuracy: correct as f64 / train.len() as f64,
            val_loss,
            val_accuracy,
        });
    }
    Ok((model, trace))
}

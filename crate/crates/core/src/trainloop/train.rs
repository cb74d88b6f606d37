use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::Serialize;

use super::config::TrainConfig;
use crate::baselines::zeroshot_scores;
use crate::embedstore::{ImageSet, PromptBank};
use crate::error::{Error, Result};
use crate::evalharness::{accuracy, FewShotTask};
use crate::seeding::{stream, TAG_SHUFFLE};
use crate::selector::{
    backward, batch_noise, forward_loss, infer, zip_params, Batch, DropoutMasks, SelectorParams,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub params: SelectorParams,
    pub epochs: Vec<EpochStats>,
    pub steps: usize,
    pub seconds_total: f64,
    pub seconds_per_iter: f64,
}

impl TrainResult {
    pub fn final_train_accuracy(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_accuracy)
    }

    pub fn write_epochs_csv<W: std::io::Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["epoch", "loss", "train_accuracy", "val_accuracy"])?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                e.loss.to_string(),
                e.train_accuracy.to_string(),
                e.val_accuracy.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Cosine-decayed learning rate at `step` of `total`.
pub fn cosine_lr(base: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return base;
    }
    0.5 * base * (1.0 + (std::f64::consts::PI * step as f64 / total as f64).cos())
}

/// Everything one optimization step needs besides the parameters.
#[derive(Debug, Clone, Copy)]
pub struct StepInput<'a> {
    pub features: ArrayView2<'a, f64>,
    pub labels: &'a [usize],
    /// Dataset-level image ids, used to key the Gumbel noise streams.
    pub image_ids: &'a [usize],
    pub zeroshot: Option<ArrayView2<'a, f64>>,
}

/// Noise and dropout sampling, forward, backward, and the SGD update with
/// decoupled weight decay. Returns the batch loss.
pub fn train_step(
    params: &mut SelectorParams,
    input: StepInput<'_>,
    bank: &PromptBank,
    config: &TrainConfig,
    lr: f64,
    step: usize,
) -> Result<f64> {
    let noise = batch_noise(bank, input.image_ids, config.seed, step as u64);
    let masks = DropoutMasks::sample(
        params.dropout_rate,
        input.labels.len(),
        bank.total(),
        params.dim(),
        config.seed,
        step as u64,
    );
    let batch = Batch {
        features: input.features,
        labels: input.labels,
    };
    let pass = forward_loss(
        params,
        batch,
        bank,
        noise.view(),
        masks.as_ref(),
        config.alpha_blend,
        input.zeroshot,
        config.mode,
    )?;
    let grads = backward(params, batch, bank, masks.as_ref(), &pass);
    let decay = lr * config.weight_decay;
    zip_params(params, &grads, |w, g| *w -= lr * g + decay * *w);
    Ok(pass.loss)
}

fn zeroshot_for(
    images: &ImageSet,
    templates: Option<&PromptBank>,
    alpha: f64,
) -> Result<Option<Array2<f64>>> {
    if alpha >= 1.0 {
        return Ok(None);
    }
    let t = templates.ok_or_else(|| {
        Error::validation("alpha < 1 requires a template cache for zero-shot scores")
    })?;
    zeroshot_scores(images.features.view(), t).map(Some)
}

/// Accuracy of `params` on `images` with deterministic selection.
pub fn selector_accuracy(
    params: &SelectorParams,
    images: &ImageSet,
    bank: &PromptBank,
    templates: Option<&PromptBank>,
    alpha_blend: f64,
) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::validation("cannot score an empty image set"));
    }
    let zs = zeroshot_for(images, templates, alpha_blend)?;
    let out = infer(
        params,
        images.features.view(),
        bank,
        zs.as_ref().map(|z| z.view()),
        alpha_blend,
    )?;
    Ok(accuracy(&out.predictions(), &images.labels))
}

/// Trains a fresh selector on `task.train_indices`. Per-epoch validation
/// accuracy is reported when the task has validation indices.
pub fn train(
    config: &TrainConfig,
    task: &FewShotTask,
    images: &ImageSet,
    bank: &PromptBank,
    templates: Option<&PromptBank>,
) -> Result<TrainResult> {
    config.validate()?;
    task.check_against(images)?;
    if bank.num_classes() != images.num_classes {
        return Err(Error::validation(format!(
            "prompt bank has {} classes, images have {}",
            bank.num_classes(),
            images.num_classes
        )));
    }
    if task.train_indices.is_empty() {
        return Err(Error::validation("task has no training images"));
    }
    let started = Instant::now();
    let train_set = images.subset(&task.train_indices);
    let val_set = (!task.val_indices.is_empty()).then(|| images.subset(&task.val_indices));
    let zs_train = zeroshot_for(&train_set, templates, config.alpha_blend)?;

    let mut params = SelectorParams::init(
        images.dim(),
        config.seed,
        config.tau,
        config.dropout,
        config.logit_scale,
    )?;
    let n = train_set.len();
    let steps_per_epoch = n.div_ceil(config.batch_size);
    let total_steps = config.epochs * steps_per_epoch;
    let mut step = 0;
    let mut step_seconds = 0.0;
    let mut epochs = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut stream(&[TAG_SHUFFLE, config.seed, epoch as u64]));
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let features = train_set.features.select(Axis(0), chunk);
            let labels: Vec<usize> = chunk.iter().map(|&r| train_set.labels[r]).collect();
            let ids: Vec<usize> = chunk.iter().map(|&r| task.train_indices[r]).collect();
            let zs = zs_train.as_ref().map(|z| z.select(Axis(0), chunk));
            let input = StepInput {
                features: features.view(),
                labels: &labels,
                image_ids: &ids,
                zeroshot: zs.as_ref().map(|z| z.view()),
            };
            let lr = cosine_lr(config.learning_rate, step, total_steps);
            let t0 = Instant::now();
            let loss = match train_step(&mut params, input, bank, config, lr, step) {
                Ok(l) if l.is_finite() => l,
                Ok(l) => {
                    return Err(Error::Divergence {
                        epoch,
                        step,
                        loss: l,
                    })
                }
                Err(Error::NonFinite(_)) => {
                    return Err(Error::Divergence {
                        epoch,
                        step,
                        loss: f64::NAN,
                    })
                }
                Err(e) => return Err(e),
            };
            step_seconds += t0.elapsed().as_secs_f64();
            loss_sum += loss;
            step += 1;
        }
        if params
            .w_q
            .iter()
            .chain(&params.w_k)
            .chain(&params.w_v)
            .any(|x| !x.is_finite())
        {
            return Err(Error::Divergence {
                epoch,
                step,
                loss: f64::NAN,
            });
        }
        let train_accuracy =
            selector_accuracy(&params, &train_set, bank, templates, config.alpha_blend)?;
        let val_accuracy = match &val_set {
            Some(v) => Some(selector_accuracy(
                &params,
                v,
                bank,
                templates,
                config.alpha_blend,
            )?),
            None => None,
        };
        epochs.push(EpochStats {
            epoch,
            loss: loss_sum / steps_per_epoch as f64,
            train_accuracy,
            val_accuracy,
        });
    }

    Ok(TrainResult {
        params,
        epochs,
        steps: step,
        seconds_total: started.elapsed().as_secs_f64(),
        seconds_per_iter: if step > 0 {
            step_seconds / step as f64
        } else {
            0.0
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_schedule() {
        assert_eq!(cosine_lr(1.0, 0, 10), 1.0);
        assert!((cosine_lr(1.0, 5, 10) - 0.5).abs() < 1e-15);
        assert!(cosine_lr(1.0, 10, 10).abs() < 1e-15);
        assert_eq!(cosine_lr(0.0, 3, 10), 0.0);
    }
}

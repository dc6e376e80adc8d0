//! Training loop with seeded shuffling, validation-driven checkpointing,
//! head-only fine-tuning, and batched prediction.

use crate::metrics::{EpochRecord, PredictionRecord};
use crate::rng::{derive_seed, seed_rng};
use crate::vit::adam::{adam_step, AdamParams};
use crate::vit::backward::{backward, cross_entropy};
use crate::vit::checkpoint::save_checkpoint;
use crate::vit::model::{forward, ForwardMode};
use crate::vit::params::ParameterSet;
use crate::vit::{Batch, ViTConfig, VitError};
use ndarray::{Array4, ArrayView1, Axis};
use rand::Rng;
use std::path::PathBuf;

/// An in-memory labeled image set (`B x C x H x W`, values in `[0, 1]`).
#[derive(Debug, Clone)]
pub struct LabeledImages {
    pub images: Array4<f32>,
    pub labels: Vec<usize>,
}

impl LabeledImages {
    pub fn len(&self) -> usize {
        self.images.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Copy the given sample indices into a batch.
    pub fn subset(&self, indices: &[usize]) -> Batch<f32> {
        Batch {
            images: self.images.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

}

/// Everything needed to resume or evaluate a trained classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ViTConfig,
    pub params: ParameterSet<f32>,
    pub adam_m: ParameterSet<f32>,
    pub adam_v: ParameterSet<f32>,
    pub adam_t: u64,
    pub epoch: usize,
    pub best_val_loss: Option<f64>,
    pub best_val_acc: Option<f64>,
}

impl Checkpoint {
    /// A fresh checkpoint around untrained (or externally built) parameters.
    pub fn new(config: ViTConfig, params: ParameterSet<f32>) -> Self {
        let adam_m = params.zeros_like();
        let adam_v = params.zeros_like();
        Checkpoint {
            config,
            params,
            adam_m,
            adam_v,
            adam_t: 0,
            epoch: 0,
            best_val_loss: None,
            best_val_acc: None,
        }
    }
}

/// Knobs for one training run.
#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamParams,
    pub seed: u64,
    /// When set, every improvement checkpoint is also written here.
    pub save_path: Option<PathBuf>,
}

impl Default for TrainOptions {
    /// 50 epochs, batch size 128, Adam at 5e-5.
    fn default() -> Self {
        TrainOptions {
            epochs: 50,
            batch_size: 128,
            adam: AdamParams::default(),
            seed: 0,
            save_path: None,
        }
    }
}

/// The best checkpoint plus the per-epoch convergence records.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochRecord>,
}

/// First index of the row maximum; ties go to the lowest class index.
pub(crate) fn argmax(row: ArrayView1<f32>) -> usize {
    let mut best = 0;
    let mut best_v = row[0];
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Mean loss and top-1 accuracy over a dataset, in evaluation mode.
pub fn evaluate(
    params: &ParameterSet<f32>,
    cfg: &ViTConfig,
    data: &LabeledImages,
    batch_size: usize,
) -> Result<(f64, f64), VitError> {
    if data.is_empty() {
        return Err(VitError::ShapeError("empty evaluation set".into()));
    }
    let indices: Vec<usize> = (0..data.len()).collect();
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for chunk in indices.chunks(batch_size.max(1)) {
        let batch = data.subset(chunk);
        let logits = forward(&batch, params, cfg, ForwardMode::Eval)?;
        let loss = cross_entropy(&logits, &batch.labels)?;
        loss_sum += loss as f64 * chunk.len() as f64;
        for (row, &label) in logits.rows().into_iter().zip(&batch.labels) {
            if argmax(row) == label {
                correct += 1;
            }
        }
    }
    Ok((loss_sum / data.len() as f64, correct as f64 / data.len() as f64))
}

/// Train for the requested epochs with seeded shuffling.
///
/// After every epoch the validation loss and accuracy are computed; a
/// checkpoint is retained (and written to `save_path`, when set) whenever
/// the validation loss reaches a new minimum or the validation accuracy a
/// new maximum. With zero epochs the initial checkpoint is returned
/// untouched. A non-finite training loss aborts with epoch/step context.
pub fn train(
    cfg: &ViTConfig,
    params: ParameterSet<f32>,
    train_set: &LabeledImages,
    val_set: &LabeledImages,
    opts: &TrainOptions,
) -> Result<TrainOutcome, VitError> {
    cfg.validate()?;
    params.check_config(cfg)?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(VitError::ShapeError("training and validation sets must be non-empty".into()));
    }
    if opts.batch_size == 0 {
        return Err(VitError::ShapeError("batch size must be positive".into()));
    }

    let mut params = params;
    let mut m = params.zeros_like();
    let mut v = params.zeros_like();
    let mut t: u64 = 0;
    let mut best = Checkpoint::new(*cfg, params.clone());
    let mut best_loss: Option<f64> = None;
    let mut best_acc: Option<f64> = None;
    let mut history = Vec::with_capacity(opts.epochs);

    for epoch in 1..=opts.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        let mut rng = seed_rng(derive_seed(opts.seed, &[epoch as u64]));
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }

        let mut loss_sum = 0.0;
        for (step, chunk) in order.chunks(opts.batch_size).enumerate() {
            let batch = train_set.subset(chunk);
            let dropout_seed = derive_seed(opts.seed, &[epoch as u64, step as u64]);
            let (loss, grads) =
                backward(&batch, &params, cfg, ForwardMode::Train { dropout_seed })?;
            if !loss.is_finite() {
                return Err(VitError::DivergedLoss { epoch, step });
            }
            t += 1;
            adam_step(&mut params, &grads, &mut m, &mut v, &opts.adam, t)?;
            loss_sum += loss as f64 * chunk.len() as f64;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let (val_loss, val_accuracy) = evaluate(&params, cfg, val_set, opts.batch_size)?;
        history.push(EpochRecord { epoch, train_loss, val_loss, val_accuracy });

        let improved_loss = best_loss.is_none_or(|b| val_loss < b);
        let improved_acc = best_acc.is_none_or(|b| val_accuracy > b);
        if improved_loss {
            best_loss = Some(val_loss);
        }
        if improved_acc {
            best_acc = Some(val_accuracy);
        }
        if improved_loss || improved_acc {
            best = Checkpoint {
                config: *cfg,
                params: params.clone(),
                adam_m: m.clone(),
                adam_v: v.clone(),
                adam_t: t,
                epoch,
                best_val_loss: best_loss,
                best_val_acc: best_acc,
            };
            if let Some(path) = &opts.save_path {
                save_checkpoint(&best, path)?;
            }
        }
    }

    Ok(TrainOutcome { checkpoint: best, history })
}

/// Head-only fine-tuning: freeze everything except the classifier head
/// (weight and bias), then train. Every frozen array in the result is
/// bit-identical to the input checkpoint's.
pub fn fine_tune(
    checkpoint: &Checkpoint,
    train_set: &LabeledImages,
    val_set: &LabeledImages,
    opts: &TrainOptions,
) -> Result<TrainOutcome, VitError> {
    let mut params = checkpoint.params.clone();
    params.freeze_all_except(&["head.weight", "head.bias"]);
    train(&checkpoint.config, params, train_set, val_set, opts)
}

/// Evaluation-mode predictions for every sample, in order.
pub fn predict(
    checkpoint: &Checkpoint,
    data: &LabeledImages,
) -> Result<Vec<PredictionRecord>, VitError> {
    let cfg = &checkpoint.config;
    let indices: Vec<usize> = (0..data.len()).collect();
    let mut records = Vec::with_capacity(data.len());
    for chunk in indices.chunks(64) {
        let batch = data.subset(chunk);
        let logits = forward(&batch, &checkpoint.params, cfg, ForwardMode::Eval)?;
        for (row, &label) in logits.rows().into_iter().zip(&batch.labels) {
            records.push(PredictionRecord {
                label,
                predicted: argmax(row),
                logits: row.to_vec(),
            });
        }
    }
    Ok(records)
}

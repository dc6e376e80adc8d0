//! From-scratch vision transformer: forward pass, exact gradients, Adam,
//! training loop with checkpointing, and head-only fine-tuning.
//!
//! The math is generic over the scalar type; training runs in `f32`, the
//! finite-difference and oracle tests instantiate the same code in `f64`.

mod adam;
mod backward;
mod checkpoint;
mod model;
mod params;
mod train;

pub use adam::{adam_step, AdamParams};
pub use backward::{backward, cross_entropy};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use model::{
    attention, attention_weights, embed, encoder_layer, forward, forward_sample, gelu, patchify,
    ForwardMode, LN_EPS,
};
pub use params::ParameterSet;
pub use train::{
    evaluate, fine_tune, predict, train, Checkpoint, LabeledImages, TrainOptions, TrainOutcome,
};

use crate::scalar::Scalar;
use ndarray::Array4;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io;

/// Architecture shape of the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViTConfig {
    /// Input image height and width in pixels.
    pub image_hw: (usize, usize),
    pub channels: usize,
    /// Square patch side in pixels.
    pub patch: usize,
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub mlp_dim: usize,
    pub n_classes: usize,
    /// Dropout probability, active only in training mode.
    pub dropout: f64,
}

impl ViTConfig {
    /// Full-scale configuration: 224x224 RGB, patch 16, width 768, 12
    /// layers, 12 heads, MLP 3072, 10 classes.
    pub fn base224() -> Self {
        ViTConfig {
            image_hw: (224, 224),
            channels: 3,
            patch: 16,
            embed_dim: 768,
            layers: 12,
            heads: 12,
            mlp_dim: 3072,
            n_classes: 10,
            dropout: 0.0,
        }
    }

    /// Default desk-scale configuration that trains on a laptop in minutes:
    /// 64x64 input (32 px diagrams upscaled by 2), patch 8, width 64,
    /// 4 layers, 4 heads, MLP 128.
    pub fn desk() -> Self {
        ViTConfig {
            image_hw: (64, 64),
            channels: 3,
            patch: 8,
            embed_dim: 64,
            layers: 4,
            heads: 4,
            mlp_dim: 128,
            n_classes: 10,
            dropout: 0.0,
        }
    }

    /// Minimal configuration for gradient verification: 8x8 input, patch 4,
    /// width 8, one layer, two heads.
    pub fn tiny(n_classes: usize) -> Self {
        ViTConfig {
            image_hw: (8, 8),
            channels: 3,
            patch: 4,
            embed_dim: 8,
            layers: 1,
            heads: 2,
            mlp_dim: 16,
            n_classes,
            dropout: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), VitError> {
        let (h, w) = self.image_hw;
        if h == 0 || w == 0 || self.channels == 0 || self.patch == 0 {
            return Err(VitError::ShapeError("zero dimension in config".into()));
        }
        if h % self.patch != 0 || w % self.patch != 0 {
            return Err(VitError::ShapeError(format!(
                "image {h}x{w} not divisible by patch {}",
                self.patch
            )));
        }
        if self.embed_dim == 0 || self.embed_dim % self.heads != 0 {
            return Err(VitError::ShapeError(format!(
                "embed dim {} not divisible by {} heads",
                self.embed_dim, self.heads
            )));
        }
        if self.layers == 0 || self.mlp_dim == 0 {
            return Err(VitError::ShapeError("layers and mlp_dim must be positive".into()));
        }
        if self.n_classes < 2 {
            return Err(VitError::ShapeError("need at least two classes".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(VitError::ShapeError(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// Patch token count `N = H*W / P^2`.
    pub fn n_patches(&self) -> usize {
        (self.image_hw.0 / self.patch) * (self.image_hw.1 / self.patch)
    }

    /// Sequence length including the class token.
    pub fn n_tokens(&self) -> usize {
        self.n_patches() + 1
    }

    /// Flattened patch vector length `P^2 * C`.
    pub fn patch_dim(&self) -> usize {
        self.patch * self.patch * self.channels
    }
}

/// A batch of images (`B x C x H x W`, values in `[0, 1]`) with labels.
#[derive(Debug, Clone)]
pub struct Batch<S> {
    pub images: Array4<S>,
    pub labels: Vec<usize>,
}

impl<S: Scalar> Batch<S> {
    pub fn len(&self) -> usize {
        self.images.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self, cfg: &ViTConfig) -> Result<(), VitError> {
        let shape = self.images.shape();
        if shape[0] == 0 {
            return Err(VitError::ShapeError("empty batch".into()));
        }
        if shape[1] != cfg.channels || shape[2] != cfg.image_hw.0 || shape[3] != cfg.image_hw.1 {
            return Err(VitError::ShapeError(format!(
                "batch images {:?} do not match config {}x{}x{}",
                &shape[1..],
                cfg.channels,
                cfg.image_hw.0,
                cfg.image_hw.1
            )));
        }
        if self.labels.len() != shape[0] {
            return Err(VitError::ShapeError(format!(
                "{} labels for {} images",
                self.labels.len(),
                shape[0]
            )));
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= cfg.n_classes) {
            return Err(VitError::ShapeError(format!(
                "label {bad} out of range for {} classes",
                cfg.n_classes
            )));
        }
        Ok(())
    }
}

/// Errors from the classifier stack.
#[derive(Debug)]
pub enum VitError {
    ShapeError(String),
    Io(io::Error),
    /// Training aborted on a non-finite loss.
    DivergedLoss { epoch: usize, step: usize },
    Checkpoint(String),
}

impl fmt::Display for VitError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VitError::ShapeError(msg) => write!(f, "shape error: {msg}"),
            VitError::Io(e) => write!(f, "io error: {e}"),
            VitError::DivergedLoss { epoch, step } => {
                write!(f, "non-finite loss at epoch {epoch}, step {step}")
            }
            VitError::Checkpoint(msg) => write!(f, "checkpoint error: {msg}"),
        }
    }
}

impl std::error::Error for VitError {}

impl From<io::Error> for VitError {
    fn from(e: io::Error) -> Self {
        VitError::Io(e)
    }
}

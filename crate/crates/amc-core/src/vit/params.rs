//! The flat, named collection of trainable arrays.
//!
//! Every parameter is stored as a 2-D array (vectors as `1 x n`) in a fixed
//! order derived from the configuration, which gives gradients, optimizer
//! moments, and checkpoints one shared layout. The freeze mask marks arrays
//! the optimizer must leave bit-identical.

use crate::rng::{derive_seed, seed_rng};
use crate::scalar::{lit, Scalar};
use crate::vit::{ViTConfig, VitError};
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// One parameter array with its canonical name.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray<S> {
    pub name: String,
    pub data: Array2<S>,
}

/// All trainable arrays of the classifier plus the per-array freeze mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet<S> {
    arrays: Vec<NamedArray<S>>,
    frozen: Vec<bool>,
    layers: usize,
}

// Global array indices.
pub(crate) const PATCH_EMBED: usize = 0;
pub(crate) const CLASS_TOKEN: usize = 1;
pub(crate) const POS_EMBED: usize = 2;
pub(crate) const PER_LAYER: usize = 16;

// Offsets within one encoder layer's block of arrays.
pub(crate) const LN1_SCALE: usize = 0;
pub(crate) const LN1_SHIFT: usize = 1;
pub(crate) const ATTN_WQ: usize = 2;
pub(crate) const ATTN_BQ: usize = 3;
pub(crate) const ATTN_WK: usize = 4;
pub(crate) const ATTN_BK: usize = 5;
pub(crate) const ATTN_WV: usize = 6;
pub(crate) const ATTN_BV: usize = 7;
pub(crate) const ATTN_WO: usize = 8;
pub(crate) const ATTN_BO: usize = 9;
pub(crate) const LN2_SCALE: usize = 10;
pub(crate) const LN2_SHIFT: usize = 11;
pub(crate) const MLP_W1: usize = 12;
pub(crate) const MLP_B1: usize = 13;
pub(crate) const MLP_W2: usize = 14;
pub(crate) const MLP_B2: usize = 15;

// Offsets within the tail block after the encoder layers.
pub(crate) const FINAL_LN_SCALE: usize = 0;
pub(crate) const FINAL_LN_SHIFT: usize = 1;
pub(crate) const HEAD_WEIGHT: usize = 2;
pub(crate) const HEAD_BIAS: usize = 3;

pub(crate) fn layer_index(layer: usize, offset: usize) -> usize {
    3 + PER_LAYER * layer + offset
}

pub(crate) fn tail_index(layers: usize, offset: usize) -> usize {
    3 + PER_LAYER * layers + offset
}

/// Truncated normal: standard normal resampled until `|z| <= 2`, scaled.
fn trunc_normal<S: Scalar>(rng: &mut ChaCha8Rng, std: f64) -> S {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() <= 2.0 {
            return lit(z * std);
        }
    }
}

impl<S: Scalar> ParameterSet<S> {
    /// Array names and shapes for a configuration, in storage order.
    fn layout(cfg: &ViTConfig) -> Vec<(String, (usize, usize))> {
        let d = cfg.embed_dim;
        let mut out = vec![
            ("patch_embed".to_string(), (cfg.patch_dim(), d)),
            ("class_token".to_string(), (1, d)),
            ("pos_embed".to_string(), (cfg.n_tokens(), d)),
        ];
        for l in 0..cfg.layers {
            let base = format!("layers.{l}");
            out.push((format!("{base}.ln1.scale"), (1, d)));
            out.push((format!("{base}.ln1.shift"), (1, d)));
            out.push((format!("{base}.attn.wq"), (d, d)));
            out.push((format!("{base}.attn.bq"), (1, d)));
            out.push((format!("{base}.attn.wk"), (d, d)));
            out.push((format!("{base}.attn.bk"), (1, d)));
            out.push((format!("{base}.attn.wv"), (d, d)));
            out.push((format!("{base}.attn.bv"), (1, d)));
            out.push((format!("{base}.attn.wo"), (d, d)));
            out.push((format!("{base}.attn.bo"), (1, d)));
            out.push((format!("{base}.ln2.scale"), (1, d)));
            out.push((format!("{base}.ln2.shift"), (1, d)));
            out.push((format!("{base}.mlp.w1"), (d, cfg.mlp_dim)));
            out.push((format!("{base}.mlp.b1"), (1, cfg.mlp_dim)));
            out.push((format!("{base}.mlp.w2"), (cfg.mlp_dim, d)));
            out.push((format!("{base}.mlp.b2"), (1, d)));
        }
        out.push(("final_ln.scale".to_string(), (1, d)));
        out.push(("final_ln.shift".to_string(), (1, d)));
        out.push(("head.weight".to_string(), (d, cfg.n_classes)));
        out.push(("head.bias".to_string(), (1, cfg.n_classes)));
        out
    }

    /// All-zero arrays in the canonical layout.
    pub fn zeros(cfg: &ViTConfig) -> Self {
        let arrays: Vec<NamedArray<S>> = Self::layout(cfg)
            .into_iter()
            .map(|(name, shape)| NamedArray { name, data: Array2::zeros(shape) })
            .collect();
        let frozen = vec![false; arrays.len()];
        ParameterSet { arrays, frozen, layers: cfg.layers }
    }

    /// Standard initialization: truncated normal (std 0.02) for the patch
    /// projection, positional embeddings, and all attention/MLP weights;
    /// ones for layer-norm scales; zeros for every bias, the class token,
    /// and the classifier head. Each array draws from its own child stream
    /// of the seed, so initialization parallelizes deterministically.
    pub fn init(cfg: &ViTConfig, seed: u64) -> Self {
        let mut set = Self::zeros(cfg);
        set.arrays.par_iter_mut().enumerate().for_each(|(index, entry)| {
            let name = entry.name.as_str();
            if name.ends_with("ln1.scale")
                || name.ends_with("ln2.scale")
                || name == "final_ln.scale"
            {
                entry.data.fill(S::one());
            } else if name == "patch_embed"
                || name == "pos_embed"
                || name.contains(".attn.w")
                || name.contains(".mlp.w")
            {
                let mut rng = seed_rng(derive_seed(seed, &[index as u64]));
                entry.data.mapv_inplace(|_| trunc_normal(&mut rng, 0.02));
            }
        });
        set
    }

    /// Every array random (truncated normal with the given std), layer-norm
    /// scales centered on 1. Used by gradient checks, where gradients must
    /// flow through every parameter including the head.
    pub fn init_full_random(cfg: &ViTConfig, seed: u64, std: f64) -> Self {
        let mut set = Self::zeros(cfg);
        set.arrays.par_iter_mut().enumerate().for_each(|(index, entry)| {
            let is_ln_scale = entry.name.ends_with("ln1.scale")
                || entry.name.ends_with("ln2.scale")
                || entry.name == "final_ln.scale";
            let mut rng = seed_rng(derive_seed(seed, &[index as u64]));
            entry.data.mapv_inplace(|_| {
                let v: S = trunc_normal(&mut rng, std);
                if is_ln_scale {
                    v + S::one()
                } else {
                    v
                }
            });
        });
        set
    }

    pub fn n_arrays(&self) -> usize {
        self.arrays.len()
    }

    pub fn n_layers(&self) -> usize {
        self.layers
    }

    /// Total scalar element count.
    pub fn n_elements(&self) -> usize {
        self.arrays.iter().map(|a| a.data.len()).sum()
    }

    pub fn arr(&self, index: usize) -> &Array2<S> {
        &self.arrays[index].data
    }

    pub fn arr_mut(&mut self, index: usize) -> &mut Array2<S> {
        &mut self.arrays[index].data
    }

    pub fn name(&self, index: usize) -> &str {
        &self.arrays[index].name
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.arrays.iter().position(|a| a.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Array2<S>> {
        self.index_of(name).map(|i| self.arr(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<S>)> {
        self.arrays.iter().map(|a| (a.name.as_str(), &a.data))
    }

    pub fn is_frozen(&self, index: usize) -> bool {
        self.frozen[index]
    }

    pub fn any_frozen(&self) -> bool {
        self.frozen.iter().any(|&f| f)
    }

    pub fn set_frozen_by_name(&mut self, name: &str, frozen: bool) -> Result<(), VitError> {
        let idx = self
            .index_of(name)
            .ok_or_else(|| VitError::ShapeError(format!("no parameter named '{name}'")))?;
        self.frozen[idx] = frozen;
        Ok(())
    }

    /// Freeze every array whose name is not in `keep`.
    pub fn freeze_all_except(&mut self, keep: &[&str]) {
        for (i, entry) in self.arrays.iter().enumerate() {
            self.frozen[i] = !keep.contains(&entry.name.as_str());
        }
    }

    pub fn unfreeze_all(&mut self) {
        self.frozen.iter_mut().for_each(|f| *f = false);
    }

    pub fn frozen_names(&self) -> Vec<String> {
        self.arrays
            .iter()
            .zip(&self.frozen)
            .filter(|(_, &f)| f)
            .map(|(a, _)| a.name.clone())
            .collect()
    }

    /// Same layout, all values zero, nothing frozen. The shape source for
    /// gradient and moment sets.
    pub fn zeros_like(&self) -> Self {
        ParameterSet {
            arrays: self
                .arrays
                .iter()
                .map(|a| NamedArray { name: a.name.clone(), data: Array2::zeros(a.data.dim()) })
                .collect(),
            frozen: vec![false; self.arrays.len()],
            layers: self.layers,
        }
    }

    /// Verify that this set has exactly the layout the config demands.
    pub fn check_config(&self, cfg: &ViTConfig) -> Result<(), VitError> {
        let layout = Self::layout(cfg);
        if layout.len() != self.arrays.len() {
            return Err(VitError::ShapeError(format!(
                "parameter set has {} arrays, config expects {}",
                self.arrays.len(),
                layout.len()
            )));
        }
        for (entry, (name, shape)) in self.arrays.iter().zip(layout) {
            if entry.name != name || entry.data.dim() != shape {
                return Err(VitError::ShapeError(format!(
                    "array '{}' {:?} does not match expected '{}' {:?}",
                    entry.name,
                    entry.data.dim(),
                    name,
                    shape
                )));
            }
        }
        Ok(())
    }

    /// Convert element type, e.g. `f32` parameters to `f64` for oracles.
    pub fn convert<T: Scalar>(&self) -> ParameterSet<T> {
        ParameterSet {
            arrays: self
                .arrays
                .iter()
                .map(|a| NamedArray {
                    name: a.name.clone(),
                    data: a.data.mapv(|v| T::from_f64(v.to_f64().unwrap()).unwrap()),
                })
                .collect(),
            frozen: self.frozen.clone(),
            layers: self.layers,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_matches_config() {
        let cfg = ViTConfig::tiny(2);
        let p = ParameterSet::<f64>::zeros(&cfg);
        assert_eq!(p.n_arrays(), 3 + 16 + 4);
        assert!(p.check_config(&cfg).is_ok());
        assert_eq!(p.get("patch_embed").unwrap().dim(), (48, 8));
        assert_eq!(p.get("pos_embed").unwrap().dim(), (5, 8));
        assert_eq!(p.get("layers.0.mlp.w1").unwrap().dim(), (8, 16));
        assert_eq!(p.get("head.weight").unwrap().dim(), (8, 2));

        let other = ViTConfig::tiny(3);
        assert!(p.check_config(&other).is_err());
    }

    #[test]
    fn init_is_seeded_and_structured() {
        let cfg = ViTConfig::tiny(2);
        let a = ParameterSet::<f32>::init(&cfg, 5);
        let b = ParameterSet::<f32>::init(&cfg, 5);
        assert_eq!(a, b);
        let c = ParameterSet::<f32>::init(&cfg, 6);
        assert_ne!(a, c);

        assert!(a.get("layers.0.ln1.scale").unwrap().iter().all(|&v| v == 1.0));
        assert!(a.get("class_token").unwrap().iter().all(|&v| v == 0.0));
        assert!(a.get("head.weight").unwrap().iter().all(|&v| v == 0.0));
        assert!(a.get("patch_embed").unwrap().iter().any(|&v| v != 0.0));
        assert!(a.get("patch_embed").unwrap().iter().all(|&v| v.abs() <= 0.04));
    }

    #[test]
    fn freeze_mask_selection() {
        let cfg = ViTConfig::tiny(2);
        let mut p = ParameterSet::<f32>::init(&cfg, 0);
        p.freeze_all_except(&["head.weight", "head.bias"]);
        let frozen = p.frozen_names();
        assert_eq!(frozen.len(), p.n_arrays() - 2);
        assert!(!frozen.contains(&"head.weight".to_string()));
        assert!(frozen.contains(&"patch_embed".to_string()));
        p.unfreeze_all();
        assert!(!p.any_frozen());
    }
}

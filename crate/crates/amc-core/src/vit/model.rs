//! Forward pass: patch extraction, embedding, pre-norm encoder layers with
//! multi-head self-attention and a GELU MLP, and the classification head.
//!
//! Every stage that backpropagation needs is cached per sample; the
//! backward pass lives in `backward.rs`.

use crate::rng::{derive_seed, seed_rng};
use crate::scalar::{lit, Scalar};
use crate::vit::params::{
    layer_index, tail_index, ParameterSet, ATTN_BK, ATTN_BO, ATTN_BQ, ATTN_BV, ATTN_WK, ATTN_WO,
    ATTN_WQ, ATTN_WV, CLASS_TOKEN, FINAL_LN_SCALE, FINAL_LN_SHIFT, HEAD_BIAS, HEAD_WEIGHT,
    LN1_SCALE, LN1_SHIFT, LN2_SCALE, LN2_SHIFT, MLP_B1, MLP_B2, MLP_W1, MLP_W2, PATCH_EMBED,
    POS_EMBED,
};
use crate::vit::{Batch, ViTConfig, VitError};
use ndarray::{s, Array1, Array2, ArrayView3, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Layer-norm variance epsilon.
pub const LN_EPS: f64 = 1e-6;

/// Whether dropout is active. Training mode carries the seed that makes the
/// dropout masks reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    Eval,
    Train { dropout_seed: u64 },
}

/// Exact GELU: `u * Phi(u)` with the standard normal CDF via erf.
pub fn gelu<S: Scalar>(u: S) -> S {
    u * gelu_cdf(u)
}

pub(crate) fn gelu_cdf<S: Scalar>(u: S) -> S {
    let half: S = lit(0.5);
    let inv_sqrt2: S = lit(std::f64::consts::FRAC_1_SQRT_2);
    half * (S::one() + (u * inv_sqrt2).erf())
}

/// Derivative of exact GELU: `Phi(u) + u * phi(u)`.
pub(crate) fn gelu_prime<S: Scalar>(u: S) -> S {
    let inv_sqrt_2pi: S = lit(1.0 / (2.0 * std::f64::consts::PI).sqrt());
    gelu_cdf(u) + u * inv_sqrt_2pi * (-u * u * lit::<S>(0.5)).exp()
}

/// Row-wise softmax with max subtraction.
pub(crate) fn softmax_rows<S: Scalar>(x: &Array2<S>) -> Array2<S> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(S::neg_infinity(), S::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

pub(crate) struct LnCache<S> {
    /// Normalized input `(x - mean) / sqrt(var + eps)`.
    pub normed: Array2<S>,
    /// Per-row `1 / sqrt(var + eps)`.
    pub inv_std: Array1<S>,
    /// `scale * normed + shift`, the values consumed downstream.
    pub out: Array2<S>,
}

pub(crate) fn ln_forward<S: Scalar>(
    x: &Array2<S>,
    scale: &Array2<S>,
    shift: &Array2<S>,
) -> LnCache<S> {
    let eps: S = lit(LN_EPS);
    let mean = x.mean_axis(Axis(1)).unwrap();
    let centered = x - &mean.insert_axis(Axis(1));
    let var = centered.mapv(|v| v * v).mean_axis(Axis(1)).unwrap();
    let inv_std = var.mapv(|v| (v + eps).sqrt().recip());
    let normed = &centered * &inv_std.clone().insert_axis(Axis(1));
    let out = &normed * &scale.row(0) + &shift.row(0);
    LnCache { normed, inv_std, out }
}

pub(crate) struct AttnCache<S> {
    pub q: Array2<S>,
    pub k: Array2<S>,
    pub v: Array2<S>,
    /// Softmax attention weights, one `T x T` matrix per head.
    pub weights: Vec<Array2<S>>,
    /// Head outputs concatenated, before the output projection.
    pub concat: Array2<S>,
}

pub(crate) fn mhsa_forward<S: Scalar>(
    x_ln: &Array2<S>,
    params: &ParameterSet<S>,
    layer: usize,
    heads: usize,
) -> (Array2<S>, AttnCache<S>) {
    let idx = |off| layer_index(layer, off);
    let q = x_ln.dot(params.arr(idx(ATTN_WQ))) + &params.arr(idx(ATTN_BQ)).row(0);
    let k = x_ln.dot(params.arr(idx(ATTN_WK))) + &params.arr(idx(ATTN_BK)).row(0);
    let v = x_ln.dot(params.arr(idx(ATTN_WV))) + &params.arr(idx(ATTN_BV)).row(0);

    let (tokens, dim) = q.dim();
    let head_dim = dim / heads;
    let scale: S = lit(1.0 / (head_dim as f64).sqrt());

    let mut weights = Vec::with_capacity(heads);
    let mut concat = Array2::zeros((tokens, dim));
    for h in 0..heads {
        let cols = s![.., h * head_dim..(h + 1) * head_dim];
        let qh = q.slice(cols);
        let kh = k.slice(cols);
        let vh = v.slice(cols);
        let scores = qh.dot(&kh.t()).mapv(|s| s * scale);
        let a = softmax_rows(&scores);
        concat.slice_mut(cols).assign(&a.dot(&vh));
        weights.push(a);
    }

    let out = concat.dot(params.arr(idx(ATTN_WO))) + &params.arr(idx(ATTN_BO)).row(0);
    (out, AttnCache { q, k, v, weights, concat })
}

pub(crate) struct LayerCache<S> {
    pub ln1: LnCache<S>,
    pub attn: AttnCache<S>,
    pub attn_mask: Option<Array2<S>>,
    pub ln2: LnCache<S>,
    /// MLP pre-activation `ln2.out * w1 + b1`.
    pub pre_act: Array2<S>,
    pub gelu_out: Array2<S>,
    pub mlp_mask: Option<Array2<S>>,
}

pub(crate) struct SampleCache<S> {
    pub patches: Array2<S>,
    pub embed_mask: Option<Array2<S>>,
    pub layers: Vec<LayerCache<S>>,
    pub final_ln: LnCache<S>,
    pub logits: Array1<S>,
}

fn dropout_mask<S: Scalar>(dim: (usize, usize), p: f64, rng: &mut ChaCha8Rng) -> Array2<S> {
    let keep: S = lit(1.0 / (1.0 - p));
    let mut mask = Array2::zeros(dim);
    mask.mapv_inplace(|_| if rng.gen::<f64>() < p { S::zero() } else { keep });
    mask
}

fn layer_forward<S: Scalar>(
    x: &Array2<S>,
    params: &ParameterSet<S>,
    layer: usize,
    cfg: &ViTConfig,
    dropout: &mut Option<&mut ChaCha8Rng>,
) -> (Array2<S>, LayerCache<S>) {
    let idx = |off| layer_index(layer, off);

    let ln1 = ln_forward(x, params.arr(idx(LN1_SCALE)), params.arr(idx(LN1_SHIFT)));
    let (mut attn_out, attn) = mhsa_forward(&ln1.out, params, layer, cfg.heads);
    let attn_mask = dropout.as_mut().map(|rng| {
        let mask = dropout_mask(attn_out.dim(), cfg.dropout, rng);
        attn_out = &attn_out * &mask;
        mask
    });
    let u = x + &attn_out;

    let ln2 = ln_forward(&u, params.arr(idx(LN2_SCALE)), params.arr(idx(LN2_SHIFT)));
    let pre_act = ln2.out.dot(params.arr(idx(MLP_W1))) + &params.arr(idx(MLP_B1)).row(0);
    let gelu_out = pre_act.mapv(gelu);
    let mut mlp_out = gelu_out.dot(params.arr(idx(MLP_W2))) + &params.arr(idx(MLP_B2)).row(0);
    let mlp_mask = dropout.as_mut().map(|rng| {
        let mask = dropout_mask(mlp_out.dim(), cfg.dropout, rng);
        mlp_out = &mlp_out * &mask;
        mask
    });
    let out = &u + &mlp_out;

    (out, LayerCache { ln1, attn, attn_mask, ln2, pre_act, gelu_out, mlp_mask })
}

/// Full forward over one sample's patch matrix, returning the logits and
/// the caches the backward pass consumes.
pub(crate) fn forward_sample_cached<S: Scalar>(
    patches: Array2<S>,
    params: &ParameterSet<S>,
    cfg: &ViTConfig,
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> (Array1<S>, SampleCache<S>) {
    // Dropout with probability zero is the identity; skip mask generation.
    let mut dropout = if cfg.dropout > 0.0 { dropout_rng.take() } else { None };

    let mut z = embed_inner(&patches, params);
    let embed_mask = dropout.as_mut().map(|rng| {
        let mask = dropout_mask(z.dim(), cfg.dropout, rng);
        z = &z * &mask;
        mask
    });

    let mut layers = Vec::with_capacity(cfg.layers);
    for l in 0..cfg.layers {
        let (next, cache) = layer_forward(&z, params, l, cfg, &mut dropout);
        z = next;
        layers.push(cache);
    }

    let final_ln = ln_forward(
        &z,
        params.arr(tail_index(cfg.layers, FINAL_LN_SCALE)),
        params.arr(tail_index(cfg.layers, FINAL_LN_SHIFT)),
    );
    let cls = final_ln.out.row(0);
    let logits = cls.dot(params.arr(tail_index(cfg.layers, HEAD_WEIGHT)))
        + &params.arr(tail_index(cfg.layers, HEAD_BIAS)).row(0);

    (logits.clone(), SampleCache { patches, embed_mask, layers, final_ln, logits })
}

fn embed_inner<S: Scalar>(patches: &Array2<S>, params: &ParameterSet<S>) -> Array2<S> {
    let projected = patches.dot(params.arr(PATCH_EMBED));
    let (n, d) = projected.dim();
    let pos = params.arr(POS_EMBED);
    let mut z = Array2::zeros((n + 1, d));
    z.row_mut(0).assign(&(&params.arr(CLASS_TOKEN).row(0) + &pos.row(0)));
    for i in 0..n {
        z.row_mut(i + 1).assign(&(&projected.row(i) + &pos.row(i + 1)));
    }
    z
}

/// Split an image (`C x H x W`) into flattened patch vectors: row `n` is
/// patch `n` in row-major patch order, flattened channel-major, length
/// `P^2 * C`.
pub fn patchify<S: Scalar>(image: ArrayView3<S>, patch: usize) -> Result<Array2<S>, VitError> {
    let (c, h, w) = image.dim();
    if patch == 0 || h % patch != 0 || w % patch != 0 {
        return Err(VitError::ShapeError(format!(
            "image {c}x{h}x{w} not divisible into {patch}x{patch} patches"
        )));
    }
    let (rows, cols) = (h / patch, w / patch);
    let mut out = Array2::zeros((rows * cols, patch * patch * c));
    for pr in 0..rows {
        for pc in 0..cols {
            let row = pr * cols + pc;
            for ch in 0..c {
                for py in 0..patch {
                    for px in 0..patch {
                        out[[row, ch * patch * patch + py * patch + px]] =
                            image[[ch, pr * patch + py, pc * patch + px]];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Embed patch vectors into the token sequence `z_0`: the learned class
/// token plus position 0 first, then each projected patch plus its
/// positional embedding.
pub fn embed<S: Scalar>(
    patches: &Array2<S>,
    params: &ParameterSet<S>,
) -> Result<Array2<S>, VitError> {
    let (n, pd) = patches.dim();
    let e = params.arr(PATCH_EMBED);
    if e.nrows() != pd {
        return Err(VitError::ShapeError(format!(
            "patch vectors of length {pd} vs projection expecting {}",
            e.nrows()
        )));
    }
    if params.arr(POS_EMBED).nrows() != n + 1 {
        return Err(VitError::ShapeError(format!(
            "{} patches vs positional table for {} tokens",
            n,
            params.arr(POS_EMBED).nrows()
        )));
    }
    Ok(embed_inner(patches, params))
}

/// Multi-head self-attention of one encoder layer (no residual).
pub fn attention<S: Scalar>(
    x: &Array2<S>,
    params: &ParameterSet<S>,
    layer: usize,
    heads: usize,
) -> Result<Array2<S>, VitError> {
    check_attention_shapes(x, params, layer, heads)?;
    Ok(mhsa_forward(x, params, layer, heads).0)
}

/// The per-head softmax attention matrices for one layer, for inspection.
pub fn attention_weights<S: Scalar>(
    x: &Array2<S>,
    params: &ParameterSet<S>,
    layer: usize,
    heads: usize,
) -> Result<Vec<Array2<S>>, VitError> {
    check_attention_shapes(x, params, layer, heads)?;
    Ok(mhsa_forward(x, params, layer, heads).1.weights)
}

fn check_attention_shapes<S: Scalar>(
    x: &Array2<S>,
    params: &ParameterSet<S>,
    layer: usize,
    heads: usize,
) -> Result<(), VitError> {
    if layer >= params.n_layers() {
        return Err(VitError::ShapeError(format!(
            "layer {layer} out of range for {} layers",
            params.n_layers()
        )));
    }
    let d = params.arr(layer_index(layer, ATTN_WQ)).nrows();
    if x.ncols() != d {
        return Err(VitError::ShapeError(format!(
            "tokens of width {} vs attention dimension {d}",
            x.ncols()
        )));
    }
    if heads == 0 || d % heads != 0 {
        return Err(VitError::ShapeError(format!("dimension {d} not divisible by {heads} heads")));
    }
    Ok(())
}

/// One pre-norm encoder block in evaluation mode:
/// `x + MHSA(LN(x))`, then `+ MLP(LN(.))` with exact GELU.
pub fn encoder_layer<S: Scalar>(
    x: &Array2<S>,
    params: &ParameterSet<S>,
    layer: usize,
    cfg: &ViTConfig,
) -> Result<Array2<S>, VitError> {
    check_attention_shapes(x, params, layer, cfg.heads)?;
    Ok(layer_forward(x, params, layer, cfg, &mut None).0)
}

/// Forward over a batch: `B x n_classes` logits. Dropout only acts in
/// training mode, seeded per sample for reproducibility.
pub fn forward<S: Scalar>(
    batch: &Batch<S>,
    params: &ParameterSet<S>,
    cfg: &ViTConfig,
    mode: ForwardMode,
) -> Result<Array2<S>, VitError> {
    cfg.validate()?;
    params.check_config(cfg)?;
    batch.validate(cfg)?;

    let rows: Vec<Array1<S>> = (0..batch.len())
        .into_par_iter()
        .map(|i| {
            let patches = patchify(batch.images.index_axis(Axis(0), i), cfg.patch)
                .expect("batch validated against config");
            let mut rng;
            let dropout_rng = match mode {
                ForwardMode::Eval => None,
                ForwardMode::Train { dropout_seed } => {
                    rng = seed_rng(derive_seed(dropout_seed, &[i as u64]));
                    Some(&mut rng)
                }
            };
            forward_sample_cached(patches, params, cfg, dropout_rng).0
        })
        .collect();

    let mut logits = Array2::zeros((batch.len(), cfg.n_classes));
    for (i, row) in rows.into_iter().enumerate() {
        logits.row_mut(i).assign(&row);
    }
    Ok(logits)
}

/// Evaluation-mode forward over one patch matrix. Exposed for the
/// permutation-equivariance and oracle tests.
pub fn forward_sample<S: Scalar>(
    patches: Array2<S>,
    params: &ParameterSet<S>,
    cfg: &ViTConfig,
) -> Result<Array1<S>, VitError> {
    cfg.validate()?;
    params.check_config(cfg)?;
    if patches.dim() != (cfg.n_patches(), cfg.patch_dim()) {
        return Err(VitError::ShapeError(format!(
            "patch matrix {:?}, config expects {:?}",
            patches.dim(),
            (cfg.n_patches(), cfg.patch_dim())
        )));
    }
    Ok(forward_sample_cached(patches, params, cfg, None).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vit::params::tail_index;
    use ndarray::{Array3, Array4};
    use rand::Rng;

    fn random_array<S: Scalar>(rng: &mut ChaCha8Rng, dim: (usize, usize)) -> Array2<S> {
        let mut a = Array2::zeros(dim);
        a.mapv_inplace(|_| lit(rng.gen_range(-1.0..1.0)));
        a
    }

    #[test]
    fn patchify_shapes() {
        let image = Array3::<f64>::zeros((3, 224, 224));
        let p = patchify(image.view(), 16).unwrap();
        assert_eq!(p.dim(), (196, 768));

        let image = Array3::<f64>::zeros((3, 32, 32));
        let p = patchify(image.view(), 8).unwrap();
        assert_eq!(p.dim(), (16, 192));

        assert!(patchify(image.view(), 5).is_err());
    }

    #[test]
    fn patchify_constant_image_rows_identical() {
        let image = Array3::<f64>::from_elem((3, 16, 16), 0.37);
        let p = patchify(image.view(), 4).unwrap();
        let first = p.row(0).to_owned();
        for row in p.rows() {
            assert_eq!(row, first.view());
        }
    }

    #[test]
    fn patchify_channel_major_layout() {
        // Distinct value per (channel, y, x); check one patch explicitly.
        let mut image = Array3::<f64>::zeros((2, 4, 4));
        for ch in 0..2 {
            for y in 0..4 {
                for x in 0..4 {
                    image[[ch, y, x]] = (ch * 100 + y * 10 + x) as f64;
                }
            }
        }
        let p = patchify(image.view(), 2).unwrap();
        // Patch 1 is rows 0..2, cols 2..4. Channel-major flattening.
        assert_eq!(p[[1, 0]], 2.0); // ch0, y0, x2
        assert_eq!(p[[1, 1]], 3.0); // ch0, y0, x3
        assert_eq!(p[[1, 2]], 12.0); // ch0, y1, x2
        assert_eq!(p[[1, 4]], 102.0); // ch1, y0, x2
    }

    #[test]
    fn embed_zero_patches_is_class_token() {
        let cfg = ViTConfig::tiny(2);
        let mut params = ParameterSet::<f64>::zeros(&cfg);
        params.arr_mut(CLASS_TOKEN).fill(0.5);
        let patches = Array2::zeros((cfg.n_patches(), cfg.patch_dim()));
        let z = embed(&patches, &params).unwrap();
        assert!(z.row(0).iter().all(|&v| v == 0.5));
        assert!(z.slice(s![1.., ..]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn embed_identity_projection_passes_patches_through() {
        // patch_dim == embed_dim so E can be the identity.
        let cfg = ViTConfig {
            image_hw: (4, 4),
            channels: 2,
            patch: 2,
            embed_dim: 8,
            layers: 1,
            heads: 2,
            mlp_dim: 4,
            n_classes: 2,
            dropout: 0.0,
        };
        let mut params = ParameterSet::<f64>::zeros(&cfg);
        params.arr_mut(PATCH_EMBED).assign(&Array2::eye(8));
        let mut rng = seed_rng(1);
        let patches = random_array::<f64>(&mut rng, (cfg.n_patches(), cfg.patch_dim()));
        let z = embed(&patches, &params).unwrap();
        for i in 0..cfg.n_patches() {
            assert_eq!(z.row(i + 1), patches.row(i));
        }
    }

    #[test]
    fn embed_matches_naive_matmul_oracle() {
        let cfg = ViTConfig::tiny(2);
        let params = ParameterSet::<f64>::init_full_random(&cfg, 7, 0.5);
        let mut rng = seed_rng(2);
        let patches = random_array::<f64>(&mut rng, (cfg.n_patches(), cfg.patch_dim()));
        let z = embed(&patches, &params).unwrap();

        let e = params.get("patch_embed").unwrap();
        let pos = params.get("pos_embed").unwrap();
        let cls = params.get("class_token").unwrap();
        for d in 0..cfg.embed_dim {
            let want = cls[[0, d]] + pos[[0, d]];
            assert!((z[[0, d]] - want).abs() < 1e-12);
        }
        for n in 0..cfg.n_patches() {
            for d in 0..cfg.embed_dim {
                let mut acc = 0.0;
                for j in 0..cfg.patch_dim() {
                    acc += patches[[n, j]] * e[[j, d]];
                }
                acc += pos[[n + 1, d]];
                assert!((z[[n + 1, d]] - acc).abs() < 1e-12, "token {n} dim {d}");
            }
        }
    }

    #[test]
    fn single_token_attention_is_projected_value() {
        let cfg = ViTConfig::tiny(2);
        let params = ParameterSet::<f64>::init_full_random(&cfg, 3, 0.3);
        let mut rng = seed_rng(4);
        let x = random_array::<f64>(&mut rng, (1, cfg.embed_dim));
        let out = attention(&x, &params, 0, cfg.heads).unwrap();

        let weights = attention_weights(&x, &params, 0, cfg.heads).unwrap();
        for w in &weights {
            assert_eq!(w.dim(), (1, 1));
            assert!((w[[0, 0]] - 1.0).abs() < 1e-15);
        }
        // With a single key the output is V * W_o + b_o.
        let v = x.dot(params.get("layers.0.attn.wv").unwrap())
            + &params.get("layers.0.attn.bv").unwrap().row(0);
        let want = v.dot(params.get("layers.0.attn.wo").unwrap())
            + &params.get("layers.0.attn.bo").unwrap().row(0);
        for (a, b) in out.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_scores_give_uniform_attention() {
        let cfg = ViTConfig::tiny(2);
        let mut params = ParameterSet::<f64>::init_full_random(&cfg, 5, 0.3);
        // Zero query projection makes all scores equal.
        params.arr_mut(layer_index(0, ATTN_WQ)).fill(0.0);
        params.arr_mut(layer_index(0, ATTN_BQ)).fill(0.0);
        let mut rng = seed_rng(6);
        let tokens = 5;
        let x = random_array::<f64>(&mut rng, (tokens, cfg.embed_dim));
        let weights = attention_weights(&x, &params, 0, cfg.heads).unwrap();
        for w in &weights {
            for &a in w {
                assert!((a - 1.0 / tokens as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn attention_matches_per_head_loop_oracle() {
        let cfg = ViTConfig::tiny(2);
        let params = ParameterSet::<f64>::init_full_random(&cfg, 8, 0.4);
        let mut rng = seed_rng(9);
        let tokens = 4;
        let d = cfg.embed_dim;
        let heads = cfg.heads;
        let hd = d / heads;
        let x = random_array::<f64>(&mut rng, (tokens, d));
        let out = attention(&x, &params, 0, heads).unwrap();

        // Explicit loop oracle.
        let wq = params.get("layers.0.attn.wq").unwrap();
        let wk = params.get("layers.0.attn.wk").unwrap();
        let wv = params.get("layers.0.attn.wv").unwrap();
        let wo = params.get("layers.0.attn.wo").unwrap();
        let bq = params.get("layers.0.attn.bq").unwrap();
        let bk = params.get("layers.0.attn.bk").unwrap();
        let bv = params.get("layers.0.attn.bv").unwrap();
        let bo = params.get("layers.0.attn.bo").unwrap();
        let project = |w: &Array2<f64>, b: &Array2<f64>| {
            let mut p = Array2::<f64>::zeros((tokens, d));
            for t in 0..tokens {
                for j in 0..d {
                    let mut acc = b[[0, j]];
                    for i in 0..d {
                        acc += x[[t, i]] * w[[i, j]];
                    }
                    p[[t, j]] = acc;
                }
            }
            p
        };
        let (q, k, v) = (project(wq, bq), project(wk, bk), project(wv, bv));
        let mut concat = Array2::<f64>::zeros((tokens, d));
        for h in 0..heads {
            for t in 0..tokens {
                let mut scores = vec![0.0; tokens];
                for t2 in 0..tokens {
                    let mut dot = 0.0;
                    for j in 0..hd {
                        dot += q[[t, h * hd + j]] * k[[t2, h * hd + j]];
                    }
                    scores[t2] = dot / (hd as f64).sqrt();
                }
                let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
                let sum: f64 = exps.iter().sum();
                for j in 0..hd {
                    let mut acc = 0.0;
                    for t2 in 0..tokens {
                        acc += exps[t2] / sum * v[[t2, h * hd + j]];
                    }
                    concat[[t, h * hd + j]] = acc;
                }
            }
        }
        for t in 0..tokens {
            for j in 0..d {
                let mut acc = bo[[0, j]];
                for i in 0..d {
                    acc += concat[[t, i]] * wo[[i, j]];
                }
                assert!((out[[t, j]] - acc).abs() < 1e-10, "token {t} dim {j}");
            }
        }
    }

    #[test]
    fn softmax_rows_sum_to_one_both_precisions() {
        let mut rng = seed_rng(13);
        for _ in 0..20 {
            let x64 = random_array::<f64>(&mut rng, (6, 6));
            for row in softmax_rows(&x64).rows() {
                assert!((row.sum() - 1.0).abs() < 1e-12);
            }
            let x32 = x64.mapv(|v| v as f32);
            for row in softmax_rows(&x32).rows() {
                assert!((row.sum() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn gelu_known_values() {
        assert_eq!(gelu(0.0f64), 0.0);
        // GELU(1) = Phi(1) = 0.5 (1 + erf(1/sqrt 2)).
        let phi1 = 0.5 * (1.0 + (1.0 / 2.0f64.sqrt()).erf());
        assert!((gelu(1.0f64) - phi1).abs() < 1e-15);
        assert!((gelu(1.0f64) - 0.841345).abs() < 1e-6);
        // Odd-ish tails: large negative inputs vanish.
        assert!(gelu(-10.0f64).abs() < 1e-12);
    }

    #[test]
    fn zero_weight_layer_is_identity() {
        let cfg = ViTConfig::tiny(2);
        let params = ParameterSet::<f64>::zeros(&cfg);
        let mut rng = seed_rng(14);
        let x = random_array::<f64>(&mut rng, (cfg.n_tokens(), cfg.embed_dim));
        let y = encoder_layer(&x, &params, 0, &cfg).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn forward_logit_shape_and_eval_determinism() {
        let cfg = ViTConfig::tiny(10);
        let params = ParameterSet::<f32>::init_full_random(&cfg, 1, 0.2);
        let mut images = Array4::<f32>::zeros((3, 3, 8, 8));
        let mut rng = seed_rng(15);
        images.mapv_inplace(|_| rng.gen_range(0.0..1.0));
        // Duplicate image 0 into slot 2.
        let first = images.index_axis(Axis(0), 0).to_owned();
        images.index_axis_mut(Axis(0), 2).assign(&first);

        let batch = Batch { images, labels: vec![0, 1, 0] };
        let logits = forward(&batch, &params, &cfg, ForwardMode::Eval).unwrap();
        assert_eq!(logits.dim(), (3, 10));
        assert!(logits.iter().all(|v| v.is_finite()));
        assert_eq!(logits.row(0), logits.row(2));
    }

    #[test]
    fn dropout_only_active_in_train_mode() {
        let mut cfg = ViTConfig::tiny(2);
        cfg.dropout = 0.5;
        let params = ParameterSet::<f32>::init_full_random(&cfg, 2, 0.2);
        let mut images = Array4::<f32>::zeros((2, 3, 8, 8));
        let mut rng = seed_rng(16);
        images.mapv_inplace(|_| rng.gen_range(0.0..1.0));
        let batch = Batch { images, labels: vec![0, 1] };

        let eval_a = forward(&batch, &params, &cfg, ForwardMode::Eval).unwrap();
        let eval_b = forward(&batch, &params, &cfg, ForwardMode::Eval).unwrap();
        assert_eq!(eval_a, eval_b);

        let train_a =
            forward(&batch, &params, &cfg, ForwardMode::Train { dropout_seed: 3 }).unwrap();
        let train_b =
            forward(&batch, &params, &cfg, ForwardMode::Train { dropout_seed: 3 }).unwrap();
        let train_c =
            forward(&batch, &params, &cfg, ForwardMode::Train { dropout_seed: 4 }).unwrap();
        assert_eq!(train_a, train_b);
        assert_ne!(train_a, train_c);
        assert_ne!(train_a, eval_a);
    }

    #[test]
    fn permuting_patches_and_positions_leaves_logits_unchanged() {
        let cfg = ViTConfig::tiny(4);
        let base = ParameterSet::<f64>::init_full_random(&cfg, 21, 0.3);
        let mut rng = seed_rng(22);
        for trial in 0..5 {
            let patches = random_array::<f64>(&mut rng, (cfg.n_patches(), cfg.patch_dim()));
            let reference = forward_sample(patches.clone(), &base, &cfg).unwrap();

            // Random permutation of patch indices.
            let mut perm: Vec<usize> = (0..cfg.n_patches()).collect();
            for i in (1..perm.len()).rev() {
                let j = rng.gen_range(0..=i);
                perm.swap(i, j);
            }
            let mut permuted_patches = patches.clone();
            let mut permuted_params = base.clone();
            for (to, &from) in perm.iter().enumerate() {
                permuted_patches.row_mut(to).assign(&patches.row(from));
                let pos_from = base.arr(POS_EMBED).row(from + 1).to_owned();
                permuted_params.arr_mut(POS_EMBED).row_mut(to + 1).assign(&pos_from);
            }
            let permuted = forward_sample(permuted_patches, &permuted_params, &cfg).unwrap();
            for (a, b) in reference.iter().zip(permuted.iter()) {
                assert!((a - b).abs() < 1e-9, "trial {trial}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn head_bias_reaches_logits() {
        let cfg = ViTConfig::tiny(3);
        let mut params = ParameterSet::<f64>::zeros(&cfg);
        let head_bias = tail_index(cfg.layers, HEAD_BIAS);
        params.arr_mut(head_bias)[[0, 2]] = 1.25;
        let patches = Array2::zeros((cfg.n_patches(), cfg.patch_dim()));
        let logits = forward_sample(patches, &params, &cfg).unwrap();
        assert_eq!(logits[2], 1.25);
        assert_eq!(logits[0], 0.0);
    }
}

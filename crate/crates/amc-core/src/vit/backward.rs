//! Cross-entropy loss and exact gradients for every parameter array.
//!
//! Backpropagation mirrors the forward caches: head, final layer norm,
//! encoder blocks in reverse (MLP, LN2, attention, LN1), then the
//! embedding. Batch gradients accumulate per-sample contributions in fixed
//! chunks so parallel execution stays bit-reproducible.

use crate::rng::{derive_seed, seed_rng};
use crate::scalar::{lit, Scalar};
use crate::vit::model::{
    forward_sample_cached, gelu_prime, patchify, AttnCache, ForwardMode, LayerCache, LnCache,
    SampleCache,
};
use crate::vit::params::{
    layer_index, tail_index, ParameterSet, ATTN_BK, ATTN_BO, ATTN_BQ, ATTN_BV, ATTN_WK, ATTN_WO,
    ATTN_WQ, ATTN_WV, CLASS_TOKEN, FINAL_LN_SCALE, FINAL_LN_SHIFT, HEAD_BIAS, HEAD_WEIGHT,
    LN1_SCALE, LN1_SHIFT, LN2_SCALE, LN2_SHIFT, MLP_B1, MLP_B2, MLP_W1, MLP_W2, PATCH_EMBED,
    POS_EMBED,
};
use crate::vit::{Batch, ViTConfig, VitError};
use ndarray::{s, Array1, Array2, Axis};
use rayon::prelude::*;

/// Samples per gradient-accumulation chunk. Fixed so that the accumulation
/// order (and therefore the floating-point result) does not depend on the
/// number of worker threads.
const GRAD_CHUNK: usize = 16;

/// Mean cross-entropy over the batch, computed with max subtraction.
pub fn cross_entropy<S: Scalar>(logits: &Array2<S>, labels: &[usize]) -> Result<S, VitError> {
    if logits.nrows() != labels.len() {
        return Err(VitError::ShapeError(format!(
            "{} logit rows vs {} labels",
            logits.nrows(),
            labels.len()
        )));
    }
    if logits.nrows() == 0 {
        return Err(VitError::ShapeError("empty batch".into()));
    }
    let mut total = S::zero();
    for (row, &label) in logits.rows().into_iter().zip(labels) {
        if label >= logits.ncols() {
            return Err(VitError::ShapeError(format!(
                "label {label} out of range for {} classes",
                logits.ncols()
            )));
        }
        let max = row.iter().copied().fold(S::neg_infinity(), S::max);
        let sum_exp: S = row.iter().map(|&v| (v - max).exp()).sum();
        total += max + sum_exp.ln() - row[label];
    }
    Ok(total / S::from_usize(labels.len()).unwrap())
}

/// Gradients of the mean cross-entropy w.r.t. every unfrozen parameter
/// array (frozen arrays receive exact zeros), plus the loss itself.
pub fn backward<S: Scalar>(
    batch: &Batch<S>,
    params: &ParameterSet<S>,
    cfg: &ViTConfig,
    mode: ForwardMode,
) -> Result<(S, ParameterSet<S>), VitError> {
    cfg.validate()?;
    params.check_config(cfg)?;
    batch.validate(cfg)?;

    let b = batch.len();
    let starts: Vec<usize> = (0..b).step_by(GRAD_CHUNK).collect();
    let partials: Vec<(S, ParameterSet<S>)> = starts
        .into_par_iter()
        .map(|start| {
            let end = (start + GRAD_CHUNK).min(b);
            let mut grads = params.zeros_like();
            let mut loss_sum = S::zero();
            for i in start..end {
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
                let (_, cache) = forward_sample_cached(patches, params, cfg, dropout_rng);
                loss_sum += backward_sample(&cache, batch.labels[i], params, cfg, &mut grads);
            }
            (loss_sum, grads)
        })
        .collect();

    let mut grads = params.zeros_like();
    let mut loss = S::zero();
    for (partial_loss, partial_grads) in partials {
        loss += partial_loss;
        for i in 0..grads.n_arrays() {
            *grads.arr_mut(i) += partial_grads.arr(i);
        }
    }

    let inv_b = S::from_usize(b).unwrap().recip();
    loss *= inv_b;
    for i in 0..grads.n_arrays() {
        if params.is_frozen(i) {
            grads.arr_mut(i).fill(S::zero());
        } else {
            grads.arr_mut(i).mapv_inplace(|g| g * inv_b);
        }
    }
    Ok((loss, grads))
}

/// Backprop for one cached sample; accumulates into `grads`, returns the
/// sample's loss.
fn backward_sample<S: Scalar>(
    cache: &SampleCache<S>,
    label: usize,
    params: &ParameterSet<S>,
    cfg: &ViTConfig,
    grads: &mut ParameterSet<S>,
) -> S {
    let tail = |off| tail_index(cfg.layers, off);

    // Softmax + cross-entropy on the logits.
    let logits = &cache.logits;
    let max = logits.iter().copied().fold(S::neg_infinity(), S::max);
    let exps = logits.mapv(|v| (v - max).exp());
    let sum = exps.sum();
    let loss = max + sum.ln() - logits[label];
    let mut d_logits = exps.mapv(|e| e / sum);
    d_logits[label] -= S::one();

    // Head: logits = cls . W + b with cls the final-LN class token.
    let cls = cache.final_ln.out.row(0).to_owned();
    *grads.arr_mut(tail(HEAD_BIAS)) += &d_logits.view().insert_axis(Axis(0));
    {
        let outer = cls
            .view()
            .insert_axis(Axis(1))
            .dot(&d_logits.view().insert_axis(Axis(0)));
        *grads.arr_mut(tail(HEAD_WEIGHT)) += &outer;
    }
    let d_cls: Array1<S> = params.arr(tail(HEAD_WEIGHT)).dot(&d_logits);

    // Final layer norm: only the class-token row carries gradient.
    let tokens = cache.final_ln.out.nrows();
    let mut d_final = Array2::zeros((tokens, cfg.embed_dim));
    d_final.row_mut(0).assign(&d_cls);
    let (mut d_z, d_scale, d_shift) =
        ln_backward(&d_final, &cache.final_ln, params.arr(tail(FINAL_LN_SCALE)));
    *grads.arr_mut(tail(FINAL_LN_SCALE)) += &d_scale;
    *grads.arr_mut(tail(FINAL_LN_SHIFT)) += &d_shift;

    for layer in (0..cfg.layers).rev() {
        d_z = layer_backward(&d_z, &cache.layers[layer], params, layer, cfg, grads);
    }

    // Embedding: z0 rows are class token + pos 0 and patch . E + pos n.
    if let Some(mask) = &cache.embed_mask {
        d_z = &d_z * mask;
    }
    *grads.arr_mut(POS_EMBED) += &d_z;
    *grads.arr_mut(CLASS_TOKEN) += &d_z.row(0).insert_axis(Axis(0));
    let d_proj = d_z.slice(s![1.., ..]);
    *grads.arr_mut(PATCH_EMBED) += &cache.patches.t().dot(&d_proj);

    loss
}

fn layer_backward<S: Scalar>(
    d_out: &Array2<S>,
    cache: &LayerCache<S>,
    params: &ParameterSet<S>,
    layer: usize,
    cfg: &ViTConfig,
    grads: &mut ParameterSet<S>,
) -> Array2<S> {
    let idx = |off| layer_index(layer, off);

    // Second residual: out = u + drop(mlp_out).
    let mut d_mlp_out = d_out.clone();
    if let Some(mask) = &cache.mlp_mask {
        d_mlp_out = &d_mlp_out * mask;
    }
    // MLP: mlp_out = gelu(pre) . W2 + b2, pre = ln2.out . W1 + b1.
    *grads.arr_mut(idx(MLP_B2)) += &d_mlp_out.sum_axis(Axis(0)).insert_axis(Axis(0));
    *grads.arr_mut(idx(MLP_W2)) += &cache.gelu_out.t().dot(&d_mlp_out);
    let d_gelu = d_mlp_out.dot(&params.arr(idx(MLP_W2)).t());
    let d_pre = &d_gelu * &cache.pre_act.mapv(gelu_prime);
    *grads.arr_mut(idx(MLP_B1)) += &d_pre.sum_axis(Axis(0)).insert_axis(Axis(0));
    *grads.arr_mut(idx(MLP_W1)) += &cache.ln2.out.t().dot(&d_pre);
    let d_ln2_out = d_pre.dot(&params.arr(idx(MLP_W1)).t());

    let (d_u_ln, d_scale2, d_shift2) = ln_backward(&d_ln2_out, &cache.ln2, params.arr(idx(LN2_SCALE)));
    *grads.arr_mut(idx(LN2_SCALE)) += &d_scale2;
    *grads.arr_mut(idx(LN2_SHIFT)) += &d_shift2;
    let d_u = d_out + &d_u_ln;

    // First residual: u = x + drop(attn_out).
    let mut d_attn_out = d_u.clone();
    if let Some(mask) = &cache.attn_mask {
        d_attn_out = &d_attn_out * mask;
    }
    let d_ln1_out = attn_backward(&d_attn_out, cache, params, layer, cfg.heads, grads);

    let (d_x_ln, d_scale1, d_shift1) = ln_backward(&d_ln1_out, &cache.ln1, params.arr(idx(LN1_SCALE)));
    *grads.arr_mut(idx(LN1_SCALE)) += &d_scale1;
    *grads.arr_mut(idx(LN1_SHIFT)) += &d_shift1;

    d_u + &d_x_ln
}

/// Backward through multi-head attention; returns the gradient w.r.t. the
/// layer-normed input `ln1.out`.
fn attn_backward<S: Scalar>(
    d_out: &Array2<S>,
    cache: &LayerCache<S>,
    params: &ParameterSet<S>,
    layer: usize,
    heads: usize,
    grads: &mut ParameterSet<S>,
) -> Array2<S> {
    let idx = |off| layer_index(layer, off);
    let attn: &AttnCache<S> = &cache.attn;
    let (tokens, dim) = attn.q.dim();
    let head_dim = dim / heads;
    let scale: S = lit(1.0 / (head_dim as f64).sqrt());

    // Output projection.
    *grads.arr_mut(idx(ATTN_BO)) += &d_out.sum_axis(Axis(0)).insert_axis(Axis(0));
    *grads.arr_mut(idx(ATTN_WO)) += &attn.concat.t().dot(d_out);
    let d_concat = d_out.dot(&params.arr(idx(ATTN_WO)).t());

    let mut d_q = Array2::zeros((tokens, dim));
    let mut d_k = Array2::zeros((tokens, dim));
    let mut d_v = Array2::zeros((tokens, dim));
    for h in 0..heads {
        let cols = s![.., h * head_dim..(h + 1) * head_dim];
        let d_out_h = d_concat.slice(cols);
        let a = &attn.weights[h];
        let vh = attn.v.slice(cols);
        let qh = attn.q.slice(cols);
        let kh = attn.k.slice(cols);

        // out_h = A . V_h
        let d_a = d_out_h.dot(&vh.t());
        d_v.slice_mut(cols).assign(&a.t().dot(&d_out_h));

        // Softmax backward per row: ds = a * (da - sum(da * a)).
        let mut d_scores = Array2::zeros((tokens, tokens));
        for t in 0..tokens {
            let a_row = a.row(t);
            let da_row = d_a.row(t);
            let dot: S = a_row.iter().zip(da_row.iter()).map(|(&x, &y)| x * y).sum();
            for t2 in 0..tokens {
                d_scores[[t, t2]] = a_row[t2] * (da_row[t2] - dot) * scale;
            }
        }
        d_q.slice_mut(cols).assign(&d_scores.dot(&kh));
        d_k.slice_mut(cols).assign(&d_scores.t().dot(&qh));
    }

    // Q/K/V projections from the shared layer-normed input.
    let x_ln = &cache.ln1.out;
    *grads.arr_mut(idx(ATTN_BQ)) += &d_q.sum_axis(Axis(0)).insert_axis(Axis(0));
    *grads.arr_mut(idx(ATTN_WQ)) += &x_ln.t().dot(&d_q);
    *grads.arr_mut(idx(ATTN_BK)) += &d_k.sum_axis(Axis(0)).insert_axis(Axis(0));
    *grads.arr_mut(idx(ATTN_WK)) += &x_ln.t().dot(&d_k);
    *grads.arr_mut(idx(ATTN_BV)) += &d_v.sum_axis(Axis(0)).insert_axis(Axis(0));
    *grads.arr_mut(idx(ATTN_WV)) += &x_ln.t().dot(&d_v);

    d_q.dot(&params.arr(idx(ATTN_WQ)).t())
        + d_k.dot(&params.arr(idx(ATTN_WK)).t())
        + d_v.dot(&params.arr(idx(ATTN_WV)).t())
}

/// Layer-norm backward: given dL/dy, the cached normalization, and the
/// scale, produce dL/dx and the scale/shift gradients.
fn ln_backward<S: Scalar>(
    d_y: &Array2<S>,
    cache: &LnCache<S>,
    scale: &Array2<S>,
) -> (Array2<S>, Array2<S>, Array2<S>) {
    let d_shift = d_y.sum_axis(Axis(0)).insert_axis(Axis(0));
    let d_scale = (d_y * &cache.normed).sum_axis(Axis(0)).insert_axis(Axis(0));

    let d_normed = d_y * &scale.row(0);
    let mean_dn = d_normed.mean_axis(Axis(1)).unwrap().insert_axis(Axis(1));
    let mean_dn_normed =
        (&d_normed * &cache.normed).mean_axis(Axis(1)).unwrap().insert_axis(Axis(1));
    let d_x = (&d_normed - &mean_dn - &(&cache.normed * &mean_dn_normed))
        * &cache.inv_std.clone().insert_axis(Axis(1));
    (d_x, d_scale, d_shift)
}

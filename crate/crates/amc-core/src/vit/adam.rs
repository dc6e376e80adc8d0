//! Adam with bias correction over the named parameter arrays.

use crate::scalar::{lit, Scalar};
use crate::vit::params::ParameterSet;
use crate::vit::VitError;
use ndarray::Zip;

/// Optimizer hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    /// Learning rate 5e-5, betas (0.9, 0.999), eps 1e-8, no weight decay.
    fn default() -> Self {
        AdamParams { lr: 5e-5, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// One Adam update at step `t >= 1`. Frozen arrays (parameters and their
/// moments) are left bit-identical.
pub fn adam_step<S: Scalar>(
    params: &mut ParameterSet<S>,
    grads: &ParameterSet<S>,
    m: &mut ParameterSet<S>,
    v: &mut ParameterSet<S>,
    hp: &AdamParams,
    t: u64,
) -> Result<(), VitError> {
    if t == 0 {
        return Err(VitError::ShapeError("Adam step counter starts at 1".into()));
    }
    let n = params.n_arrays();
    if grads.n_arrays() != n || m.n_arrays() != n || v.n_arrays() != n {
        return Err(VitError::ShapeError("optimizer state does not match parameters".into()));
    }

    let beta1: S = lit(hp.beta1);
    let beta2: S = lit(hp.beta2);
    let one_m_beta1: S = lit(1.0 - hp.beta1);
    let one_m_beta2: S = lit(1.0 - hp.beta2);
    let lr: S = lit(hp.lr);
    let eps: S = lit(hp.eps);
    let bias1: S = lit(1.0 - hp.beta1.powf(t as f64));
    let bias2: S = lit(1.0 - hp.beta2.powf(t as f64));

    for i in 0..n {
        if params.arr(i).dim() != grads.arr(i).dim() {
            return Err(VitError::ShapeError(format!(
                "gradient shape mismatch for '{}'",
                params.name(i)
            )));
        }
        if params.is_frozen(i) {
            continue;
        }
        Zip::from(params.arr_mut(i))
            .and(grads.arr(i))
            .and(m.arr_mut(i))
            .and(v.arr_mut(i))
            .for_each(|p, &g, m, v| {
                *m = beta1 * *m + one_m_beta1 * g;
                *v = beta2 * *v + one_m_beta2 * g * g;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
            });
    }
    Ok(())
}

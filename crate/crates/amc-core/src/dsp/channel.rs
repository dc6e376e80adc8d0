//! Multipath and AWGN channel impairments, plus an empirical SNR probe.

use crate::dsp::{ChannelConfig, DspError, IqSignal};
use crate::rng::seed_rng;
use crate::scalar::{lit, Scalar};
use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;

/// Tap-delay-line multipath: `y[n] = sum_p g_p * x[n - d_p]`.
///
/// Delays must correspond to integer sample offsets at the signal's rate.
/// The linear gains derived from `path_gains_db` are jointly normalized so
/// their total power is 1; the output is truncated to the input length.
pub fn apply_multipath<S: Scalar>(
    sig: &IqSignal<S>,
    cfg: &ChannelConfig,
) -> Result<IqSignal<S>, DspError> {
    cfg.validate()?;
    let mut offsets = Vec::with_capacity(cfg.path_delays_s.len());
    for &delay in &cfg.path_delays_s {
        let exact = delay * sig.sample_rate_hz;
        let rounded = exact.round();
        if (exact - rounded).abs() > 1e-9 {
            return Err(DspError::NonIntegerDelay {
                delay_s: delay,
                sample_rate_hz: sig.sample_rate_hz,
            });
        }
        offsets.push(rounded as usize);
    }

    let linear: Vec<f64> = cfg.path_gains_db.iter().map(|db| 10f64.powf(db / 20.0)).collect();
    let total: f64 = linear.iter().map(|g| g * g).sum();
    let norm = total.sqrt();
    let gains: Vec<S> = linear.iter().map(|g| lit(g / norm)).collect();

    let n = sig.len();
    let mut out = vec![Complex::new(S::zero(), S::zero()); n];
    for (i, y) in out.iter_mut().enumerate() {
        for (g, d) in gains.iter().zip(&offsets) {
            if i >= *d {
                *y = *y + sig.samples[i - d] * *g;
            }
        }
    }
    Ok(IqSignal { samples: out, sample_rate_hz: sig.sample_rate_hz })
}

/// Add circularly-symmetric complex Gaussian noise at the requested SNR.
///
/// The per-sample noise variance is `P / 10^(snr_db/10)` with `P` the
/// measured mean power of the input. An infinite `snr_db` disables noise.
/// Deterministic given the seed.
pub fn apply_awgn<S: Scalar>(sig: &IqSignal<S>, snr_db: f64, seed: u64) -> IqSignal<S> {
    if snr_db.is_infinite() && snr_db > 0.0 {
        return sig.clone();
    }
    let power = sig.mean_power().to_f64().unwrap();
    let variance = power / 10f64.powf(snr_db / 10.0);
    let sigma_component = (variance / 2.0).sqrt();

    let mut rng = seed_rng(seed);
    let samples = sig
        .samples
        .iter()
        .map(|s| {
            let nr: f64 = rng.sample(StandardNormal);
            let ni: f64 = rng.sample(StandardNormal);
            Complex::new(
                s.re + lit::<S>(nr * sigma_component),
                s.im + lit::<S>(ni * sigma_component),
            )
        })
        .collect();
    IqSignal { samples, sample_rate_hz: sig.sample_rate_hz }
}

/// Empirical SNR in dB: `10 log10(mean|clean|^2 / mean|noisy - clean|^2)`.
pub fn measure_snr<S: Scalar>(clean: &IqSignal<S>, noisy: &IqSignal<S>) -> Result<f64, DspError> {
    if clean.len() != noisy.len() {
        return Err(DspError::LengthMismatch { left: clean.len(), right: noisy.len() });
    }
    let noise_power: S = clean
        .samples
        .iter()
        .zip(&noisy.samples)
        .map(|(c, n)| (n - c).norm_sqr())
        .sum::<S>()
        / S::from_usize(clean.len()).unwrap();
    if noise_power == S::zero() {
        return Err(DspError::ZeroNoise);
    }
    let signal_power = clean.mean_power().to_f64().unwrap();
    Ok(10.0 * (signal_power / noise_power.to_f64().unwrap()).log10())
}

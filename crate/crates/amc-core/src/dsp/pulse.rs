//! Pulse shapes: root-raised-cosine taps for the linear schemes and
//! frequency pulses for the continuous-phase schemes.

use crate::dsp::{ModulationScheme, CPM_PULSE_SPAN_SYMBOLS, GFSK_BT, GMSK_BT};
use crate::scalar::{lit, Scalar};
use std::f64::consts::PI;

/// Root-raised-cosine filter taps.
///
/// `n_taps` samples centered on the pulse peak, sampled at
/// `samples_per_symbol` per symbol period, normalized to unit DC gain so
/// that filtering a held constant preserves its level.
pub fn rrc_taps<S: Scalar>(n_taps: usize, rolloff: f64, samples_per_symbol: usize) -> Vec<S> {
    assert!(n_taps >= 1, "filter needs at least one tap");
    assert!(rolloff > 0.0 && rolloff <= 1.0, "roll-off must be in (0, 1]");
    let sps = samples_per_symbol as f64;
    let center = (n_taps - 1) as f64 / 2.0;

    let mut taps = Vec::with_capacity(n_taps);
    for i in 0..n_taps {
        // Time in symbol periods relative to the pulse peak.
        let t = (i as f64 - center) / sps;
        let h = if t.abs() < 1e-12 {
            1.0 + rolloff * (4.0 / PI - 1.0)
        } else if (t.abs() - 1.0 / (4.0 * rolloff)).abs() < 1e-12 {
            let a = (1.0 + 2.0 / PI) * (PI * rolloff / 4.0).sin();
            let b = (1.0 - 2.0 / PI) * (PI * rolloff / 4.0).cos();
            rolloff / 2.0_f64.sqrt() * (a + b)
        } else {
            let num = (PI * t * (1.0 - rolloff)).sin()
                + 4.0 * rolloff * t * (PI * t * (1.0 + rolloff)).cos();
            let den = PI * t * (1.0 - (4.0 * rolloff * t).powi(2));
            num / den
        };
        taps.push(h);
    }

    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|h| lit(h / sum)).collect()
}

/// Discrete Gaussian smoothing kernel with 3 dB bandwidth-time product `bt`,
/// truncated to `span_symbols` symbol periods and normalized to unit sum.
pub fn gaussian_kernel<S: Scalar>(bt: f64, samples_per_symbol: usize, span_symbols: usize) -> Vec<S> {
    assert!(bt > 0.0, "BT product must be positive");
    let sps = samples_per_symbol as f64;
    // Std dev of the Gaussian impulse response, in samples.
    let sigma = sps * (2.0_f64.ln()).sqrt() / (2.0 * PI * bt);
    let half = (span_symbols * samples_per_symbol) / 2;

    let mut kernel = Vec::with_capacity(2 * half + 1);
    for m in -(half as i64)..=(half as i64) {
        let x = m as f64 / sigma;
        kernel.push((-0.5 * x * x).exp());
    }
    let sum: f64 = kernel.iter().sum();
    kernel.into_iter().map(|k| lit(k / sum)).collect()
}

/// Sampled frequency pulse for a continuous-phase scheme.
///
/// The pulse sums to exactly 1/2 so that one symbol accumulates a total
/// phase of `pi * h * a_k`. CPFSK uses the full-response rectangular pulse;
/// GFSK and GMSK convolve that rectangle with a Gaussian kernel (unit-sum,
/// so the periodized pulse train stays exactly flat and the per-sample
/// phase increment never exceeds `pi * h / samples_per_symbol`).
pub fn cpm_frequency_pulse<S: Scalar>(scheme: ModulationScheme, samples_per_symbol: usize) -> Vec<S> {
    let rect_height: S = lit(1.0 / (2.0 * samples_per_symbol as f64));
    let rect = vec![rect_height; samples_per_symbol];
    match scheme {
        ModulationScheme::Cpfsk => rect,
        ModulationScheme::Gfsk | ModulationScheme::Gmsk => {
            let bt = if scheme == ModulationScheme::Gfsk { GFSK_BT } else { GMSK_BT };
            let kernel = gaussian_kernel::<S>(bt, samples_per_symbol, CPM_PULSE_SPAN_SYMBOLS);
            convolve_full(&rect, &kernel)
        }
        other => panic!("{other} is not a continuous-phase scheme"),
    }
}

/// Full linear convolution (output length `a + b - 1`).
fn convolve_full<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    let mut out = vec![S::zero(); a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] = out[i + j] + ai * bj;
        }
    }
    out
}

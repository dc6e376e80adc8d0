//! Bit generation, symbol mapping, and frame modulation for the ten schemes.

use crate::dsp::pulse::{cpm_frequency_pulse, rrc_taps};
use crate::dsp::{DspError, FrameSpec, IqSignal, ModulationScheme, CPM_MODULATION_INDEX};
use crate::rng::seed_rng;
use crate::scalar::{lit, Scalar};
use num_complex::Complex;
use rand::Rng;
use std::f64::consts::PI;

/// Transmit filter length when none is configured (8 taps).
pub const DEFAULT_PULSE_FILTER_TAPS: usize = 8;
/// Root-raised-cosine roll-off for the transmit filter.
pub const RRC_ROLLOFF: f64 = 0.35;

/// Uniform pseudo-random payload bits for one frame, fully determined by
/// `spec.rng_seed`.
pub fn generate_bits(spec: &FrameSpec) -> Result<Vec<u8>, DspError> {
    spec.validate()?;
    let n_bits = spec.n_symbols * spec.scheme.bits_per_symbol();
    let mut rng = seed_rng(spec.rng_seed);
    Ok((0..n_bits).map(|_| rng.gen::<bool>() as u8).collect())
}

/// Binary-reflected Gray code to binary.
fn gray_decode(g: usize) -> usize {
    let mut n = g;
    let mut mask = n >> 1;
    while mask != 0 {
        n ^= mask;
        mask >>= 1;
    }
    n
}

/// Reads `width` bits MSB-first as an unsigned value.
fn bits_value(bits: &[u8]) -> usize {
    bits.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize)
}

/// Amplitude levels for a unipolar scheme with `m` levels, scaled to unit
/// average power under uniform symbol probability.
fn unipolar_levels<S: Scalar>(m: usize) -> Vec<S> {
    let mean_sq = (0..m).map(|l| (l * l) as f64).sum::<f64>() / m as f64;
    let scale = mean_sq.sqrt().recip();
    (0..m).map(|l| lit(l as f64 * scale)).collect()
}

/// Odd-integer bipolar levels `-(m-1), .., -1, +1, .., +(m-1)`, scaled to
/// unit average power.
fn bipolar_levels<S: Scalar>(m: usize) -> Vec<S> {
    // E[a^2] over +-1, +-3, ..., +-(m-1) is (m^2 - 1) / 3.
    let scale = ((m * m - 1) as f64 / 3.0).sqrt().recip();
    (0..m)
        .map(|l| lit((2.0 * l as f64 - (m - 1) as f64) * scale))
        .collect()
}

/// Map payload bits to complex symbols prior to pulse shaping.
///
/// Amplitude schemes are Gray-coded onto their level ladders and scaled so
/// the ideal constellation has unit average power. DQPSK accumulates its
/// Gray-coded quarter-turn increments into absolute phases here. OQPSK
/// yields plain QPSK points; the half-symbol Q offset is applied during
/// modulation. The continuous-phase schemes yield their `+-1` data values
/// for the phase integrator.
pub fn map_symbols<S: Scalar>(
    scheme: ModulationScheme,
    bits: &[u8],
) -> Result<Vec<Complex<S>>, DspError> {
    let bps = scheme.bits_per_symbol();
    if bits.len() % bps != 0 {
        return Err(DspError::BitCountMismatch { expected_multiple: bps, got: bits.len() });
    }
    let groups = bits.chunks_exact(bps).map(bits_value);

    let symbols = match scheme {
        ModulationScheme::Ook | ModulationScheme::Ask4 | ModulationScheme::Ask8 => {
            let levels = unipolar_levels::<S>(1 << bps);
            groups
                .map(|v| Complex::new(levels[gray_decode(v)], S::zero()))
                .collect()
        }
        ModulationScheme::Pam4 | ModulationScheme::Pam16 => {
            let levels = bipolar_levels::<S>(1 << bps);
            groups
                .map(|v| Complex::new(levels[gray_decode(v)], S::zero()))
                .collect()
        }
        ModulationScheme::Dqpsk => {
            let quarter: S = lit(PI / 2.0);
            let mut phase = S::zero();
            groups
                .map(|v| {
                    phase = phase + quarter * S::from_usize(gray_decode(v)).unwrap();
                    Complex::new(phase.cos(), phase.sin())
                })
                .collect()
        }
        ModulationScheme::Oqpsk => {
            let amp: S = lit(1.0 / 2.0_f64.sqrt());
            groups
                .map(|v| {
                    let (bi, bq) = (v >> 1, v & 1);
                    Complex::new(
                        if bi == 0 { amp } else { -amp },
                        if bq == 0 { amp } else { -amp },
                    )
                })
                .collect()
        }
        ModulationScheme::Cpfsk | ModulationScheme::Gfsk | ModulationScheme::Gmsk => groups
            .map(|v| Complex::new(if v == 0 { -S::one() } else { S::one() }, S::zero()))
            .collect(),
    };
    Ok(symbols)
}

/// Modulate a frame from seed-generated bits with the default 8-tap filter.
pub fn modulate_frame<S: Scalar>(spec: &FrameSpec) -> Result<IqSignal<S>, DspError> {
    modulate_frame_with_taps(spec, DEFAULT_PULSE_FILTER_TAPS)
}

/// Modulate a frame from seed-generated bits with an explicit transmit
/// filter length.
pub fn modulate_frame_with_taps<S: Scalar>(
    spec: &FrameSpec,
    pulse_filter_taps: usize,
) -> Result<IqSignal<S>, DspError> {
    let bits = generate_bits(spec)?;
    modulate_bits(spec, &bits, pulse_filter_taps)
}

/// Modulate a frame from explicit payload bits.
///
/// Linear schemes hold each symbol for `samples_per_symbol` samples and
/// smooth the result with the root-raised-cosine transmit filter (applied
/// circularly over the frame so the output length stays `n_symbols *
/// samples_per_symbol` with no edge transients). Continuous-phase schemes
/// integrate the frequency pulse train instead. The output is normalized
/// to unit mean power.
pub fn modulate_bits<S: Scalar>(
    spec: &FrameSpec,
    bits: &[u8],
    pulse_filter_taps: usize,
) -> Result<IqSignal<S>, DspError> {
    spec.validate()?;
    if pulse_filter_taps == 0 {
        return Err(DspError::InvalidSpec("pulse filter needs at least one tap".into()));
    }
    let expected = spec.n_symbols * spec.scheme.bits_per_symbol();
    if bits.len() != expected {
        return Err(DspError::InvalidSpec(format!(
            "expected {expected} bits for {} symbols of {}, got {}",
            spec.n_symbols,
            spec.scheme,
            bits.len()
        )));
    }
    let symbols = map_symbols::<S>(spec.scheme, bits)?;

    let mut samples = if spec.scheme.is_cpm() {
        integrate_phase(spec, &symbols)
    } else {
        let sps = spec.samples_per_symbol;
        let mut held: Vec<Complex<S>> = Vec::with_capacity(spec.n_samples());
        for s in &symbols {
            held.extend(std::iter::repeat(*s).take(sps));
        }
        if spec.scheme == ModulationScheme::Oqpsk {
            delay_imag_circular(&mut held, sps / 2);
        }
        let taps = rrc_taps::<S>(pulse_filter_taps, RRC_ROLLOFF, sps);
        circular_filter(&held, &taps)
    };

    let mut signal = IqSignal { samples: std::mem::take(&mut samples), sample_rate_hz: spec.sample_rate_hz };
    signal.normalize_power();
    Ok(signal)
}

/// Delay the Q rail by `shift` samples, wrapping around the frame.
fn delay_imag_circular<S: Scalar>(samples: &mut [Complex<S>], shift: usize) {
    let n = samples.len();
    let shift = shift % n;
    let imag: Vec<S> = samples.iter().map(|s| s.im).collect();
    for (i, s) in samples.iter_mut().enumerate() {
        s.im = imag[(i + n - shift) % n];
    }
}

/// Circular FIR filtering with group-delay centering:
/// `y[i] = sum_k h[k] * x[(i + center - k) mod n]`.
fn circular_filter<S: Scalar>(x: &[Complex<S>], taps: &[S]) -> Vec<Complex<S>> {
    let n = x.len();
    let center = (taps.len() - 1) / 2;
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let mut acc = Complex::new(S::zero(), S::zero());
        for (k, &h) in taps.iter().enumerate() {
            let idx = (i + center + n * (1 + k / n) - k) % n;
            acc = acc + x[idx] * h;
        }
        y.push(acc);
    }
    y
}

/// Continuous-phase modulation: accumulate the frequency pulse train into a
/// phase trajectory and take its complex exponential.
fn integrate_phase<S: Scalar>(spec: &FrameSpec, data: &[Complex<S>]) -> Vec<Complex<S>> {
    let sps = spec.samples_per_symbol;
    let n = spec.n_samples();
    let pulse = cpm_frequency_pulse::<S>(spec.scheme, sps);
    // How far the smoothed pulse extends before its symbol interval starts.
    let lead = (pulse.len() - sps) / 2;
    let coeff: S = lit(2.0 * PI * CPM_MODULATION_INDEX);

    let mut dphi = vec![S::zero(); n];
    for (k, symbol) in data.iter().enumerate() {
        let a = symbol.re;
        let start = k * sps;
        for (j, &p) in pulse.iter().enumerate() {
            let idx = start + j;
            if idx < lead {
                continue;
            }
            let idx = idx - lead;
            if idx < n {
                dphi[idx] = dphi[idx] + coeff * a * p;
            }
        }
    }

    let mut phase = S::zero();
    dphi.into_iter()
        .map(|d| {
            phase = phase + d;
            Complex::new(phase.cos(), phase.sin())
        })
        .collect()
}

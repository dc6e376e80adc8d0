//! Baseband synthesis of modulated frames and channel impairments.
//!
//! The transmit chain is `generate_bits -> map_symbols -> modulate_frame`,
//! followed by `apply_multipath` and `apply_awgn`. Everything is a pure
//! function of its inputs (seeds included), so frames can be synthesized
//! concurrently and reproduced bit-exactly.

mod channel;
mod modem;
mod pulse;

pub use channel::{apply_awgn, apply_multipath, measure_snr};
pub use modem::{
    generate_bits, map_symbols, modulate_bits, modulate_frame, modulate_frame_with_taps,
    DEFAULT_PULSE_FILTER_TAPS,
};
pub use pulse::{cpm_frequency_pulse, gaussian_kernel, rrc_taps};

use crate::scalar::Scalar;
use num_complex::Complex;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Modulation index shared by the three continuous-phase schemes.
pub const CPM_MODULATION_INDEX: f64 = 0.5;
/// Gaussian bandwidth-time product for GFSK.
pub const GFSK_BT: f64 = 0.5;
/// Gaussian bandwidth-time product for GMSK (the GSM value).
pub const GMSK_BT: f64 = 0.3;
/// Gaussian frequency pulse truncation, in symbol spans.
pub const CPM_PULSE_SPAN_SYMBOLS: usize = 4;

/// The ten supported modulation formats.
///
/// The declaration order fixes the integer class labels `0..=9` used by the
/// dataset and the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModulationScheme {
    Ook,
    Ask4,
    Ask8,
    Pam4,
    Pam16,
    Cpfsk,
    Gfsk,
    Gmsk,
    Dqpsk,
    Oqpsk,
}

impl ModulationScheme {
    /// All schemes in label order.
    pub const ALL: [ModulationScheme; 10] = [
        ModulationScheme::Ook,
        ModulationScheme::Ask4,
        ModulationScheme::Ask8,
        ModulationScheme::Pam4,
        ModulationScheme::Pam16,
        ModulationScheme::Cpfsk,
        ModulationScheme::Gfsk,
        ModulationScheme::Gmsk,
        ModulationScheme::Dqpsk,
        ModulationScheme::Oqpsk,
    ];

    /// Canonical integer class label in `[0, 9]`.
    pub fn label(self) -> usize {
        match self {
            ModulationScheme::Ook => 0,
            ModulationScheme::Ask4 => 1,
            ModulationScheme::Ask8 => 2,
            ModulationScheme::Pam4 => 3,
            ModulationScheme::Pam16 => 4,
            ModulationScheme::Cpfsk => 5,
            ModulationScheme::Gfsk => 6,
            ModulationScheme::Gmsk => 7,
            ModulationScheme::Dqpsk => 8,
            ModulationScheme::Oqpsk => 9,
        }
    }

    /// Inverse of [`ModulationScheme::label`].
    pub fn from_label(label: usize) -> Option<ModulationScheme> {
        ModulationScheme::ALL.get(label).copied()
    }

    /// Conventional name, as used in directory layouts and manifests.
    pub fn name(self) -> &'static str {
        match self {
            ModulationScheme::Ook => "OOK",
            ModulationScheme::Ask4 => "4ASK",
            ModulationScheme::Ask8 => "8ASK",
            ModulationScheme::Pam4 => "4PAM",
            ModulationScheme::Pam16 => "16PAM",
            ModulationScheme::Cpfsk => "CPFSK",
            ModulationScheme::Gfsk => "GFSK",
            ModulationScheme::Gmsk => "GMSK",
            ModulationScheme::Dqpsk => "DQPSK",
            ModulationScheme::Oqpsk => "OQPSK",
        }
    }

    /// Bits consumed per symbol.
    pub fn bits_per_symbol(self) -> usize {
        match self {
            ModulationScheme::Ook
            | ModulationScheme::Cpfsk
            | ModulationScheme::Gfsk
            | ModulationScheme::Gmsk => 1,
            ModulationScheme::Ask4 | ModulationScheme::Dqpsk | ModulationScheme::Oqpsk => 2,
            ModulationScheme::Ask8 => 3,
            ModulationScheme::Pam4 => 2,
            ModulationScheme::Pam16 => 4,
        }
    }

    /// True for the constant-envelope continuous-phase schemes.
    pub fn is_cpm(self) -> bool {
        matches!(
            self,
            ModulationScheme::Cpfsk | ModulationScheme::Gfsk | ModulationScheme::Gmsk
        )
    }
}

impl fmt::Display for ModulationScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModulationScheme {
    type Err = DspError;

    fn from_str(s: &str) -> Result<Self, DspError> {
        ModulationScheme::ALL
            .iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .copied()
            .ok_or_else(|| DspError::InvalidScheme(s.to_string()))
    }
}

/// A finite sequence of complex baseband samples with its sampling rate.
#[derive(Debug, Clone, PartialEq)]
pub struct IqSignal<S> {
    pub samples: Vec<Complex<S>>,
    pub sample_rate_hz: f64,
}

impl<S: Scalar> IqSignal<S> {
    /// Build a signal, validating that it is non-empty, finite, and has a
    /// positive sampling rate.
    pub fn new(samples: Vec<Complex<S>>, sample_rate_hz: f64) -> Result<Self, DspError> {
        if samples.is_empty() {
            return Err(DspError::InvalidSpec("signal must be non-empty".into()));
        }
        if !sample_rate_hz.is_finite() || sample_rate_hz <= 0.0 {
            return Err(DspError::InvalidSpec(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if samples.iter().any(|s| !s.re.is_finite() || !s.im.is_finite()) {
            return Err(DspError::InvalidSpec("non-finite sample".into()));
        }
        Ok(IqSignal { samples, sample_rate_hz })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean of `|s|^2` over the whole frame.
    pub fn mean_power(&self) -> S {
        let sum: S = self.samples.iter().map(|s| s.norm_sqr()).sum();
        sum / S::from_usize(self.len()).unwrap()
    }

    /// Scale so the mean power is exactly 1. A silent (all-zero) frame is
    /// left untouched.
    pub fn normalize_power(&mut self) {
        let power = self.mean_power();
        if power > S::zero() {
            let scale = power.sqrt().recip();
            for s in &mut self.samples {
                *s = *s * scale;
            }
        }
    }
}

/// Multipath + AWGN channel parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelConfig {
    /// Requested signal-to-noise ratio in dB. `f64::INFINITY` disables noise.
    pub snr_db: f64,
    /// Path delays in seconds, sorted ascending, first element 0.
    pub path_delays_s: Vec<f64>,
    /// Per-path gains in dB, same length as the delays. Jointly normalized
    /// to unit total power when applied.
    pub path_gains_db: Vec<f64>,
    /// Tap count of the transmit pulse-shaping filter.
    pub pulse_filter_taps: usize,
    pub rng_seed: u64,
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<(), DspError> {
        if self.path_delays_s.is_empty() {
            return Err(DspError::InvalidSpec("at least one path required".into()));
        }
        if self.path_delays_s.len() != self.path_gains_db.len() {
            return Err(DspError::InvalidSpec(format!(
                "{} delays but {} gains",
                self.path_delays_s.len(),
                self.path_gains_db.len()
            )));
        }
        if self.path_delays_s[0] != 0.0 {
            return Err(DspError::InvalidSpec("first path delay must be 0".into()));
        }
        if self.path_delays_s.windows(2).any(|w| w[0] > w[1]) {
            return Err(DspError::InvalidSpec("path delays must be sorted ascending".into()));
        }
        if self.path_delays_s.iter().any(|&d| d < 0.0 || !d.is_finite()) {
            return Err(DspError::InvalidSpec("path delays must be non-negative".into()));
        }
        if self.pulse_filter_taps == 0 {
            return Err(DspError::InvalidSpec("pulse filter needs at least one tap".into()));
        }
        Ok(())
    }
}

impl Default for ChannelConfig {
    /// Three-path profile with delays 0 / 0.4 ms / 0.8 ms and a mildly
    /// decaying power profile; 8 pulse-shaping taps.
    fn default() -> Self {
        ChannelConfig {
            snr_db: f64::INFINITY,
            path_delays_s: vec![0.0, 0.0004, 0.0008],
            path_gains_db: vec![0.0, -3.0, -6.0],
            pulse_filter_taps: DEFAULT_PULSE_FILTER_TAPS,
            rng_seed: 0,
        }
    }
}

/// Everything needed to synthesize one modulated frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameSpec {
    pub scheme: ModulationScheme,
    pub n_symbols: usize,
    pub samples_per_symbol: usize,
    pub sample_rate_hz: f64,
    pub rng_seed: u64,
}

impl FrameSpec {
    pub fn new(scheme: ModulationScheme, n_symbols: usize, samples_per_symbol: usize) -> Self {
        FrameSpec {
            scheme,
            n_symbols,
            samples_per_symbol,
            sample_rate_hz: 200_000.0,
            rng_seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), DspError> {
        if self.n_symbols == 0 || self.samples_per_symbol == 0 {
            return Err(DspError::InvalidSpec(
                "n_symbols and samples_per_symbol must be positive".into(),
            ));
        }
        if !self.sample_rate_hz.is_finite() || self.sample_rate_hz <= 0.0 {
            return Err(DspError::InvalidSpec("sample rate must be positive".into()));
        }
        if self.scheme == ModulationScheme::Oqpsk && self.samples_per_symbol % 2 != 0 {
            return Err(DspError::InvalidSpec(
                "OQPSK requires an even samples_per_symbol for the half-symbol offset".into(),
            ));
        }
        Ok(())
    }

    /// Frame length in samples.
    pub fn n_samples(&self) -> usize {
        self.n_symbols * self.samples_per_symbol
    }
}

/// Errors from the synthesis and channel stages.
#[derive(Debug, Clone, PartialEq)]
pub enum DspError {
    /// Bit count is not a multiple of the scheme's bits per symbol.
    BitCountMismatch { expected_multiple: usize, got: usize },
    /// A structurally invalid spec or signal.
    InvalidSpec(String),
    /// Unknown modulation scheme name.
    InvalidScheme(String),
    /// A path delay that is not an integer number of samples.
    NonIntegerDelay { delay_s: f64, sample_rate_hz: f64 },
    /// Two signals that should have equal lengths do not.
    LengthMismatch { left: usize, right: usize },
    /// SNR measurement against an identical signal.
    ZeroNoise,
}

impl fmt::Display for DspError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DspError::BitCountMismatch { expected_multiple, got } => write!(
                f,
                "bit count {got} is not a multiple of {expected_multiple} bits per symbol"
            ),
            DspError::InvalidSpec(msg) => write!(f, "invalid spec: {msg}"),
            DspError::InvalidScheme(name) => write!(
                f,
                "unknown modulation scheme '{name}' (expected one of OOK, 4ASK, 8ASK, 4PAM, \
                 16PAM, CPFSK, GFSK, GMSK, DQPSK, OQPSK)"
            ),
            DspError::NonIntegerDelay { delay_s, sample_rate_hz } => write!(
                f,
                "path delay {delay_s} s is not an integer number of samples at {sample_rate_hz} Hz"
            ),
            DspError::LengthMismatch { left, right } => {
                write!(f, "length mismatch: {left} vs {right}")
            }
            DspError::ZeroNoise => write!(f, "signals are identical; SNR is undefined"),
        }
    }
}

impl std::error::Error for DspError {}

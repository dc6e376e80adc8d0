//! Structured run configuration: a TOML file mirroring the dataset recipe,
//! classifier shape, training hyperparameters, and split definitions.
//! Every field has a default; unknown keys are rejected with the offending
//! key path. Command-line flags override individual fields.

use amc_core::dataset::{DatasetSpec, ImagingConfig};
use amc_core::dsp::{ChannelConfig, FrameSpec, ModulationScheme};
use amc_core::imaging::{ImagePlaneSpec, PowerMode};
use amc_core::vit::{AdamParams, TrainOptions, ViTConfig};
use anyhow::{bail, Context, Result};
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dataset: DatasetSection,
    pub frame: FrameSection,
    pub channel: ChannelSection,
    pub imaging: ImagingSection,
    pub vit: VitSection,
    pub train: TrainSection,
    pub splits: SplitsSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    /// Scheme names; defaults to all ten.
    pub schemes: Vec<String>,
    pub snr_grid_db: Vec<f64>,
    pub per_class_per_snr: usize,
    pub master_seed: u64,
    pub output_dir: PathBuf,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            schemes: ModulationScheme::ALL.iter().map(|s| s.name().to_string()).collect(),
            snr_grid_db: (0..=10).map(f64::from).collect(),
            per_class_per_snr: 100,
            master_seed: 1,
            output_dir: PathBuf::from("data"),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrameSection {
    pub n_symbols: usize,
    pub samples_per_symbol: usize,
    pub sample_rate_hz: f64,
}

impl Default for FrameSection {
    fn default() -> Self {
        FrameSection { n_symbols: 1024, samples_per_symbol: 8, sample_rate_hz: 200_000.0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    pub path_delays_s: Vec<f64>,
    pub path_gains_db: Vec<f64>,
    pub pulse_filter_taps: usize,
}

impl Default for ChannelSection {
    fn default() -> Self {
        let c = ChannelConfig::default();
        ChannelSection {
            path_delays_s: c.path_delays_s,
            path_gains_db: c.path_gains_db,
            pulse_filter_taps: c.pulse_filter_taps,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImagingSection {
    pub scale: f64,
    pub width_px: usize,
    pub height_px: usize,
    pub alphas: [f64; 3],
    pub power_mode: PowerMode,
    pub cutoff_radius_px: f64,
}

impl Default for ImagingSection {
    fn default() -> Self {
        let i = ImagingConfig::default();
        ImagingSection {
            scale: i.plane.scale,
            width_px: i.plane.width_px,
            height_px: i.plane.height_px,
            alphas: i.alphas,
            power_mode: i.power_mode,
            cutoff_radius_px: i.cutoff_radius_px,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VitSection {
    /// "desk" (64x64, 4 layers) or "base224" (224x224, 12 layers); explicit
    /// fields below override the preset.
    pub preset: String,
    pub image_hw: Option<[usize; 2]>,
    pub channels: Option<usize>,
    pub patch: Option<usize>,
    pub embed_dim: Option<usize>,
    pub layers: Option<usize>,
    pub heads: Option<usize>,
    pub mlp_dim: Option<usize>,
    pub n_classes: Option<usize>,
    pub dropout: Option<f64>,
}

impl Default for VitSection {
    fn default() -> Self {
        VitSection {
            preset: "desk".to_string(),
            image_hw: None,
            channels: None,
            patch: None,
            embed_dim: None,
            layers: None,
            heads: None,
            mlp_dim: None,
            n_classes: None,
            dropout: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub finetune_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            epochs: 50,
            finetune_epochs: 100,
            batch_size: 128,
            learning_rate: 5e-5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitsSection {
    pub validation_snrs_db: Vec<f64>,
    pub validation_per_class: usize,
    pub finetune_snrs_db: Vec<f64>,
    pub finetune_per_class: usize,
    pub finetune_val_per_class: usize,
}

impl Default for SplitsSection {
    fn default() -> Self {
        SplitsSection {
            validation_snrs_db: vec![0.0, 4.0, 8.0],
            validation_per_class: 100,
            finetune_snrs_db: vec![0.5, 1.5, 4.5],
            finetune_per_class: 100,
            finetune_val_per_class: 20,
        }
    }
}

impl RunConfig {
    /// Load from a TOML file, or defaults when no path is given.
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        match path {
            None => Ok(RunConfig::default()),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                let config: RunConfig = toml::from_str(&text)
                    .with_context(|| format!("parsing config {}", path.display()))?;
                Ok(config)
            }
        }
    }

    pub fn schemes(&self) -> Result<Vec<ModulationScheme>> {
        self.dataset
            .schemes
            .iter()
            .map(|name| name.parse::<ModulationScheme>().map_err(anyhow::Error::from))
            .collect()
    }

    pub fn frame_template(&self) -> FrameSpec {
        FrameSpec {
            scheme: ModulationScheme::Ook,
            n_symbols: self.frame.n_symbols,
            samples_per_symbol: self.frame.samples_per_symbol,
            sample_rate_hz: self.frame.sample_rate_hz,
            rng_seed: 0,
        }
    }

    pub fn channel_template(&self) -> ChannelConfig {
        ChannelConfig {
            snr_db: f64::INFINITY,
            path_delays_s: self.channel.path_delays_s.clone(),
            path_gains_db: self.channel.path_gains_db.clone(),
            pulse_filter_taps: self.channel.pulse_filter_taps,
            rng_seed: 0,
        }
    }

    pub fn imaging_config(&self) -> Result<ImagingConfig> {
        Ok(ImagingConfig {
            plane: ImagePlaneSpec::new(
                self.imaging.scale,
                self.imaging.width_px,
                self.imaging.height_px,
            )?,
            alphas: self.imaging.alphas,
            power_mode: self.imaging.power_mode,
            cutoff_radius_px: self.imaging.cutoff_radius_px,
        })
    }

    pub fn dataset_spec(&self) -> Result<DatasetSpec> {
        Ok(DatasetSpec {
            schemes: self.schemes()?,
            snr_grid_db: self.dataset.snr_grid_db.clone(),
            per_class_per_snr: self.dataset.per_class_per_snr,
            frame: self.frame_template(),
            channel: self.channel_template(),
            imaging: self.imaging_config()?,
            master_seed: self.dataset.master_seed,
            output_dir: self.dataset.output_dir.clone(),
        })
    }

    pub fn vit_config(&self) -> Result<ViTConfig> {
        let mut cfg = match self.vit.preset.as_str() {
            "desk" => ViTConfig::desk(),
            "base224" => ViTConfig::base224(),
            other => bail!("unknown vit preset '{other}' (expected 'desk' or 'base224')"),
        };
        if let Some([h, w]) = self.vit.image_hw {
            cfg.image_hw = (h, w);
        }
        if let Some(v) = self.vit.channels {
            cfg.channels = v;
        }
        if let Some(v) = self.vit.patch {
            cfg.patch = v;
        }
        if let Some(v) = self.vit.embed_dim {
            cfg.embed_dim = v;
        }
        if let Some(v) = self.vit.layers {
            cfg.layers = v;
        }
        if let Some(v) = self.vit.heads {
            cfg.heads = v;
        }
        if let Some(v) = self.vit.mlp_dim {
            cfg.mlp_dim = v;
        }
        if let Some(v) = self.vit.n_classes {
            cfg.n_classes = v;
        }
        if let Some(v) = self.vit.dropout {
            cfg.dropout = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_options(&self, epochs: usize, seed: u64) -> TrainOptions {
        TrainOptions {
            epochs,
            batch_size: self.train.batch_size,
            adam: AdamParams { lr: self.train.learning_rate, ..AdamParams::default() },
            seed,
            save_path: None,
        }
    }
}

/// Resolve an output path against the `AMC_OUTPUT_ROOT` environment
/// variable: relative outputs land under the root, absolute paths and
/// unset root pass through.
pub fn resolve_output(path: &Path) -> PathBuf {
    match std::env::var_os("AMC_OUTPUT_ROOT") {
        Some(root) if path.is_relative() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}

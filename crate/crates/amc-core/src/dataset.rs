//! Deterministic generation of labeled constellation-image datasets,
//! newline-delimited manifests, stratified splits, and the loader that
//! turns manifest entries into training tensors.
//!
//! Every image is fully determined by `(master_seed, scheme, snr, index)`
//! through a documented seed derivation, so re-running generation
//! overwrites files with identical bytes and generation parallelizes
//! freely across entries.

use crate::dsp::{
    apply_awgn, apply_multipath, modulate_frame_with_taps, ChannelConfig, DspError, FrameSpec,
    IqSignal, ModulationScheme,
};
use crate::imaging::{
    compose_three_channel, decode_png, encode_png, ImagePlaneSpec, ImagingError, PowerMode,
    RgbImage,
};
use crate::rng::{derive_seed, seed_rng};
use crate::vit::LabeledImages;
use ndarray::Array4;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

/// Manifest file name inside a dataset directory.
pub const MANIFEST_FILENAME: &str = "manifest.ndjson";

/// Three-channel imaging parameters for dataset generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImagingConfig {
    pub plane: ImagePlaneSpec,
    /// Strictly increasing decay rates, one per channel.
    pub alphas: [f64; 3],
    pub power_mode: PowerMode,
    pub cutoff_radius_px: f64,
}

impl Default for ImagingConfig {
    /// 32x32 window of half-width 2.5, decay rates (1, 2, 4), unit power,
    /// cutoff 4 px.
    fn default() -> Self {
        ImagingConfig {
            plane: ImagePlaneSpec { scale: 2.5, width_px: 32, height_px: 32 },
            alphas: [1.0, 2.0, 4.0],
            power_mode: PowerMode::Unit,
            cutoff_radius_px: 4.0,
        }
    }
}

/// Full recipe for a generated dataset.
#[derive(Debug, Clone)]
pub struct DatasetSpec {
    pub schemes: Vec<ModulationScheme>,
    pub snr_grid_db: Vec<f64>,
    pub per_class_per_snr: usize,
    /// Frame template; the scheme and seed are overridden per entry.
    pub frame: FrameSpec,
    /// Channel template; the SNR and seed are overridden per entry.
    pub channel: ChannelConfig,
    pub imaging: ImagingConfig,
    pub master_seed: u64,
    pub output_dir: PathBuf,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.schemes.is_empty() {
            return Err(DatasetError::InvalidSpec("no schemes requested".into()));
        }
        let unique: HashSet<_> = self.schemes.iter().collect();
        if unique.len() != self.schemes.len() {
            return Err(DatasetError::InvalidSpec("duplicate schemes".into()));
        }
        if self.snr_grid_db.is_empty() {
            return Err(DatasetError::InvalidSpec("empty SNR grid".into()));
        }
        if self.per_class_per_snr == 0 {
            return Err(DatasetError::InvalidSpec("per_class_per_snr must be positive".into()));
        }
        self.channel.validate()?;
        self.imaging.plane.validate()?;
        Ok(())
    }
}

/// One labeled image on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Path relative to the dataset root.
    pub path: String,
    pub label: usize,
    pub scheme: String,
    pub snr_db: f64,
    pub frame_seed: u64,
}

/// A dataset root directory plus its entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

/// Which protocol role a split plays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRole {
    BaseTrain,
    Validation,
    TestIn,
    TestOut,
    FinetuneTrain,
}

/// A stratified subset request: `per_class` entries for every
/// (class, SNR) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitSpec {
    pub role: SplitRole,
    pub snrs_db: Vec<f64>,
    pub per_class: usize,
}

impl SplitSpec {
    pub fn new(role: SplitRole, snrs_db: Vec<f64>, per_class: usize) -> Self {
        SplitSpec { role, snrs_db, per_class }
    }

    /// Fine-tuning default: 100 training samples per class per SNR.
    pub fn finetune(snrs_db: Vec<f64>) -> Self {
        SplitSpec { role: SplitRole::FinetuneTrain, snrs_db, per_class: 100 }
    }
}

/// Per-cell generation statistics for operator summaries.
#[derive(Debug, Clone)]
pub struct CellSummary {
    pub scheme: String,
    pub snr_db: f64,
    pub count: usize,
    /// Samples that fell outside the imaging window, over all images of
    /// the cell.
    pub dropped_samples: usize,
}

#[derive(Debug, Clone)]
pub struct GenerationSummary {
    pub images: usize,
    pub cells: Vec<CellSummary>,
}

#[derive(Debug)]
pub enum DatasetError {
    Io { path: PathBuf, source: io::Error },
    MalformedRecord { line: usize, message: String },
    InsufficientSamples { scheme: String, snr_db: f64, have: usize, need: usize },
    InvalidSpec(String),
    Dsp(DspError),
    Imaging(ImagingError),
}

impl fmt::Display for DatasetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetError::Io { path, source } => write!(f, "io error at {}: {source}", path.display()),
            DatasetError::MalformedRecord { line, message } => {
                write!(f, "malformed manifest record at line {line}: {message}")
            }
            DatasetError::InsufficientSamples { scheme, snr_db, have, need } => write!(
                f,
                "insufficient samples for class {scheme} at {snr_db} dB: have {have}, need {need}"
            ),
            DatasetError::InvalidSpec(msg) => write!(f, "invalid dataset spec: {msg}"),
            DatasetError::Dsp(e) => write!(f, "signal synthesis failed: {e}"),
            DatasetError::Imaging(e) => write!(f, "imaging failed: {e}"),
        }
    }
}

impl std::error::Error for DatasetError {}

impl From<DspError> for DatasetError {
    fn from(e: DspError) -> Self {
        DatasetError::Dsp(e)
    }
}

impl From<ImagingError> for DatasetError {
    fn from(e: ImagingError) -> Self {
        DatasetError::Imaging(e)
    }
}

fn io_err(path: &Path, source: io::Error) -> DatasetError {
    DatasetError::Io { path: path.to_path_buf(), source }
}

/// SNRs are compared and hashed at millibel resolution.
pub fn snr_millibels(snr_db: f64) -> i64 {
    (snr_db * 1000.0).round() as i64
}

/// Stable directory-name rendering of an SNR: integral values without a
/// fraction, otherwise up to three decimals with trailing zeros trimmed.
pub fn format_snr(snr_db: f64) -> String {
    let mb = snr_millibels(snr_db);
    let sign = if mb < 0 { "-" } else { "" };
    let abs = mb.unsigned_abs();
    let whole = abs / 1000;
    let frac = abs % 1000;
    if frac == 0 {
        format!("{sign}{whole}")
    } else {
        let digits = format!("{frac:03}");
        format!("{sign}{whole}.{}", digits.trim_end_matches('0'))
    }
}

/// Child seed for one dataset entry: a documented hash of
/// `(master_seed, scheme label, SNR in millibels, index)`.
pub fn entry_seed(master_seed: u64, scheme: ModulationScheme, snr_db: f64, index: usize) -> u64 {
    derive_seed(
        master_seed,
        &[scheme.label() as u64, snr_millibels(snr_db) as u64, index as u64],
    )
}

/// Run the synthesis chain for one frame: modulate with bits drawn from
/// the frame seed's first child stream, then multipath, then AWGN seeded
/// by the second child stream.
pub fn render_frame(
    scheme: ModulationScheme,
    snr_db: f64,
    frame_seed: u64,
    frame_template: &FrameSpec,
    channel: &ChannelConfig,
) -> Result<IqSignal<f64>, DatasetError> {
    let spec = FrameSpec {
        scheme,
        rng_seed: derive_seed(frame_seed, &[0]),
        ..frame_template.clone()
    };
    let clean = modulate_frame_with_taps::<f64>(&spec, channel.pulse_filter_taps)?;
    let faded = apply_multipath(&clean, channel)?;
    Ok(apply_awgn(&faded, snr_db, derive_seed(frame_seed, &[1])))
}

/// Render one three-channel constellation image; also reports how many
/// channel-output samples fell outside the imaging window.
pub fn render_image(
    scheme: ModulationScheme,
    snr_db: f64,
    frame_seed: u64,
    frame_template: &FrameSpec,
    channel: &ChannelConfig,
    imaging: &ImagingConfig,
) -> Result<(RgbImage, usize), DatasetError> {
    let signal = render_frame(scheme, snr_db, frame_seed, frame_template, channel)?;
    let dropped =
        signal.samples.iter().filter(|s| imaging.plane.bin(**s).is_none()).count();
    let image = compose_three_channel(
        &signal.samples,
        imaging.plane,
        imaging.alphas,
        imaging.power_mode,
        imaging.cutoff_radius_px,
    )?;
    Ok((image, dropped))
}

/// Generate every (scheme, SNR, index) image, write the PNGs and the
/// manifest under `output_dir`, and return the manifest with a summary.
///
/// Idempotent: a second run with the same spec rewrites identical bytes.
pub fn generate_dataset(
    spec: &DatasetSpec,
) -> Result<(DatasetManifest, GenerationSummary), DatasetError> {
    spec.validate()?;
    let root = &spec.output_dir;
    fs::create_dir_all(root).map_err(|e| io_err(root, e))?;

    // Entry plan in manifest order; directories created up front so the
    // parallel workers only write files.
    let mut plan = Vec::new();
    for &scheme in &spec.schemes {
        for &snr_db in &spec.snr_grid_db {
            let dir = root.join(scheme.name()).join(format_snr(snr_db));
            fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
            for index in 0..spec.per_class_per_snr {
                let frame_seed = entry_seed(spec.master_seed, scheme, snr_db, index);
                let rel_path =
                    format!("{}/{}/{:05}.png", scheme.name(), format_snr(snr_db), index);
                plan.push((scheme, snr_db, index, frame_seed, rel_path));
            }
        }
    }

    let results: Vec<Result<(ManifestEntry, usize), DatasetError>> = plan
        .par_iter()
        .map(|(scheme, snr_db, _index, frame_seed, rel_path)| {
            let (image, dropped) = render_image(
                *scheme,
                *snr_db,
                *frame_seed,
                &spec.frame,
                &spec.channel,
                &spec.imaging,
            )?;
            let bytes = encode_png(&image)?;
            let abs = root.join(rel_path);
            fs::write(&abs, &bytes).map_err(|e| io_err(&abs, e))?;
            Ok((
                ManifestEntry {
                    path: rel_path.clone(),
                    label: scheme.label(),
                    scheme: scheme.name().to_string(),
                    snr_db: *snr_db,
                    frame_seed: *frame_seed,
                },
                dropped,
            ))
        })
        .collect();

    let mut entries = Vec::with_capacity(plan.len());
    let mut cells: Vec<CellSummary> = Vec::new();
    for result in results {
        let (entry, dropped) = result?;
        match cells
            .iter_mut()
            .find(|c| c.scheme == entry.scheme && snr_millibels(c.snr_db) == snr_millibels(entry.snr_db))
        {
            Some(cell) => {
                cell.count += 1;
                cell.dropped_samples += dropped;
            }
            None => cells.push(CellSummary {
                scheme: entry.scheme.clone(),
                snr_db: entry.snr_db,
                count: 1,
                dropped_samples: dropped,
            }),
        }
        entries.push(entry);
    }

    let manifest_path = root.join(MANIFEST_FILENAME);
    write_manifest(&entries, &manifest_path)?;
    let summary = GenerationSummary { images: entries.len(), cells };
    Ok((DatasetManifest { root: root.clone(), entries }, summary))
}

/// Write entries as newline-delimited JSON records with fields exactly
/// `{path, label, scheme, snr_db, frame_seed}`.
pub fn write_manifest(entries: &[ManifestEntry], path: &Path) -> Result<(), DatasetError> {
    let mut out = String::new();
    for entry in entries {
        out.push_str(&serde_json::to_string(entry).expect("manifest entries serialize"));
        out.push('\n');
    }
    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Read a manifest and validate every record: parseable, label in range
/// and consistent with the scheme name, and the image file present under
/// the manifest's directory.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest, DatasetError> {
    let root = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let reader = io::BufReader::new(file);

    let mut entries = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry =
            serde_json::from_str(&line).map_err(|e| DatasetError::MalformedRecord {
                line: line_no,
                message: e.to_string(),
            })?;
        let scheme: ModulationScheme =
            entry.scheme.parse().map_err(|e: DspError| DatasetError::MalformedRecord {
                line: line_no,
                message: e.to_string(),
            })?;
        if entry.label != scheme.label() {
            return Err(DatasetError::MalformedRecord {
                line: line_no,
                message: format!(
                    "label {} does not match scheme {} (expected {})",
                    entry.label,
                    entry.scheme,
                    scheme.label()
                ),
            });
        }
        let rel = Path::new(&entry.path);
        if rel.is_absolute() || rel.components().any(|c| matches!(c, std::path::Component::ParentDir)) {
            return Err(DatasetError::MalformedRecord {
                line: line_no,
                message: format!("path '{}' must be relative to the dataset root", entry.path),
            });
        }
        let abs = root.join(rel);
        if !abs.is_file() {
            return Err(DatasetError::Io {
                path: abs,
                source: io::Error::new(io::ErrorKind::NotFound, "image listed in manifest missing"),
            });
        }
        entries.push(entry);
    }
    Ok(DatasetManifest { root, entries })
}

/// Deterministic, seed-driven, class- and SNR-stratified subset: exactly
/// `per_class` entries for every (class, SNR) cell, drawn from entries not
/// used by any of the `exclude` splits.
pub fn make_split(
    manifest: &DatasetManifest,
    split: &SplitSpec,
    seed: u64,
    exclude: &[&[ManifestEntry]],
) -> Result<Vec<ManifestEntry>, DatasetError> {
    if split.per_class == 0 {
        return Err(DatasetError::InvalidSpec("per_class must be positive".into()));
    }
    if split.snrs_db.is_empty() {
        return Err(DatasetError::InvalidSpec("split needs at least one SNR".into()));
    }
    let excluded: HashSet<&str> =
        exclude.iter().flat_map(|s| s.iter().map(|e| e.path.as_str())).collect();

    let mut labels: Vec<usize> = manifest.entries.iter().map(|e| e.label).collect();
    labels.sort_unstable();
    labels.dedup();

    let mut out = Vec::with_capacity(labels.len() * split.snrs_db.len() * split.per_class);
    for &label in &labels {
        for &snr_db in &split.snrs_db {
            let mb = snr_millibels(snr_db);
            let mut candidates: Vec<&ManifestEntry> = manifest
                .entries
                .iter()
                .filter(|e| {
                    e.label == label
                        && snr_millibels(e.snr_db) == mb
                        && !excluded.contains(e.path.as_str())
                })
                .collect();
            if candidates.len() < split.per_class {
                let scheme = ModulationScheme::from_label(label)
                    .map(|s| s.name().to_string())
                    .unwrap_or_else(|| format!("label {label}"));
                return Err(DatasetError::InsufficientSamples {
                    scheme,
                    snr_db,
                    have: candidates.len(),
                    need: split.per_class,
                });
            }
            let mut rng = seed_rng(derive_seed(seed, &[label as u64, mb as u64]));
            for i in (1..candidates.len()).rev() {
                let j = rng.gen_range(0..=i);
                candidates.swap(i, j);
            }
            out.extend(candidates.into_iter().take(split.per_class).cloned());
        }
    }
    Ok(out)
}

/// Load manifest entries as training tensors: decode each PNG, upscale by
/// integer replication to `target_hw`, and scale bytes to `[0, 1]`.
pub fn load_images(
    root: &Path,
    entries: &[ManifestEntry],
    target_hw: (usize, usize),
) -> Result<LabeledImages, DatasetError> {
    if entries.is_empty() {
        return Err(DatasetError::InvalidSpec("no entries to load".into()));
    }
    let (th, tw) = target_hw;
    let planes: Vec<Result<ndarray::Array3<f32>, DatasetError>> = entries
        .par_iter()
        .map(|entry| {
            let path = root.join(&entry.path);
            let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
            let pixels = decode_png(&bytes)?;
            let (h, w, _) = pixels.dim();
            if h == 0 || w == 0 || th % h != 0 || tw % w != 0 || th / h != tw / w {
                return Err(DatasetError::InvalidSpec(format!(
                    "image {}x{} cannot be integer-upscaled to {th}x{tw}",
                    h, w
                )));
            }
            let factor = th / h;
            let mut out = ndarray::Array3::<f32>::zeros((3, th, tw));
            for ch in 0..3 {
                for y in 0..th {
                    for x in 0..tw {
                        out[[ch, y, x]] = pixels[[y / factor, x / factor, ch]] as f32 / 255.0;
                    }
                }
            }
            Ok(out)
        })
        .collect();

    let mut images = Array4::zeros((entries.len(), 3, th, tw));
    for (i, plane) in planes.into_iter().enumerate() {
        images.index_axis_mut(ndarray::Axis(0), i).assign(&plane?);
    }
    let labels = entries.iter().map(|e| e.label).collect();
    Ok(LabeledImages { images, labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn small_spec(dir: &Path) -> DatasetSpec {
        DatasetSpec {
            schemes: vec![ModulationScheme::Ook, ModulationScheme::Gmsk],
            snr_grid_db: vec![0.0, 10.0],
            per_class_per_snr: 3,
            frame: FrameSpec::new(ModulationScheme::Ook, 256, 8),
            channel: ChannelConfig::default(),
            imaging: ImagingConfig {
                plane: ImagePlaneSpec { scale: 2.5, width_px: 16, height_px: 16 },
                ..ImagingConfig::default()
            },
            master_seed: 99,
            output_dir: dir.to_path_buf(),
        }
    }

    /// Synthetic manifest without any files, for split logic tests.
    fn synthetic_manifest(classes: usize, snrs: &[f64], per_cell: usize) -> DatasetManifest {
        let mut entries = Vec::new();
        for label in 0..classes {
            let scheme = ModulationScheme::from_label(label).unwrap();
            for &snr in snrs {
                for i in 0..per_cell {
                    entries.push(ManifestEntry {
                        path: format!("{}/{}/{i:05}.png", scheme.name(), format_snr(snr)),
                        label,
                        scheme: scheme.name().to_string(),
                        snr_db: snr,
                        frame_seed: i as u64,
                    });
                }
            }
        }
        DatasetManifest { root: PathBuf::from("unused"), entries }
    }

    #[test]
    fn snr_formatting() {
        assert_eq!(format_snr(0.0), "0");
        assert_eq!(format_snr(10.0), "10");
        assert_eq!(format_snr(0.5), "0.5");
        assert_eq!(format_snr(4.5), "4.5");
        assert_eq!(format_snr(-2.5), "-2.5");
        assert_eq!(format_snr(-0.5), "-0.5");
        assert_eq!(format_snr(7.125), "7.125");
    }

    #[test]
    fn spec_validation() {
        let dir = tempdir().unwrap();
        let mut spec = small_spec(dir.path());
        assert!(spec.validate().is_ok());
        spec.schemes.push(ModulationScheme::Ook);
        assert!(matches!(spec.validate(), Err(DatasetError::InvalidSpec(_))));
        spec.schemes.clear();
        assert!(spec.validate().is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join(MANIFEST_FILENAME);

        write_manifest(&[], &path).unwrap();
        assert_eq!(load_manifest(&path).unwrap().entries, vec![]);

        // Entries must reference real files for load to accept them.
        let entries: Vec<ManifestEntry> = (0..3)
            .map(|i| {
                let rel = format!("img{i}.png");
                fs::write(dir.path().join(&rel), b"x").unwrap();
                ManifestEntry {
                    path: rel,
                    label: i,
                    scheme: ModulationScheme::from_label(i).unwrap().name().to_string(),
                    snr_db: i as f64 + 0.5,
                    frame_seed: 1000 + i as u64,
                }
            })
            .collect();
        write_manifest(&entries, &path).unwrap();
        let loaded = load_manifest(&path).unwrap();
        assert_eq!(loaded.entries, entries);
    }

    #[test]
    fn manifest_rejects_bad_records() {
        let dir = tempdir().unwrap();
        let path = dir.path().join(MANIFEST_FILENAME);

        // Label out of range for the named scheme.
        fs::write(dir.path().join("a.png"), b"x").unwrap();
        fs::write(
            &path,
            "{\"path\":\"a.png\",\"label\":10,\"scheme\":\"OOK\",\"snr_db\":0.0,\"frame_seed\":1}\n",
        )
        .unwrap();
        match load_manifest(&path) {
            Err(DatasetError::MalformedRecord { line: 1, .. }) => {}
            other => panic!("expected malformed record, got {other:?}"),
        }

        // Unparseable JSON reports the line number.
        fs::write(&path, "{\"path\":\"a.png\",\"label\":0,\"scheme\":\"OOK\",\"snr_db\":0.0,\"frame_seed\":1}\nnot json\n").unwrap();
        match load_manifest(&path) {
            Err(DatasetError::MalformedRecord { line: 2, .. }) => {}
            other => panic!("expected malformed record at line 2, got {other:?}"),
        }

        // Missing file.
        fs::write(
            &path,
            "{\"path\":\"gone.png\",\"label\":0,\"scheme\":\"OOK\",\"snr_db\":0.0,\"frame_seed\":1}\n",
        )
        .unwrap();
        assert!(matches!(load_manifest(&path), Err(DatasetError::Io { .. })));

        // Escaping the root is rejected.
        fs::write(
            &path,
            "{\"path\":\"../a.png\",\"label\":0,\"scheme\":\"OOK\",\"snr_db\":0.0,\"frame_seed\":1}\n",
        )
        .unwrap();
        assert!(matches!(load_manifest(&path), Err(DatasetError::MalformedRecord { .. })));
    }

    #[test]
    fn generate_writes_images_and_manifest() {
        let dir = tempdir().unwrap();
        let spec = small_spec(dir.path());
        let (manifest, summary) = generate_dataset(&spec).unwrap();

        assert_eq!(manifest.entries.len(), 2 * 2 * 3);
        assert_eq!(summary.images, 12);
        assert_eq!(summary.cells.len(), 4);
        assert!(summary.cells.iter().all(|c| c.count == 3));
        for entry in &manifest.entries {
            let path = dir.path().join(&entry.path);
            assert!(path.is_file(), "{} missing", entry.path);
            let pixels = decode_png(&fs::read(&path).unwrap()).unwrap();
            assert_eq!(pixels.shape(), [16, 16, 3]);
        }
        // The manifest loads back and matches.
        let loaded = load_manifest(&dir.path().join(MANIFEST_FILENAME)).unwrap();
        assert_eq!(loaded.entries, manifest.entries);
    }

    #[test]
    fn generation_is_idempotent() {
        let dir = tempdir().unwrap();
        let spec = small_spec(dir.path());
        let (first, _) = generate_dataset(&spec).unwrap();
        let mut snapshots = Vec::new();
        for entry in &first.entries {
            snapshots.push(fs::read(dir.path().join(&entry.path)).unwrap());
        }
        let manifest_bytes = fs::read(dir.path().join(MANIFEST_FILENAME)).unwrap();

        let (second, _) = generate_dataset(&spec).unwrap();
        assert_eq!(first.entries, second.entries);
        for (entry, snapshot) in first.entries.iter().zip(&snapshots) {
            assert_eq!(&fs::read(dir.path().join(&entry.path)).unwrap(), snapshot);
        }
        assert_eq!(fs::read(dir.path().join(MANIFEST_FILENAME)).unwrap(), manifest_bytes);
    }

    #[test]
    fn different_master_seeds_differ() {
        let dir = tempdir().unwrap();
        let spec = small_spec(dir.path());
        let (first, _) = generate_dataset(&spec).unwrap();
        let bytes_a = fs::read(dir.path().join(&first.entries[0].path)).unwrap();

        let spec_b = DatasetSpec { master_seed: 100, ..small_spec(dir.path()) };
        let (second, _) = generate_dataset(&spec_b).unwrap();
        let bytes_b = fs::read(dir.path().join(&second.entries[0].path)).unwrap();
        assert_ne!(bytes_a, bytes_b);
    }

    #[test]
    fn validation_split_arithmetic() {
        // 10 classes x 3 SNRs x 100 per class = 3,000 entries.
        let manifest = synthetic_manifest(10, &[0.0, 4.0, 8.0], 150);
        let split =
            SplitSpec::new(SplitRole::Validation, vec![0.0, 4.0, 8.0], 100);
        let subset = make_split(&manifest, &split, 1, &[]).unwrap();
        assert_eq!(subset.len(), 3000);

        let finetune = SplitSpec::finetune(vec![0.5, 1.5, 4.5]);
        assert_eq!(finetune.per_class, 100);
        let manifest = synthetic_manifest(10, &[0.5, 1.5, 4.5], 120);
        let subset = make_split(&manifest, &finetune, 2, &[]).unwrap();
        assert_eq!(subset.len(), 3000);
    }

    #[test]
    fn splits_are_stratified_disjoint_and_deterministic() {
        let manifest = synthetic_manifest(4, &[0.0, 5.0], 20);
        let spec_a = SplitSpec::new(SplitRole::BaseTrain, vec![0.0, 5.0], 8);
        let a1 = make_split(&manifest, &spec_a, 7, &[]).unwrap();
        let a2 = make_split(&manifest, &spec_a, 7, &[]).unwrap();
        assert_eq!(a1, a2);
        let a3 = make_split(&manifest, &spec_a, 8, &[]).unwrap();
        assert_ne!(a1, a3);

        // Exact per-cell counts.
        for label in 0..4 {
            for &snr in &[0.0, 5.0] {
                let cell = a1
                    .iter()
                    .filter(|e| e.label == label && snr_millibels(e.snr_db) == snr_millibels(snr))
                    .count();
                assert_eq!(cell, 8);
            }
        }

        // A second split excluding the first shares no paths.
        let spec_b = SplitSpec::new(SplitRole::TestIn, vec![0.0, 5.0], 5);
        let b = make_split(&manifest, &spec_b, 9, &[&a1]).unwrap();
        let used: HashSet<&str> = a1.iter().map(|e| e.path.as_str()).collect();
        assert!(b.iter().all(|e| !used.contains(e.path.as_str())));

        // Labels stay consistent with schemes.
        for entry in a1.iter().chain(&b) {
            let scheme: ModulationScheme = entry.scheme.parse().unwrap();
            assert_eq!(entry.label, scheme.label());
        }
    }

    #[test]
    fn insufficient_samples_names_the_cell() {
        let manifest = synthetic_manifest(2, &[0.0], 10);
        let spec = SplitSpec::new(SplitRole::BaseTrain, vec![0.0], 8);
        let taken = make_split(&manifest, &spec, 1, &[]).unwrap();
        let err = make_split(&manifest, &spec, 2, &[&taken]).unwrap_err();
        match err {
            DatasetError::InsufficientSamples { scheme, snr_db, have, need } => {
                assert_eq!(scheme, "OOK");
                assert_eq!(snr_db, 0.0);
                assert_eq!(have, 2);
                assert_eq!(need, 8);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn load_images_upscales_and_normalizes() {
        let dir = tempdir().unwrap();
        let spec = small_spec(dir.path());
        let (manifest, _) = generate_dataset(&spec).unwrap();
        let entries = &manifest.entries[..4];
        let data = load_images(dir.path(), entries, (32, 32)).unwrap();
        assert_eq!(data.images.shape(), [4, 3, 32, 32]);
        assert_eq!(data.labels, entries.iter().map(|e| e.label).collect::<Vec<_>>());
        assert!(data.images.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(data.images.iter().any(|&v| v > 0.0));
        // 2x2 blocks are constant after factor-2 upscale.
        let img = data.images.index_axis(ndarray::Axis(0), 0);
        for ch in 0..3 {
            for y in (0..32).step_by(2) {
                for x in (0..32).step_by(2) {
                    let v = img[[ch, y, x]];
                    assert_eq!(v, img[[ch, y + 1, x]]);
                    assert_eq!(v, img[[ch, y, x + 1]]);
                }
            }
        }

        // Non-integer factor is rejected.
        assert!(load_images(dir.path(), entries, (24, 24)).is_err());
    }
}

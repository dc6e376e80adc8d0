//! The five subcommands: generate, train, finetune, eval, render.

use crate::config::{resolve_output, RunConfig};
use amc_core::dataset::{
    generate_dataset, load_images, load_manifest, make_split, DatasetManifest, SplitRole,
    SplitSpec, MANIFEST_FILENAME,
};
use amc_core::dsp::ModulationScheme;
use amc_core::imaging::{encode_gray_png, encode_png, enhance_gray, rasterize_gray, DecayParams};
use amc_core::metrics::{confusion, convergence_log_write, report, MetricsReport};
use amc_core::vit::{
    fine_tune, load_checkpoint, predict, save_checkpoint, train, Checkpoint, ParameterSet,
    TrainOutcome,
};
use anyhow::{bail, Context, Result};
use clap::Args;
use sha2::{Digest, Sha256};
use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

fn parse_scheme(s: &str) -> Result<ModulationScheme, String> {
    s.parse::<ModulationScheme>().map_err(|e| e.to_string())
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// TOML run configuration; flags override individual fields
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory to write [default: data]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated scheme names [default: all ten]
    #[arg(long, value_delimiter = ',', value_parser = parse_scheme)]
    pub schemes: Option<Vec<ModulationScheme>>,
    /// Comma-separated SNRs in dB [default: 0,1,..,10]
    #[arg(long, value_delimiter = ',')]
    pub snrs: Option<Vec<f64>>,
    /// Images per (class, SNR) cell [default: 100]
    #[arg(long)]
    pub per_class: Option<usize>,
    /// Master seed for the whole dataset [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Generation worker threads [default: logical cores]
    #[arg(long)]
    pub jobs: Option<usize>,
}

pub fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let config = RunConfig::load(args.config.as_deref())?;
    let mut spec = config.dataset_spec()?;
    if let Some(out) = args.out {
        spec.output_dir = out;
    }
    spec.output_dir = resolve_output(&spec.output_dir);
    if let Some(schemes) = args.schemes {
        spec.schemes = schemes;
    }
    if let Some(snrs) = args.snrs {
        spec.snr_grid_db = snrs;
    }
    if let Some(per_class) = args.per_class {
        spec.per_class_per_snr = per_class;
    }
    if let Some(seed) = args.seed {
        spec.master_seed = seed;
    }

    let (manifest, summary) = match args.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .context("building worker pool")?
            .install(|| generate_dataset(&spec)),
        None => generate_dataset(&spec),
    }?;

    println!("wrote {} images under {}", summary.images, spec.output_dir.display());
    println!("{:<8} {:>8} {:>8} {:>16}", "scheme", "snr_db", "count", "dropped_samples");
    for cell in &summary.cells {
        println!(
            "{:<8} {:>8} {:>8} {:>16}",
            cell.scheme,
            amc_core::dataset::format_snr(cell.snr_db),
            cell.count,
            cell.dropped_samples
        );
    }
    let manifest_path = spec.output_dir.join(MANIFEST_FILENAME);
    let digest = Sha256::digest(fs::read(&manifest_path)?);
    println!("manifest: {} entries, sha256 {:x}", manifest.entries.len(), digest);
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// TOML run configuration; flags override individual fields
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory containing manifest.ndjson
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint file to write
    #[arg(long)]
    pub out: PathBuf,
    /// Convergence log path [default: <out>.log.csv]
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Training epochs [default: 50]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Batch size [default: 128]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Adam learning rate [default: 0.00005]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Training seed (shuffling, init, dropout) [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Validation SNRs in dB [default: 0,4,8]
    #[arg(long, value_delimiter = ',')]
    pub val_snrs: Option<Vec<f64>>,
    /// Validation entries per (class, SNR) cell [default: 100]
    #[arg(long)]
    pub val_per_class: Option<usize>,
}

pub fn cmd_train(args: TrainArgs) -> Result<()> {
    let config = RunConfig::load(args.config.as_deref())?;
    let vit = config.vit_config()?;
    let epochs = args.epochs.unwrap_or(config.train.epochs);
    let seed = args.seed.unwrap_or(config.train.seed);
    let val_snrs = args.val_snrs.unwrap_or_else(|| config.splits.validation_snrs_db.clone());
    let val_per_class = args.val_per_class.unwrap_or(config.splits.validation_per_class);

    let manifest = load_manifest(&args.data.join(MANIFEST_FILENAME))?;
    let val_split = SplitSpec::new(SplitRole::Validation, val_snrs, val_per_class);
    let val_entries = make_split(&manifest, &val_split, seed, &[])?;
    let val_paths: HashSet<&str> = val_entries.iter().map(|e| e.path.as_str()).collect();
    let train_entries: Vec<_> = manifest
        .entries
        .iter()
        .filter(|e| !val_paths.contains(e.path.as_str()))
        .cloned()
        .collect();
    println!(
        "training on {} images, validating on {} images",
        train_entries.len(),
        val_entries.len()
    );

    let train_images = load_images(&manifest.root, &train_entries, vit.image_hw)?;
    let val_images = load_images(&manifest.root, &val_entries, vit.image_hw)?;

    let out = resolve_output(&args.out);
    let mut opts = config.train_options(epochs, seed);
    if let Some(batch) = args.batch_size {
        opts.batch_size = batch;
    }
    if let Some(lr) = args.lr {
        opts.adam.lr = lr;
    }
    opts.save_path = Some(out.clone());

    let params = ParameterSet::<f32>::init(&vit, seed);
    let outcome = train(&vit, params, &train_images, &val_images, &opts)?;
    finish_run(&outcome, &out, args.log.as_deref())?;
    Ok(())
}

// ---------------------------------------------------------------------------
// finetune
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct FinetuneArgs {
    /// TOML run configuration; flags override individual fields
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Base checkpoint to start from
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset directory containing manifest.ndjson
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint file to write
    #[arg(long)]
    pub out: PathBuf,
    /// Convergence log path [default: <out>.log.csv]
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Fine-tuning epochs [default: 100]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Fine-tuning SNRs in dB [default: 0.5,1.5,4.5]
    #[arg(long, value_delimiter = ',')]
    pub snrs: Option<Vec<f64>>,
    /// Training entries per (class, SNR) cell [default: 100]
    #[arg(long)]
    pub per_class: Option<usize>,
    /// Validation entries per (class, SNR) cell [default: 20]
    #[arg(long)]
    pub val_per_class: Option<usize>,
    /// Batch size [default: 128]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Adam learning rate [default: 0.00005]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Seed for split draws and shuffling [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn cmd_finetune(args: FinetuneArgs) -> Result<()> {
    let config = RunConfig::load(args.config.as_deref())?;
    let epochs = args.epochs.unwrap_or(config.train.finetune_epochs);
    let seed = args.seed.unwrap_or(config.train.seed);
    let snrs = args.snrs.unwrap_or_else(|| config.splits.finetune_snrs_db.clone());
    let per_class = args.per_class.unwrap_or(config.splits.finetune_per_class);
    let val_per_class = args.val_per_class.unwrap_or(config.splits.finetune_val_per_class);

    let checkpoint = load_checkpoint(&args.checkpoint)?;
    let manifest = load_manifest(&args.data.join(MANIFEST_FILENAME))?;
    let ft_split = SplitSpec::new(SplitRole::FinetuneTrain, snrs.clone(), per_class);
    let ft_entries = make_split(&manifest, &ft_split, seed, &[])?;
    let val_split = SplitSpec::new(SplitRole::Validation, snrs, val_per_class);
    let val_entries = make_split(&manifest, &val_split, seed, &[&ft_entries])?;
    println!(
        "fine-tuning on {} images, validating on {} images",
        ft_entries.len(),
        val_entries.len()
    );

    let hw = checkpoint.config.image_hw;
    let ft_images = load_images(&manifest.root, &ft_entries, hw)?;
    let val_images = load_images(&manifest.root, &val_entries, hw)?;

    let out = resolve_output(&args.out);
    let mut opts = config.train_options(epochs, seed);
    if let Some(batch) = args.batch_size {
        opts.batch_size = batch;
    }
    if let Some(lr) = args.lr {
        opts.adam.lr = lr;
    }
    opts.save_path = Some(out.clone());

    let outcome = fine_tune(&checkpoint, &ft_images, &val_images, &opts)?;
    finish_run(&outcome, &out, args.log.as_deref())?;
    Ok(())
}

fn finish_run(outcome: &TrainOutcome, out: &Path, log: Option<&Path>) -> Result<()> {
    save_checkpoint(&outcome.checkpoint, out)?;
    let log_path = match log {
        Some(path) => resolve_output(path),
        None => out.with_extension("log.csv"),
    };
    convergence_log_write(&outcome.history, &log_path)?;

    for record in &outcome.history {
        println!(
            "epoch {:>4}  train_loss {:.6}  val_loss {:.6}  val_acc {:.4}",
            record.epoch, record.train_loss, record.val_loss, record.val_accuracy
        );
    }
    let ckpt = &outcome.checkpoint;
    println!(
        "saved checkpoint to {} (epoch {}, best val loss {}, best val acc {})",
        out.display(),
        ckpt.epoch,
        ckpt.best_val_loss.map_or("n/a".into(), |v| format!("{v:.6}")),
        ckpt.best_val_acc.map_or("n/a".into(), |v| format!("{v:.4}")),
    );
    println!("convergence log: {}", log_path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// TOML run configuration; flags override individual fields
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Checkpoint to evaluate
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset directory containing manifest.ndjson
    #[arg(long)]
    pub data: PathBuf,
    /// Directory for confusion-matrix files [default: <data>/eval]
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Restrict evaluation to these SNRs [default: every SNR in the manifest]
    #[arg(long, value_delimiter = ',')]
    pub snrs: Option<Vec<f64>>,
    /// Stratified subsample size per (class, SNR) [default: all entries]
    #[arg(long)]
    pub per_class: Option<usize>,
    /// Row label: was this SNR grid seen in training? [default: in]
    #[arg(long, default_value = "in", value_parser = ["in", "out"])]
    pub distribution: String,
    /// Seed for the stratified subsample draw [default: 0]
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn cmd_eval(args: EvalArgs) -> Result<()> {
    let _config = RunConfig::load(args.config.as_deref())?;
    let checkpoint = load_checkpoint(&args.checkpoint)?;
    let manifest = load_manifest(&args.data.join(MANIFEST_FILENAME))?;

    let entries = match &args.snrs {
        None => manifest.entries.clone(),
        Some(snrs) => {
            let wanted: HashSet<i64> =
                snrs.iter().map(|&s| amc_core::dataset::snr_millibels(s)).collect();
            manifest
                .entries
                .iter()
                .filter(|e| wanted.contains(&amc_core::dataset::snr_millibels(e.snr_db)))
                .cloned()
                .collect()
        }
    };
    if entries.is_empty() {
        bail!("no manifest entries match the requested SNRs");
    }
    let entries = match args.per_class {
        None => entries,
        Some(per_class) => {
            let role = if args.distribution == "in" { SplitRole::TestIn } else { SplitRole::TestOut };
            let mut snrs: Vec<f64> = Vec::new();
            for e in &entries {
                if !snrs
                    .iter()
                    .any(|&s| amc_core::dataset::snr_millibels(s) == amc_core::dataset::snr_millibels(e.snr_db))
                {
                    snrs.push(e.snr_db);
                }
            }
            let filtered = DatasetManifest { root: manifest.root.clone(), entries };
            make_split(&filtered, &SplitSpec::new(role, snrs, per_class), args.seed, &[])?
        }
    };

    let images = load_images(&manifest.root, &entries, checkpoint.config.image_hw)?;
    let records = predict(&checkpoint, &images)?;
    let class_names = class_names(&checkpoint);
    let cm = confusion(&records, &class_names)?;
    let rep = report(&cm)?;

    let snr_list = {
        let mut seen: Vec<String> = Vec::new();
        for e in &entries {
            let s = amc_core::dataset::format_snr(e.snr_db);
            if !seen.contains(&s) {
                seen.push(s);
            }
        }
        seen.join(",")
    };
    print_report(&rep, &class_names, &args.distribution, &snr_list, records.len());

    let out_dir = resolve_output(&args.out_dir.clone().unwrap_or_else(|| args.data.join("eval")));
    fs::create_dir_all(&out_dir)?;
    let tsv_path = out_dir.join("confusion.tsv");
    fs::write(&tsv_path, cm.to_delimited())?;
    let png_path = out_dir.join("confusion.png");
    fs::write(&png_path, cm.to_heatmap_png(24)?)?;
    println!("confusion matrix: {} and {}", tsv_path.display(), png_path.display());
    Ok(())
}

fn class_names(checkpoint: &Checkpoint) -> Vec<String> {
    let n = checkpoint.config.n_classes;
    if n == ModulationScheme::ALL.len() {
        ModulationScheme::ALL.iter().map(|s| s.name().to_string()).collect()
    } else {
        (0..n).map(|i| format!("class{i}")).collect()
    }
}

fn print_report(
    rep: &MetricsReport,
    class_names: &[String],
    distribution: &str,
    snrs: &str,
    samples: usize,
) {
    println!(
        "{:<14} {:<18} {:>8} {:>10} {:>10} {:>10} {:>10}",
        "distribution", "snrs_db", "samples", "accuracy", "precision", "recall", "f1"
    );
    println!(
        "{:<14} {:<18} {:>8} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
        distribution, snrs, samples, rep.accuracy, rep.macro_precision, rep.macro_recall,
        rep.macro_f1
    );
    println!();
    println!(
        "{:<10} {:>8} {:>10} {:>10} {:>10}",
        "class", "support", "precision", "recall", "f1"
    );
    for (name, scores) in class_names.iter().zip(&rep.per_class) {
        let flag = if !scores.precision_defined || !scores.recall_defined { " *" } else { "" };
        println!(
            "{:<10} {:>8} {:>10.4} {:>10.4} {:>10.4}{}",
            name, scores.support, scores.precision, scores.recall, scores.f1, flag
        );
    }
    if rep.per_class.iter().any(|s| !s.precision_defined || !s.recall_defined) {
        println!("* undefined precision/recall (no predictions or no samples), scored as 0");
    }
}

// ---------------------------------------------------------------------------
// render
// ---------------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct RenderArgs {
    /// TOML run configuration; flags override individual fields
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Modulation scheme to render
    #[arg(long, value_parser = parse_scheme)]
    pub scheme: ModulationScheme,
    /// Channel SNR in dB
    #[arg(long)]
    pub snr: f64,
    /// Frame seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory [default: render]
    #[arg(long, default_value = "render")]
    pub out: PathBuf,
}

pub fn cmd_render(args: RenderArgs) -> Result<()> {
    let config = RunConfig::load(args.config.as_deref())?;
    let frame = config.frame_template();
    let channel = config.channel_template();
    let imaging = config.imaging_config()?;

    let signal =
        amc_core::dataset::render_frame(args.scheme, args.snr, args.seed, &frame, &channel)?;
    let dropped = signal.samples.iter().filter(|s| imaging.plane.bin(**s).is_none()).count();

    let gray = rasterize_gray(&signal.samples, imaging.plane);
    let enhanced = enhance_gray(
        &signal.samples,
        imaging.plane,
        &DecayParams {
            alpha: imaging.alphas[1],
            cutoff_radius_px: imaging.cutoff_radius_px,
            power_mode: imaging.power_mode,
        },
    );
    let rgb = amc_core::imaging::compose_three_channel(
        &signal.samples,
        imaging.plane,
        imaging.alphas,
        imaging.power_mode,
        imaging.cutoff_radius_px,
    )?;

    let out_dir = resolve_output(&args.out);
    fs::create_dir_all(&out_dir)?;
    let stem = format!("{}_{}db_seed{}", args.scheme, amc_core::dataset::format_snr(args.snr), args.seed);
    let gray_path = out_dir.join(format!("{stem}_gray.png"));
    let enhanced_path = out_dir.join(format!("{stem}_enhanced.png"));
    let rgb_path = out_dir.join(format!("{stem}_rgb.png"));
    fs::write(&gray_path, encode_gray_png(&gray.grid)?)?;
    fs::write(&enhanced_path, encode_gray_png(&enhanced)?)?;
    fs::write(&rgb_path, encode_png(&rgb)?)?;

    println!("{}", gray_path.display());
    println!("{}", enhanced_path.display());
    println!("{}", rgb_path.display());
    println!(
        "{} samples total, {} outside the {}x{} window (half-width {})",
        signal.len(),
        dropped,
        imaging.plane.width_px,
        imaging.plane.height_px,
        imaging.plane.scale
    );
    Ok(())
}

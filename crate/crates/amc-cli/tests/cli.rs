//! End-to-end tests of the `amc` binary: subcommand behaviour, exit codes,
//! and determinism of the on-disk artifacts.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn amc(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_amc"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Shrunk frames and a small validation split keep the test quick.
fn write_test_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("amc.toml");
    fs::write(
        &path,
        "[frame]\n\
         n_symbols = 256\n\
         [splits]\n\
         validation_snrs_db = [0.0]\n\
         validation_per_class = 2\n",
    )
    .unwrap();
    path
}

#[test]
fn generate_is_deterministic_and_counts_match() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_test_config(dir.path());
    let args = [
        "generate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        "data",
        "--schemes",
        "OOK,GMSK",
        "--snrs",
        "0,10",
        "--per-class",
        "5",
        "--seed",
        "7",
    ];
    let first = amc(&args, dir.path());
    assert!(first.status.success(), "{}", stderr(&first));
    let text = stdout(&first);
    assert!(text.contains("wrote 20 images"), "{text}");
    assert!(text.contains("manifest: 20 entries"), "{text}");

    let manifest = fs::read(dir.path().join("data/manifest.ndjson")).unwrap();
    assert_eq!(manifest.iter().filter(|&&b| b == b'\n').count(), 20);
    let sample = fs::read(dir.path().join("data/OOK/0/00000.png")).unwrap();

    let second = amc(&args, dir.path());
    assert!(second.status.success());
    // Identical printed hash, identical bytes.
    let hash = |s: &str| {
        s.lines().find(|l| l.contains("sha256")).map(|l| l.to_string()).unwrap()
    };
    assert_eq!(hash(&text), hash(&stdout(&second)));
    assert_eq!(fs::read(dir.path().join("data/OOK/0/00000.png")).unwrap(), sample);
}

#[test]
fn full_pipeline_train_finetune_eval() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_test_config(dir.path());
    let config = config.to_str().unwrap();

    let gen = amc(
        &[
            "generate", "--config", config, "--out", "data", "--schemes", "OOK,DQPSK", "--snrs",
            "0,10", "--per-class", "6", "--seed", "5",
        ],
        dir.path(),
    );
    assert!(gen.status.success(), "{}", stderr(&gen));

    // Zero-epoch training still writes a checkpoint and a summary.
    let train0 = amc(
        &[
            "train", "--config", config, "--data", "data", "--out", "zero.ckpt", "--epochs", "0",
        ],
        dir.path(),
    );
    assert!(train0.status.success(), "{}", stderr(&train0));
    assert!(dir.path().join("zero.ckpt").is_file());
    assert!(stdout(&train0).contains("saved checkpoint"));

    let train = amc(
        &[
            "train", "--config", config, "--data", "data", "--out", "base.ckpt", "--epochs", "2",
            "--batch-size", "8", "--lr", "0.001",
        ],
        dir.path(),
    );
    assert!(train.status.success(), "{}", stderr(&train));
    assert!(stdout(&train).contains("epoch    2"));
    assert!(dir.path().join("base.log.csv").is_file());

    let finetune = amc(
        &[
            "finetune", "--config", config, "--checkpoint", "base.ckpt", "--data", "data",
            "--out", "ft.ckpt", "--epochs", "1", "--snrs", "0,10", "--per-class", "3",
            "--val-per-class", "1", "--batch-size", "8",
        ],
        dir.path(),
    );
    assert!(finetune.status.success(), "{}", stderr(&finetune));

    let eval = amc(
        &[
            "eval", "--checkpoint", "ft.ckpt", "--data", "data", "--snrs", "0,10",
            "--distribution", "in",
        ],
        dir.path(),
    );
    assert!(eval.status.success(), "{}", stderr(&eval));
    let text = stdout(&eval);
    assert!(text.contains("distribution"), "{text}");
    assert!(text.contains("in "), "{text}");
    assert!(text.contains("OOK"), "{text}");
    assert!(dir.path().join("data/eval/confusion.tsv").is_file());
    assert!(dir.path().join("data/eval/confusion.png").is_file());
}

#[test]
fn render_writes_three_encodings() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_test_config(dir.path());
    let run = amc(
        &[
            "render",
            "--config",
            config.to_str().unwrap(),
            "--scheme",
            "GMSK",
            "--snr",
            "10",
            "--seed",
            "3",
            "--out",
            "imgs",
        ],
        dir.path(),
    );
    assert!(run.status.success(), "{}", stderr(&run));
    for suffix in ["gray", "enhanced", "rgb"] {
        let path = dir.path().join(format!("imgs/GMSK_10db_seed3_{suffix}.png"));
        assert!(path.is_file(), "{} missing", path.display());
    }

    // Identical seeds produce identical files.
    let before = fs::read(dir.path().join("imgs/GMSK_10db_seed3_rgb.png")).unwrap();
    let rerun = amc(
        &[
            "render",
            "--config",
            config.to_str().unwrap(),
            "--scheme",
            "GMSK",
            "--snr",
            "10",
            "--seed",
            "3",
            "--out",
            "imgs",
        ],
        dir.path(),
    );
    assert!(rerun.status.success());
    assert_eq!(fs::read(dir.path().join("imgs/GMSK_10db_seed3_rgb.png")).unwrap(), before);
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bogus = amc(&["render", "--scheme", "BOGUS", "--snr", "5"], dir.path());
    assert_eq!(bogus.status.code(), Some(1));
    assert!(stderr(&bogus).contains("BOGUS"), "{}", stderr(&bogus));

    let unknown = amc(&["frobnicate"], dir.path());
    assert_eq!(unknown.status.code(), Some(1));

    let help = amc(&["--help"], dir.path());
    assert_eq!(help.status.code(), Some(0));
    for subcommand in ["generate", "train", "finetune", "eval", "render"] {
        assert!(stdout(&help).contains(subcommand));
    }

    // Per-flag defaults are documented in help.
    let help = amc(&["generate", "--help"], dir.path());
    assert!(stdout(&help).contains("default: 100"), "{}", stdout(&help));
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();

    // Missing dataset.
    let missing = amc(
        &["train", "--data", "nowhere", "--out", "x.ckpt", "--epochs", "1"],
        dir.path(),
    );
    assert_eq!(missing.status.code(), Some(2));

    // Unknown key in the config file names the key.
    fs::write(dir.path().join("bad.toml"), "[dataset]\nnot_a_key = 1\n").unwrap();
    let bad = amc(
        &["generate", "--config", "bad.toml", "--out", "d", "--per-class", "1"],
        dir.path(),
    );
    assert_eq!(bad.status.code(), Some(2));
    assert!(stderr(&bad).contains("not_a_key"), "{}", stderr(&bad));
}

#[test]
fn eval_rejects_mismatched_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    // 20x20 images cannot be integer-upscaled to the desk classifier's 64x64.
    fs::write(
        dir.path().join("amc.toml"),
        "[frame]\nn_symbols = 128\n[imaging]\nwidth_px = 20\nheight_px = 20\n\
         [splits]\nvalidation_snrs_db = [0.0]\nvalidation_per_class = 1\n",
    )
    .unwrap();
    let gen = amc(
        &[
            "generate", "--config", "amc.toml", "--out", "data", "--schemes", "OOK,GMSK",
            "--snrs", "0", "--per-class", "3", "--seed", "2",
        ],
        dir.path(),
    );
    assert!(gen.status.success(), "{}", stderr(&gen));

    let train = amc(
        &[
            "train", "--config", "amc.toml", "--data", "data", "--out", "m.ckpt", "--epochs", "0",
        ],
        dir.path(),
    );
    assert_eq!(train.status.code(), Some(2), "{}", stderr(&train));
    assert!(stderr(&train).contains("upscaled"), "{}", stderr(&train));
}

#[test]
fn output_root_env_redirects_relative_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("root");
    fs::create_dir_all(&root).unwrap();
    let config = write_test_config(dir.path());
    let run = Command::new(env!("CARGO_BIN_EXE_amc"))
        .args([
            "render",
            "--config",
            config.to_str().unwrap(),
            "--scheme",
            "OOK",
            "--snr",
            "10",
            "--out",
            "pics",
        ])
        .current_dir(dir.path())
        .env("AMC_OUTPUT_ROOT", &root)
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", stderr(&run));
    assert!(root.join("pics/OOK_10db_seed0_rgb.png").is_file());
    assert!(!dir.path().join("pics").exists());
}

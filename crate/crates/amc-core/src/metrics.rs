//! Classification evaluation: confusion matrices, accuracy, macro
//! precision/recall/F1, and per-epoch convergence logs.

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ExtendedColorType, ImageEncoder};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

/// One prediction: ground-truth label and the classifier's output.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub label: usize,
    pub predicted: usize,
    pub logits: Vec<f32>,
}

/// Row = true class, column = predicted class.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
    pub class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Tab-separated rendering with a header row of class names.
    pub fn to_delimited(&self) -> String {
        let mut out = String::from("true\\pred");
        for name in &self.class_names {
            out.push('\t');
            out.push_str(name);
        }
        out.push('\n');
        for (name, row) in self.class_names.iter().zip(&self.counts) {
            out.push_str(name);
            for &v in row {
                out.push('\t');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    /// Grayscale heatmap PNG: intensity proportional to row-normalized
    /// counts, each cell rendered as a `cell_px` square block.
    pub fn to_heatmap_png(&self, cell_px: usize) -> Result<Vec<u8>, MetricsError> {
        let n = self.n_classes();
        let side = n * cell_px;
        let mut raw = vec![0u8; side * side];
        for (r, row) in self.counts.iter().enumerate() {
            let row_total: u64 = row.iter().sum();
            for (c, &v) in row.iter().enumerate() {
                let intensity = if row_total > 0 {
                    (255.0 * v as f64 / row_total as f64).round() as u8
                } else {
                    0
                };
                for dr in 0..cell_px {
                    for dc in 0..cell_px {
                        raw[(r * cell_px + dr) * side + c * cell_px + dc] = intensity;
                    }
                }
            }
        }
        let mut bytes = Vec::new();
        let encoder = PngEncoder::new_with_quality(
            &mut bytes,
            CompressionType::Default,
            FilterType::Adaptive,
        );
        encoder
            .write_image(&raw, side as u32, side as u32, ExtendedColorType::L8)
            .map_err(|e| MetricsError::Io(io::Error::other(e.to_string())))?;
        Ok(bytes)
    }
}

/// Per-class scores. Precision is undefined when nothing was predicted as
/// the class, recall when the class has no true samples; undefined scores
/// enter the macro averages as 0 and are flagged.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    pub precision_defined: bool,
    pub recall_defined: bool,
}

/// Accuracy plus per-class and macro-averaged precision/recall/F1.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub per_class: Vec<ClassScores>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

/// One training epoch's summary, as logged for convergence plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug)]
pub enum MetricsError {
    LabelOutOfRange { value: usize, n_classes: usize },
    EmptyMatrix,
    Io(io::Error),
    MalformedRecord { line: usize, message: String },
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsError::LabelOutOfRange { value, n_classes } => {
                write!(f, "label {value} out of range for {n_classes} classes")
            }
            MetricsError::EmptyMatrix => write!(f, "confusion matrix has no observations"),
            MetricsError::Io(e) => write!(f, "io error: {e}"),
            MetricsError::MalformedRecord { line, message } => {
                write!(f, "malformed record at line {line}: {message}")
            }
        }
    }
}

impl std::error::Error for MetricsError {}

impl From<io::Error> for MetricsError {
    fn from(e: io::Error) -> Self {
        MetricsError::Io(e)
    }
}

/// Tally predictions into a confusion matrix.
pub fn confusion(
    records: &[PredictionRecord],
    class_names: &[String],
) -> Result<ConfusionMatrix, MetricsError> {
    let n = class_names.len();
    let mut counts = vec![vec![0u64; n]; n];
    for rec in records {
        if rec.label >= n {
            return Err(MetricsError::LabelOutOfRange { value: rec.label, n_classes: n });
        }
        if rec.predicted >= n {
            return Err(MetricsError::LabelOutOfRange { value: rec.predicted, n_classes: n });
        }
        counts[rec.label][rec.predicted] += 1;
    }
    Ok(ConfusionMatrix { counts, class_names: class_names.to_vec() })
}

/// Derive accuracy and macro precision/recall/F1 from a confusion matrix.
pub fn report(cm: &ConfusionMatrix) -> Result<MetricsReport, MetricsError> {
    let n = cm.n_classes();
    let total = cm.total();
    if n == 0 || total == 0 {
        return Err(MetricsError::EmptyMatrix);
    }

    let mut per_class = Vec::with_capacity(n);
    for k in 0..n {
        let tp = cm.counts[k][k];
        let actual: u64 = cm.counts[k].iter().sum();
        let predicted: u64 = cm.counts.iter().map(|row| row[k]).sum();

        let precision_defined = predicted > 0;
        let recall_defined = actual > 0;
        let precision = if precision_defined { tp as f64 / predicted as f64 } else { 0.0 };
        let recall = if recall_defined { tp as f64 / actual as f64 } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.push(ClassScores {
            precision,
            recall,
            f1,
            support: actual,
            precision_defined,
            recall_defined,
        });
    }

    let trace: u64 = (0..n).map(|k| cm.counts[k][k]).sum();
    let mean = |f: fn(&ClassScores) -> f64| -> f64 {
        per_class.iter().map(f).sum::<f64>() / n as f64
    };
    Ok(MetricsReport {
        accuracy: trace as f64 / total as f64,
        macro_precision: mean(|c| c.precision),
        macro_recall: mean(|c| c.recall),
        macro_f1: mean(|c| c.f1),
        per_class,
    })
}

/// Write per-epoch records as comma-delimited text with a header line.
/// Floats are printed with Rust's shortest round-trip formatting, so a
/// read-back reproduces the values exactly.
pub fn convergence_log_write(records: &[EpochRecord], path: &Path) -> Result<(), MetricsError> {
    let mut out = String::from("epoch,train_loss,val_loss,val_accuracy\n");
    for r in records {
        out.push_str(&format!("{},{},{},{}\n", r.epoch, r.train_loss, r.val_loss, r.val_accuracy));
    }
    let mut file = fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

/// Read back a convergence log written by [`convergence_log_write`].
pub fn convergence_log_read(path: &Path) -> Result<Vec<EpochRecord>, MetricsError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == "epoch,train_loss,val_loss,val_accuracy" => {}
        Some((_, other)) => {
            return Err(MetricsError::MalformedRecord {
                line: 1,
                message: format!("unexpected header '{other}'"),
            })
        }
        None => return Ok(Vec::new()),
    }

    let mut records = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(MetricsError::MalformedRecord {
                line: idx + 1,
                message: format!("expected 4 fields, got {}", fields.len()),
            });
        }
        let parse_f = |s: &str| {
            s.parse::<f64>().map_err(|e| MetricsError::MalformedRecord {
                line: idx + 1,
                message: format!("'{s}': {e}"),
            })
        };
        records.push(EpochRecord {
            epoch: fields[0].parse().map_err(|e| MetricsError::MalformedRecord {
                line: idx + 1,
                message: format!("'{}': {e}", fields[0]),
            })?,
            train_loss: parse_f(fields[1])?,
            val_loss: parse_f(fields[2])?,
            val_accuracy: parse_f(fields[3])?,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    fn record(label: usize, predicted: usize) -> PredictionRecord {
        PredictionRecord { label, predicted, logits: vec![] }
    }

    #[test]
    fn perfect_predictions_are_diagonal() {
        let records: Vec<_> = (0..4).flat_map(|k| vec![record(k, k); 3]).collect();
        let cm = confusion(&records, &names(4)).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                assert_eq!(cm.counts[r][c], if r == c { 3 } else { 0 });
            }
        }
        let rep = report(&cm).unwrap();
        assert_eq!(rep.accuracy, 1.0);
        assert_eq!(rep.macro_precision, 1.0);
        assert_eq!(rep.macro_recall, 1.0);
        assert_eq!(rep.macro_f1, 1.0);
    }

    #[test]
    fn three_record_tally() {
        let cm = confusion(&[record(0, 0), record(0, 1), record(1, 1)], &names(2)).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 1], vec![0, 1]]);
    }

    #[test]
    fn thousand_records_match_tally_oracle() {
        let mut rng = crate::rng::seed_rng(77);
        let n = 7;
        let records: Vec<PredictionRecord> =
            (0..1000).map(|_| record(rng.gen_range(0..n), rng.gen_range(0..n))).collect();
        let cm = confusion(&records, &names(n)).unwrap();

        let mut tally = vec![vec![0u64; n]; n];
        for r in &records {
            tally[r.label][r.predicted] += 1;
        }
        assert_eq!(cm.counts, tally);
        assert_eq!(cm.total(), 1000);
    }

    #[test]
    fn label_out_of_range_rejected() {
        let err = confusion(&[record(2, 0)], &names(2)).unwrap_err();
        assert!(matches!(err, MetricsError::LabelOutOfRange { value: 2, n_classes: 2 }));
    }

    #[test]
    fn worked_two_class_example() {
        // counts [[1,1],[0,1]]: class0 P=1 R=0.5 F1=2/3; class1 P=0.5 R=1
        // F1=2/3; accuracy 2/3; macro F1 2/3.
        let cm = ConfusionMatrix { counts: vec![vec![1, 1], vec![0, 1]], class_names: names(2) };
        let rep = report(&cm).unwrap();
        assert!((rep.accuracy - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(rep.per_class[0].precision, 1.0);
        assert_eq!(rep.per_class[0].recall, 0.5);
        assert!((rep.per_class[0].f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(rep.per_class[1].precision, 0.5);
        assert_eq!(rep.per_class[1].recall, 1.0);
        assert!((rep.macro_f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_prediction_class_flagged_and_scored_zero() {
        // Nothing ever predicted as class 1.
        let cm = ConfusionMatrix { counts: vec![vec![2, 0], vec![2, 0]], class_names: names(2) };
        let rep = report(&cm).unwrap();
        assert!(!rep.per_class[1].precision_defined);
        assert_eq!(rep.per_class[1].precision, 0.0);
        assert!(rep.per_class[0].precision_defined);
        assert!((rep.macro_precision - 0.25).abs() < 1e-15);
    }

    #[test]
    fn empty_matrix_rejected() {
        let cm = ConfusionMatrix { counts: vec![vec![0, 0], vec![0, 0]], class_names: names(2) };
        assert!(matches!(report(&cm), Err(MetricsError::EmptyMatrix)));
    }

    /// Brute-force per-class reference computation.
    fn report_brute_force(cm: &ConfusionMatrix) -> (f64, f64, f64, f64) {
        let n = cm.n_classes();
        let total = cm.total() as f64;
        let mut correct = 0u64;
        let (mut sp, mut sr, mut sf) = (0.0, 0.0, 0.0);
        for k in 0..n {
            correct += cm.counts[k][k];
            let tp = cm.counts[k][k] as f64;
            let mut fp = 0.0;
            let mut fn_ = 0.0;
            for j in 0..n {
                if j != k {
                    fp += cm.counts[j][k] as f64;
                    fn_ += cm.counts[k][j] as f64;
                }
            }
            let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let r = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
            sp += p;
            sr += r;
            sf += if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        }
        (correct as f64 / total, sp / n as f64, sr / n as f64, sf / n as f64)
    }

    #[test]
    fn report_matches_brute_force_on_random_matrices() {
        let mut rng = crate::rng::seed_rng(11);
        for _ in 0..100 {
            let n = rng.gen_range(2..=10);
            let counts: Vec<Vec<u64>> =
                (0..n).map(|_| (0..n).map(|_| rng.gen_range(0..20)).collect()).collect();
            let cm = ConfusionMatrix { counts, class_names: names(n) };
            if cm.total() == 0 {
                continue;
            }
            let rep = report(&cm).unwrap();
            let (acc, mp, mr, mf) = report_brute_force(&cm);
            assert!((rep.accuracy - acc).abs() < 1e-12);
            assert!((rep.macro_precision - mp).abs() < 1e-12);
            assert!((rep.macro_recall - mr).abs() < 1e-12);
            assert!((rep.macro_f1 - mf).abs() < 1e-12);
            // Micro identity and bounds.
            for score in [rep.accuracy, rep.macro_precision, rep.macro_recall, rep.macro_f1] {
                assert!((0.0..=1.0).contains(&score));
            }
        }
    }

    #[test]
    fn relabeling_permutes_scores() {
        let mut rng = crate::rng::seed_rng(12);
        let n = 5;
        let counts: Vec<Vec<u64>> =
            (0..n).map(|_| (0..n).map(|_| rng.gen_range(1..30)).collect()).collect();
        let cm = ConfusionMatrix { counts: counts.clone(), class_names: names(n) };
        let rep = report(&cm).unwrap();

        let perm = [3usize, 0, 4, 1, 2];
        let mut permuted = vec![vec![0u64; n]; n];
        for r in 0..n {
            for c in 0..n {
                permuted[perm[r]][perm[c]] = counts[r][c];
            }
        }
        let cm_p = ConfusionMatrix { counts: permuted, class_names: names(n) };
        let rep_p = report(&cm_p).unwrap();
        assert!((rep.accuracy - rep_p.accuracy).abs() < 1e-15);
        assert!((rep.macro_f1 - rep_p.macro_f1).abs() < 1e-12);
        for k in 0..n {
            assert_eq!(rep.per_class[k], rep_p.per_class[perm[k]]);
        }
    }

    #[test]
    fn convergence_log_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");

        convergence_log_write(&[], &path).unwrap();
        assert_eq!(convergence_log_read(&path).unwrap(), vec![]);

        let records = vec![
            EpochRecord { epoch: 1, train_loss: 2.302585, val_loss: 2.29, val_accuracy: 0.1 },
            EpochRecord { epoch: 2, train_loss: 1.5, val_loss: 1.6, val_accuracy: 0.42 },
            EpochRecord {
                epoch: 3,
                train_loss: 0.987654321,
                val_loss: 1.111111,
                val_accuracy: 0.666667,
            },
        ];
        convergence_log_write(&records, &path).unwrap();
        assert_eq!(convergence_log_read(&path).unwrap(), records);
    }

    #[test]
    fn convergence_log_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        fs::write(&path, "epoch,train_loss,val_loss,val_accuracy\n1,abc,2,3\n").unwrap();
        match convergence_log_read(&path) {
            Err(MetricsError::MalformedRecord { line: 2, .. }) => {}
            other => panic!("expected malformed record, got {other:?}"),
        }
    }

    #[test]
    fn heatmap_and_delimited_exports() {
        let cm = ConfusionMatrix { counts: vec![vec![9, 1], vec![0, 10]], class_names: names(2) };
        let text = cm.to_delimited();
        assert!(text.contains("c0\t9\t1"));
        let png = cm.to_heatmap_png(8).unwrap();
        let pixels = crate::imaging::decode_png(&png).unwrap();
        assert_eq!(pixels.shape(), [16, 16, 3]);
        // Row 0 is 90% diag: intensity 230 left, 26 right.
        assert_eq!(pixels[[0, 0, 0]], 230);
        assert_eq!(pixels[[0, 15, 0]], 26);
        assert_eq!(pixels[[15, 0, 0]], 0);
        assert_eq!(pixels[[15, 15, 0]], 255);
    }
}

//! Image-level orchestration: majority voting over patch predictions,
//! manifest evaluation into confusion matrices, misclassification
//! overlays, and the end-to-end experiment driver.

mod experiment;

pub use experiment::{
    derive_seed, run_experiment, split_patch_rows, ExperimentConfig, ExperimentReport,
};

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chains::DatasetManifest;
use crate::error::{Error, Result};
use crate::features::{extract_feature, extract_patches, BinSchedule};
use crate::jpeg;
use crate::nn::{argmax, Checkpoint};
use crate::ppm::{write_ppm_file, RasterImage};

/// Verdict for one image: per-patch predictions and the voted label.
/// Labels are 1-based class indices (class k = compressed k times).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageDecision {
    pub image_id: u32,
    /// Manifest-relative path; empty for standalone classification.
    pub path: String,
    /// Ground truth when known, `None` for standalone classification.
    pub true_label: Option<u8>,
    /// Predicted label per patch, row-major patch order.
    pub patch_labels: Vec<u8>,
    /// Softmax distribution per patch.
    pub patch_probabilities: Vec<Vec<f32>>,
    /// Majority-vote result.
    pub final_label: u8,
}

/// Majority vote over per-patch predictions. Count ties are broken by the
/// larger probability mass summed over all patches, remaining ties by the
/// lower class index.
pub fn majority_vote(labels: &[u8], probabilities: &[Vec<f32>]) -> Result<u8> {
    if labels.is_empty() {
        return Err(Error::EmptyInput("patch predictions"));
    }
    if labels.len() != probabilities.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} labels against {} probability vectors",
            labels.len(),
            probabilities.len()
        )));
    }
    let classes = probabilities[0].len();
    for (i, probs) in probabilities.iter().enumerate() {
        if probs.len() != classes {
            return Err(Error::ShapeMismatch(format!(
                "probability vector {i} has length {}, expected {classes}",
                probs.len()
            )));
        }
    }
    let mut counts = vec![0usize; classes];
    let mut mass = vec![0.0f64; classes];
    for (&label, probs) in labels.iter().zip(probabilities) {
        if label == 0 || label as usize > classes {
            return Err(Error::InvalidConfig(format!(
                "patch label {label} outside 1..={classes}"
            )));
        }
        counts[label as usize - 1] += 1;
        for (m, &p) in mass.iter_mut().zip(probs) {
            *m += f64::from(p);
        }
    }
    let top = *counts.iter().max().expect("at least one class");
    let mut best = None;
    for c in 0..classes {
        if counts[c] != top {
            continue;
        }
        match best {
            None => best = Some(c),
            Some(b) if mass[c] > mass[b] => best = Some(c),
            _ => {}
        }
    }
    Ok(best.expect("some class holds the top count") as u8 + 1)
}

fn check_fingerprint(ckpt: &Checkpoint, schedule: &BinSchedule) -> Result<()> {
    if ckpt.feature_fingerprint != schedule.fingerprint() {
        return Err(Error::ConfigMismatch(format!(
            "model was trained on feature layout {:016x}, requested schedule is {:016x}",
            ckpt.feature_fingerprint,
            schedule.fingerprint()
        )));
    }
    Ok(())
}

fn decide(
    planes: &jpeg::QuantizedDctPlanes,
    ckpt: &Checkpoint,
    schedule: &BinSchedule,
) -> Result<(Vec<u8>, Vec<Vec<f32>>, u8)> {
    let patches = extract_patches(planes, schedule.patch_size);
    if patches.is_empty() {
        return Err(Error::EmptyInput("no full patch fits inside the image"));
    }
    let features: Vec<Vec<f32>> = patches
        .iter()
        .map(|p| extract_feature(p, schedule).values.iter().map(|&v| v as f32).collect())
        .collect();
    let views: Vec<&[f32]> = features.iter().map(|f| f.as_slice()).collect();
    let probabilities = ckpt.predict_batch(&views)?;
    let labels: Vec<u8> = probabilities.iter().map(|p| argmax(p) as u8 + 1).collect();
    let final_label = majority_vote(&labels, &probabilities)?;
    Ok((labels, probabilities, final_label))
}

/// Classify one JPEG: patches -> features -> per-patch prediction -> vote.
/// The schedule must match the layout the model was trained on.
pub fn classify_image(
    bytes: &[u8],
    ckpt: &Checkpoint,
    schedule: &BinSchedule,
) -> Result<ImageDecision> {
    check_fingerprint(ckpt, schedule)?;
    let planes = jpeg::decode_coefficients(bytes)?;
    let (patch_labels, patch_probabilities, final_label) = decide(&planes, ckpt, schedule)?;
    Ok(ImageDecision {
        image_id: 0,
        path: String::new(),
        true_label: None,
        patch_labels,
        patch_probabilities,
        final_label,
    })
}

/// Classify every row of a manifest, in manifest order (parallel across
/// rows; results are order- and thread-count-independent).
pub fn decide_manifest(
    manifest_dir: &Path,
    manifest: &DatasetManifest,
    ckpt: &Checkpoint,
    schedule: &BinSchedule,
) -> Result<Vec<ImageDecision>> {
    check_fingerprint(ckpt, schedule)?;
    manifest
        .rows
        .par_iter()
        .map(|row| {
            let bytes = std::fs::read(manifest_dir.join(&row.path))?;
            let planes = jpeg::decode_coefficients(&bytes)?;
            let (patch_labels, patch_probabilities, final_label) =
                decide(&planes, ckpt, schedule)?;
            Ok(ImageDecision {
                image_id: row.image_id,
                path: row.path.clone(),
                true_label: Some(row.class_label),
                patch_labels,
                patch_probabilities,
                final_label,
            })
        })
        .collect()
}

/// Granularity of a confusion matrix: one tally per patch or one per image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalLevel {
    Patch,
    Image,
}

/// Row = true class, column = predicted class; percentages and the average
/// accuracy (unweighted mean of the diagonal, i.e. mean per-class recall)
/// are derived from raw counts on demand.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: usize,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix { classes, counts: vec![vec![0; classes]; classes] }
    }

    /// Tally one item; labels are 1-based.
    pub fn record(&mut self, true_label: u8, predicted: u8) {
        self.counts[true_label as usize - 1][predicted as usize - 1] += 1;
    }

    pub fn row_totals(&self) -> Vec<u64> {
        self.counts.iter().map(|row| row.iter().sum()).collect()
    }

    /// Row-normalized percentages; a row with no items stays all-zero.
    pub fn percentages(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let total: u64 = row.iter().sum();
                if total == 0 {
                    vec![0.0; self.classes]
                } else {
                    row.iter().map(|&c| 100.0 * c as f64 / total as f64).collect()
                }
            })
            .collect()
    }

    pub fn average_accuracy(&self) -> f64 {
        let pct = self.percentages();
        (0..self.classes).map(|i| pct[i][i]).sum::<f64>() / self.classes as f64
    }

    /// Percentage table plus a trailing average-accuracy line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class");
        for j in 1..=self.classes {
            out.push_str(&format!(",C{j}"));
        }
        out.push('\n');
        for (i, row) in self.percentages().iter().enumerate() {
            out.push_str(&format!("C{}", i + 1));
            for v in row {
                out.push_str(&format!(",{v:.4}"));
            }
            out.push('\n');
        }
        out.push_str(&format!("average_accuracy,{:.4}\n", self.average_accuracy()));
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// JSON with the raw counts and the derived views.
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let value = serde_json::json!({
            "classes": self.classes,
            "counts": self.counts,
            "percentages": self.percentages(),
            "average_accuracy": self.average_accuracy(),
        });
        std::fs::write(path, serde_json::to_string_pretty(&value)?)?;
        Ok(())
    }
}

/// Tally decisions into a confusion matrix at the requested level. Every
/// decision must carry a ground-truth label.
pub fn confusion_from_decisions(
    decisions: &[ImageDecision],
    classes: usize,
    level: EvalLevel,
) -> Result<ConfusionMatrix> {
    if decisions.is_empty() {
        return Err(Error::EmptyInput("decisions"));
    }
    let check = |label: u8, what: &str| -> Result<()> {
        if label == 0 || label as usize > classes {
            return Err(Error::InvalidConfig(format!(
                "{what} label {label} outside 1..={classes}"
            )));
        }
        Ok(())
    };
    let mut matrix = ConfusionMatrix::new(classes);
    for decision in decisions {
        let truth = decision
            .true_label
            .ok_or_else(|| Error::InvalidConfig("decision carries no ground-truth label".into()))?;
        check(truth, "true")?;
        match level {
            EvalLevel::Patch => {
                for &label in &decision.patch_labels {
                    check(label, "predicted")?;
                    matrix.record(truth, label);
                }
            }
            EvalLevel::Image => {
                check(decision.final_label, "predicted")?;
                matrix.record(truth, decision.final_label);
            }
        }
    }
    Ok(matrix)
}

/// Evaluate a checkpoint over a manifest: classify every row and tally a
/// confusion matrix at the requested level.
pub fn evaluate(
    manifest_dir: &Path,
    manifest: &DatasetManifest,
    ckpt: &Checkpoint,
    schedule: &BinSchedule,
    level: EvalLevel,
) -> Result<ConfusionMatrix> {
    let decisions = decide_manifest(manifest_dir, manifest, ckpt, schedule)?;
    confusion_from_decisions(&decisions, ckpt.classes(), level)
}

/// Fill colors for misclassified patches, keyed by the patch's TRUE class:
/// C1 white, C2 red, C3 green, C4 blue, then yellow, magenta, cyan and
/// orange; the palette repeats past C8.
pub const OVERLAY_PALETTE: [[u8; 3]; 8] = [
    [255, 255, 255],
    [255, 0, 0],
    [0, 255, 0],
    [0, 0, 255],
    [255, 255, 0],
    [255, 0, 255],
    [0, 255, 255],
    [255, 128, 0],
];

pub fn class_color(label: u8) -> [u8; 3] {
    assert!(label >= 1, "class labels are 1-based");
    OVERLAY_PALETTE[(label as usize - 1) % OVERLAY_PALETTE.len()]
}

/// Render the misclassification overlay: decompress the JPEG, crop to the
/// patch grid, and fill each misclassified patch with its true class's
/// color. Without a ground-truth label no patch is misclassified and the
/// output equals the (cropped) decompressed image.
pub fn overlay_image(
    bytes: &[u8],
    decision: &ImageDecision,
    patch_size: usize,
) -> Result<RasterImage> {
    let img = jpeg::decompress(bytes)?;
    let grid_w = img.width / patch_size;
    let grid_h = img.height / patch_size;
    if grid_w * grid_h == 0 {
        return Err(Error::EmptyInput("no full patch fits inside the image"));
    }
    if decision.patch_labels.len() != grid_w * grid_h {
        return Err(Error::ShapeMismatch(format!(
            "decision has {} patches, image grid has {}",
            decision.patch_labels.len(),
            grid_w * grid_h
        )));
    }
    let (out_w, out_h) = (grid_w * patch_size, grid_h * patch_size);
    let mut data = vec![0u8; out_w * out_h * 3];
    for y in 0..out_h {
        data[y * out_w * 3..][..out_w * 3]
            .copy_from_slice(&img.data[y * img.width * 3..][..out_w * 3]);
    }
    if let Some(truth) = decision.true_label {
        let color = class_color(truth);
        for (i, &pred) in decision.patch_labels.iter().enumerate() {
            if pred == truth {
                continue;
            }
            let (px, py) = (i % grid_w, i / grid_w);
            for y in py * patch_size..(py + 1) * patch_size {
                for x in px * patch_size..(px + 1) * patch_size {
                    data[(y * out_w + x) * 3..][..3].copy_from_slice(&color);
                }
            }
        }
    }
    RasterImage::new(out_w, out_h, data)
}

/// Write the overlay as a binary PPM.
pub fn emit_overlay(
    bytes: &[u8],
    decision: &ImageDecision,
    patch_size: usize,
    out: &Path,
) -> Result<()> {
    let img = overlay_image(bytes, decision, patch_size)?;
    write_ppm_file(&img, out)
}

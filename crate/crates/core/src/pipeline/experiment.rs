//! End-to-end experiment driver: dataset -> features -> split -> training
//! -> evaluation -> report bundle, reproducible from a single seed.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chains::{build_dataset_from_sources, list_corpus, GenerationConfig, SplitTag};
use crate::error::{Error, Result};
use crate::features::store::{extract_manifest_features, write_store, FeatureRow};
use crate::features::{feature_dimension, fnv1a64, BinSchedule};
use crate::nn::{train, write_metrics_csv, EpochMetrics, ModelSpec, TrainConfig};
use crate::pipeline::{
    confusion_from_decisions, decide_manifest, emit_overlay, ConfusionMatrix, EvalLevel,
};

fn default_threshold() -> u32 {
    BinSchedule::default().threshold
}

fn default_patch_size() -> usize {
    BinSchedule::default().patch_size
}

fn default_conv_blocks() -> usize {
    4
}

fn default_filters() -> usize {
    256
}

fn default_dense_units() -> usize {
    512
}

fn default_dropout() -> f64 {
    0.1
}

fn default_overlay_samples() -> usize {
    4
}

/// One experiment, fully described. Unspecified knobs take the defaults
/// the toolkit uses everywhere (threshold 50, 128-pixel patches, a
/// 4-conv-block network with 256 filters and 512-unit dense layers).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpus_dir: PathBuf,
    pub output_dir: PathBuf,
    /// Source images for the train/val dataset.
    pub p: usize,
    /// Source images for the test dataset, taken from the corpus after the
    /// first `p` (test sources never overlap train sources). Defaults to
    /// `p / 2`, at least 1.
    #[serde(default)]
    pub test_p: Option<usize>,
    /// Chains per class.
    pub r: usize,
    pub n_classes: usize,
    /// Quality factor of the final compression stage.
    pub qf_last: u8,
    #[serde(default = "default_threshold")]
    pub bin_threshold: u32,
    #[serde(default = "default_patch_size")]
    pub patch_size: usize,
    #[serde(default = "default_conv_blocks")]
    pub conv_blocks: usize,
    #[serde(default = "default_filters")]
    pub filters: usize,
    #[serde(default = "default_dense_units")]
    pub dense_units: usize,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    /// Optimizer settings; its `seed` field is ignored — the experiment
    /// seed below drives every random draw of the run.
    #[serde(default)]
    pub train: TrainConfig,
    pub seed: u64,
    /// How many test images get a misclassification overlay.
    #[serde(default = "default_overlay_samples")]
    pub overlay_samples: usize,
}

impl ExperimentConfig {
    pub fn read_json(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    pub fn schedule(&self) -> BinSchedule {
        BinSchedule {
            threshold: self.bin_threshold,
            patch_size: self.patch_size,
            ..Default::default()
        }
    }

    pub fn resolved_test_p(&self) -> usize {
        self.test_p.unwrap_or_else(|| (self.p / 2).max(1))
    }

    fn generation(&self, p: usize) -> GenerationConfig {
        let mut cfg =
            GenerationConfig::new(p, self.n_classes, self.qf_last, derive_seed(self.seed, "dataset"));
        cfg.r = self.r;
        cfg
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec::cnn(
            self.conv_blocks,
            self.filters,
            self.dense_units,
            self.dropout,
            feature_dimension(&self.schedule()),
            self.n_classes,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::InvalidConfig(
                "an experiment needs at least 2 classes".into(),
            ));
        }
        self.generation(self.p).validate()?;
        self.schedule().validate()?;
        self.train.validate()?;
        self.model_spec().validate()?;
        Ok(())
    }
}

/// Stable sub-seed per concern, so dataset generation, the split, and
/// training never share a ChaCha stream even though the experiment
/// exposes one seed.
pub fn derive_seed(seed: u64, domain: &str) -> u64 {
    let mut bytes = domain.as_bytes().to_vec();
    bytes.extend_from_slice(&seed.to_le_bytes());
    fnv1a64(&bytes)
}

/// 80/20 train/val split, per class, at patch level: each class's patch
/// rows are shuffled and the last fifth (at least one row) becomes the
/// validation fold.
pub fn split_patch_rows(
    rows: Vec<FeatureRow>,
    classes: usize,
    seed: u64,
) -> Result<(Vec<FeatureRow>, Vec<FeatureRow>)> {
    let mut buckets: Vec<Vec<FeatureRow>> = (0..classes).map(|_| Vec::new()).collect();
    for row in rows {
        if row.label == 0 || row.label as usize > classes {
            return Err(Error::InvalidConfig(format!(
                "feature row label {} outside 1..={classes}",
                row.label
            )));
        }
        buckets[row.label as usize - 1].push(row);
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (c, mut bucket) in buckets.into_iter().enumerate() {
        if bucket.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "class {} has {} patch rows; need at least 2 to split",
                c + 1,
                bucket.len()
            )));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        bucket.shuffle(&mut rng);
        let n_val = (bucket.len() / 5).max(1);
        let n_train = bucket.len() - n_val;
        val.extend(bucket.split_off(n_train));
        train.extend(bucket);
    }
    Ok((train, val))
}

/// Everything a finished run reports; the same data lands in the output
/// directory as CSV/JSON artifacts.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub output_dir: PathBuf,
    pub best_epoch: usize,
    pub val_accuracy: f64,
    pub metrics: Vec<EpochMetrics>,
    pub patch_matrix: ConfusionMatrix,
    pub image_matrix: ConfusionMatrix,
    pub patch_accuracy: f64,
    pub image_accuracy: f64,
}

/// Run a whole experiment. Stages: build-dataset -> extract-features ->
/// split -> train -> evaluate -> report. A failing stage aborts with a
/// stage-tagged error; artifacts of completed stages stay on disk.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let schedule = cfg.schedule();
    let dim = feature_dimension(&schedule);
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.json"), serde_json::to_string_pretty(cfg)?)?;

    let stage = |name: &'static str| move |e: Error| e.in_stage(name);

    // build-dataset
    let test_p = cfg.resolved_test_p();
    let corpus = list_corpus(&cfg.corpus_dir).map_err(stage("build-dataset"))?;
    if corpus.len() < cfg.p + test_p {
        return Err(Error::CorpusTooSmall { found: corpus.len(), needed: cfg.p + test_p }
            .in_stage("build-dataset"));
    }
    log::info!(
        "building datasets: {} train + {} test sources, {} classes, r={}",
        cfg.p,
        test_p,
        cfg.n_classes,
        cfg.r
    );
    let train_dir = out.join("train_data");
    let test_dir = out.join("test_data");
    let train_manifest =
        build_dataset_from_sources(&corpus[..cfg.p], &train_dir, &cfg.generation(cfg.p), SplitTag::Train)
            .map_err(stage("build-dataset"))?;
    let test_manifest = build_dataset_from_sources(
        &corpus[cfg.p..cfg.p + test_p],
        &test_dir,
        &cfg.generation(test_p),
        SplitTag::Test,
    )
    .map_err(stage("build-dataset"))?;

    // extract-features
    log::info!("extracting features (d={dim})");
    let train_rows = extract_manifest_features(&train_dir, &train_manifest, &schedule)
        .map_err(stage("extract-features"))?;
    let test_rows = extract_manifest_features(&test_dir, &test_manifest, &schedule)
        .map_err(stage("extract-features"))?;
    let fingerprint = schedule.fingerprint();
    write_store(&out.join("features_train.jclf"), dim, fingerprint, &train_rows)
        .map_err(stage("extract-features"))?;
    write_store(&out.join("features_test.jclf"), dim, fingerprint, &test_rows)
        .map_err(stage("extract-features"))?;

    // split
    let (fit_rows, val_rows) =
        split_patch_rows(train_rows, cfg.n_classes, derive_seed(cfg.seed, "split"))
            .map_err(stage("split"))?;
    log::info!("split: {} train / {} val patch rows", fit_rows.len(), val_rows.len());

    // train
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = derive_seed(cfg.seed, "train");
    let spec = cfg.model_spec();
    let outcome =
        train(&spec, &fit_rows, &val_rows, fingerprint, &train_cfg).map_err(stage("train"))?;
    outcome.checkpoint.save(&out.join("model.jclm")).map_err(stage("train"))?;
    write_metrics_csv(&out.join("metrics.csv"), &outcome.metrics).map_err(stage("train"))?;

    // evaluate
    let decisions = decide_manifest(&test_dir, &test_manifest, &outcome.checkpoint, &schedule)
        .map_err(stage("evaluate"))?;
    let patch_matrix = confusion_from_decisions(&decisions, cfg.n_classes, EvalLevel::Patch)
        .map_err(stage("evaluate"))?;
    let image_matrix = confusion_from_decisions(&decisions, cfg.n_classes, EvalLevel::Image)
        .map_err(stage("evaluate"))?;

    // report
    let report_result: Result<()> = (|| {
        patch_matrix.write_csv(&out.join("confusion_patch.csv"))?;
        patch_matrix.write_json(&out.join("confusion_patch.json"))?;
        image_matrix.write_csv(&out.join("confusion_image.csv"))?;
        image_matrix.write_json(&out.join("confusion_image.json"))?;
        let mut jsonl = std::io::BufWriter::new(std::fs::File::create(out.join("decisions.jsonl"))?);
        for decision in &decisions {
            writeln!(jsonl, "{}", serde_json::to_string(decision)?)?;
        }
        jsonl.flush()?;
        let overlay_dir = out.join("overlays");
        std::fs::create_dir_all(&overlay_dir)?;
        let n = cfg.overlay_samples.min(decisions.len());
        decisions[..n].par_iter().enumerate().try_for_each(|(i, decision)| {
            let bytes = std::fs::read(test_dir.join(&decision.path))?;
            let name = format!(
                "row{:05}_true{}_pred{}.ppm",
                i,
                decision.true_label.unwrap_or(0),
                decision.final_label
            );
            emit_overlay(&bytes, decision, schedule.patch_size, &overlay_dir.join(name))
        })?;
        Ok(())
    })();
    report_result.map_err(stage("report"))?;

    log::info!(
        "experiment done: patch accuracy {:.2}%, image accuracy {:.2}%",
        patch_matrix.average_accuracy(),
        image_matrix.average_accuracy()
    );
    Ok(ExperimentReport {
        output_dir: out.clone(),
        best_epoch: outcome.checkpoint.epoch,
        val_accuracy: outcome.checkpoint.val_accuracy,
        metrics: outcome.metrics,
        patch_accuracy: patch_matrix.average_accuracy(),
        image_accuracy: image_matrix.average_accuracy(),
        patch_matrix,
        image_matrix,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows_for(labels: &[u8]) -> Vec<FeatureRow> {
        labels
            .iter()
            .enumerate()
            .map(|(i, &label)| FeatureRow {
                label,
                image_id: i as u32,
                patch_index: 0,
                values: vec![i as f32],
            })
            .collect()
    }

    #[test]
    fn split_is_eighty_twenty_per_class() {
        let labels: Vec<u8> = std::iter::repeat(1).take(10).chain(std::iter::repeat(2).take(25)).collect();
        let (train, val) = split_patch_rows(rows_for(&labels), 2, 3).unwrap();
        let count = |rows: &[FeatureRow], l: u8| rows.iter().filter(|r| r.label == l).count();
        assert_eq!(count(&train, 1), 8);
        assert_eq!(count(&val, 1), 2);
        assert_eq!(count(&train, 2), 20);
        assert_eq!(count(&val, 2), 5);
        // Disjoint and exhaustive by the unique image ids.
        let mut ids: Vec<u32> =
            train.iter().chain(val.iter()).map(|r| r.image_id).collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..35).collect::<Vec<_>>());
    }

    #[test]
    fn split_is_deterministic_in_the_seed() {
        let labels = [1u8, 1, 1, 1, 1, 2, 2, 2, 2, 2];
        let (t1, v1) = split_patch_rows(rows_for(&labels), 2, 9).unwrap();
        let (t2, v2) = split_patch_rows(rows_for(&labels), 2, 9).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(v1, v2);
        let (t3, _) = split_patch_rows(rows_for(&labels), 2, 10).unwrap();
        assert_ne!(t1, t3);
    }

    #[test]
    fn tiny_classes_still_get_a_validation_row() {
        let labels = [1u8, 1, 2, 2];
        let (train, val) = split_patch_rows(rows_for(&labels), 2, 0).unwrap();
        assert_eq!(train.len(), 2);
        assert_eq!(val.len(), 2);
        assert!(matches!(
            split_patch_rows(rows_for(&[1, 2, 2]), 2, 0),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn derived_seeds_differ_by_domain() {
        let a = derive_seed(7, "dataset");
        let b = derive_seed(7, "split");
        let c = derive_seed(7, "train");
        assert_ne!(a, b);
        assert_ne!(b, c);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(7, "dataset"));
        assert_ne!(a, derive_seed(8, "dataset"));
    }

    fn minimal_json(dir: &Path) -> String {
        format!(
            r#"{{"corpus_dir": "{0}/corpus", "output_dir": "{0}/out",
                "p": 4, "r": 2, "n_classes": 3, "qf_last": 80, "seed": 5}}"#,
            dir.display()
        )
    }

    #[test]
    fn config_defaults_fill_in() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, minimal_json(dir.path())).unwrap();
        let cfg = ExperimentConfig::read_json(&path).unwrap();
        assert_eq!(cfg.bin_threshold, 50);
        assert_eq!(cfg.patch_size, 128);
        assert_eq!(cfg.conv_blocks, 4);
        assert_eq!(cfg.filters, 256);
        assert_eq!(cfg.dense_units, 512);
        assert_eq!(cfg.resolved_test_p(), 2);
        assert_eq!(cfg.train.epochs, 15);
        assert_eq!(cfg.overlay_samples, 4);
        cfg.validate().unwrap();
        assert_eq!(cfg.model_spec().input_dim, 2230);
    }

    #[test]
    fn unknown_config_fields_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        let json = minimal_json(dir.path()).replace("\"seed\"", "\"qf_first\": 1, \"seed\"");
        std::fs::write(&path, json).unwrap();
        assert!(matches!(ExperimentConfig::read_json(&path), Err(Error::Json(_))));
    }

    #[test]
    fn config_validation_catches_bad_knobs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, minimal_json(dir.path())).unwrap();
        let base = ExperimentConfig::read_json(&path).unwrap();

        let mut one_class = base.clone();
        one_class.n_classes = 1;
        assert!(matches!(one_class.validate(), Err(Error::InvalidConfig(_))));

        let mut bad_patch = base.clone();
        bad_patch.patch_size = 100;
        assert!(matches!(bad_patch.validate(), Err(Error::InvalidConfig(_))));

        let mut too_deep = base;
        too_deep.conv_blocks = 12;
        assert!(matches!(too_deep.validate(), Err(Error::InfeasibleDepth(_))));
    }

    #[test]
    fn missing_corpus_fails_in_the_build_stage() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("corpus")).unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, minimal_json(dir.path())).unwrap();
        let cfg = ExperimentConfig::read_json(&path).unwrap();
        match run_experiment(&cfg) {
            Err(Error::Stage { stage, source }) => {
                assert_eq!(stage, "build-dataset");
                assert!(matches!(*source, Error::CorpusTooSmall { found: 0, needed: 6 }));
            }
            other => panic!("expected a stage-tagged error, got {other:?}"),
        }
    }
}

//! `jcl` — how many times was this JPEG compressed?
//!
//! Thin command-line surface over the core library: corpus synthesis,
//! dataset generation, feature extraction, training, evaluation, and
//! single-image classification. Exit codes: 0 success, 1 usage error,
//! 2 data error, 3 infeasible configuration.

use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use jcl_core::chains::{build_dataset, DatasetManifest, GenerationConfig, SplitTag};
use jcl_core::features::store::{extract_manifest_features, read_store, write_store};
use jcl_core::features::{feature_dimension, BinSchedule};
use jcl_core::jpeg;
use jcl_core::nn::{
    build_model, train, write_metrics_csv, Checkpoint, CnnVariant, ModelSpec, TrainConfig,
};
use jcl_core::pipeline::{
    classify_image, confusion_from_decisions, decide_manifest, derive_seed, emit_overlay,
    run_experiment, split_patch_rows, ConfusionMatrix, EvalLevel, ExperimentConfig,
};
use jcl_core::synth::{gen_corpus, CorpusSpec};

#[derive(Parser)]
#[command(name = "jcl", version, about = "JPEG compression-count forensic classifier")]
struct Cli {
    /// Emit machine-readable JSON on stdout instead of a summary.
    #[arg(long, global = true)]
    json: bool,

    /// Worker threads; 0 uses every logical core. Never changes outputs.
    #[arg(long, global = true, value_name = "N", default_value_t = 0)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic PPM corpus.
    GenCorpus(GenCorpusArgs),
    /// Compress a corpus into per-class recompression datasets.
    BuildDataset(BuildDatasetArgs),
    /// Extract sub-band histogram features for every manifest row.
    ExtractFeatures(ExtractFeaturesArgs),
    /// Train a classifier on a feature store (80/20 train/val split).
    Train(TrainArgs),
    /// Score a model against a labeled dataset as a confusion matrix.
    Evaluate(EvaluateArgs),
    /// Predict how many times one JPEG was compressed.
    Classify(ClassifyArgs),
    /// Describe a JPEG file: markers, tables, coefficient histograms.
    InspectJpeg(InspectJpegArgs),
    /// Render a misclassified-patch overlay for one image.
    Overlay(OverlayArgs),
    /// Run a dataset->train->evaluate experiment from a JSON config.
    RunExperiment(RunExperimentArgs),
}

#[derive(Args)]
struct GenCorpusArgs {
    /// Directory the PPM files are written into.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Number of images.
    #[arg(long, value_name = "N")]
    count: usize,
    /// Image width in pixels.
    #[arg(long, value_name = "PX", default_value_t = 256)]
    width: usize,
    /// Image height in pixels.
    #[arg(long, value_name = "PX", default_value_t = 256)]
    height: usize,
    /// RNG seed; identical seeds reproduce the corpus byte for byte.
    #[arg(long)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum TagArg {
    Train,
    Val,
    Test,
}

impl From<TagArg> for SplitTag {
    fn from(v: TagArg) -> Self {
        match v {
            TagArg::Train => SplitTag::Train,
            TagArg::Val => SplitTag::Val,
            TagArg::Test => SplitTag::Test,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

#[derive(Args)]
struct BuildDatasetArgs {
    /// Corpus directory of PPM source images.
    #[arg(long, value_name = "DIR")]
    corpus: PathBuf,
    /// Output directory for JPEGs and manifest.json.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Number of classes; class k is compressed k times.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..=255))]
    classes: u64,
    /// Quality factor of the final compression stage.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=100))]
    qf_last: u8,
    /// Source images per class.
    #[arg(long)]
    p: usize,
    /// Chains per class.
    #[arg(long, default_value_t = 10)]
    r: usize,
    /// Smallest admissible quality factor.
    #[arg(long, default_value_t = 60, value_parser = clap::value_parser!(u8).range(1..=100))]
    q_min: u8,
    /// Largest admissible quality factor.
    #[arg(long, default_value_t = 95, value_parser = clap::value_parser!(u8).range(1..=100))]
    q_max: u8,
    /// Smallest quality step between consecutive stages.
    #[arg(long, default_value_t = 6)]
    dq_min: u8,
    /// Largest quality step between consecutive stages.
    #[arg(long, default_value_t = 12)]
    dq_max: u8,
    /// Split tag stamped on every manifest row.
    #[arg(long, value_enum, default_value_t = TagArg::Train)]
    split: TagArg,
    /// RNG seed for chain sampling.
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct ScheduleArgs {
    /// Sub-band inclusion threshold; 50 keeps 27 bands (d=2230), 1 keeps
    /// all 108 (d=3605).
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u32).range(1..))]
    threshold: u32,
    /// Patch edge in pixels; must be a positive multiple of 8.
    #[arg(long, value_name = "PX", default_value_t = 128)]
    patch_size: usize,
}

impl ScheduleArgs {
    fn schedule(&self) -> BinSchedule {
        BinSchedule {
            threshold: self.threshold,
            patch_size: self.patch_size,
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct ExtractFeaturesArgs {
    /// Dataset directory holding manifest.json and the JPEGs.
    #[arg(long, value_name = "DIR")]
    manifest_dir: PathBuf,
    /// Feature store file to write (.jclf).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[command(flatten)]
    schedule: ScheduleArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Cnn1,
    Cnn2,
    Cnn3,
    Cnn4,
    Cnn5,
    Cnn6,
}

impl From<VariantArg> for CnnVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Cnn1 => CnnVariant::Cnn1,
            VariantArg::Cnn2 => CnnVariant::Cnn2,
            VariantArg::Cnn3 => CnnVariant::Cnn3,
            VariantArg::Cnn4 => CnnVariant::Cnn4,
            VariantArg::Cnn5 => CnnVariant::Cnn5,
            VariantArg::Cnn6 => CnnVariant::Cnn6,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Feature store produced by extract-features.
    #[arg(long, value_name = "FILE")]
    features: PathBuf,
    /// Checkpoint file to write (.jclm).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Optional per-epoch metrics CSV.
    #[arg(long, value_name = "FILE")]
    metrics: Option<PathBuf>,
    /// Number of classes the model distinguishes.
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..=255))]
    classes: u64,
    /// Standard architecture preset; overrides the block/filter knobs.
    #[arg(long, value_enum, conflicts_with_all = ["conv_blocks", "filters", "dense_units", "dropout"])]
    variant: Option<VariantArg>,
    /// Convolution blocks.
    #[arg(long, default_value_t = 4)]
    conv_blocks: usize,
    /// Filters per convolution.
    #[arg(long, default_value_t = 256)]
    filters: usize,
    /// Units per dense layer.
    #[arg(long, default_value_t = 512)]
    dense_units: usize,
    /// Dropout rate in [0, 1).
    #[arg(long, default_value_t = 0.1)]
    dropout: f64,
    /// Training epochs.
    #[arg(long, default_value_t = 15)]
    epochs: usize,
    /// Minibatch size (at least 2).
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    /// Adam learning rate.
    #[arg(long, default_value_t = 1e-4)]
    learning_rate: f64,
    /// RNG seed for the split, weight init, shuffling, and dropout.
    #[arg(long)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Patch,
    Image,
}

impl From<LevelArg> for EvalLevel {
    fn from(v: LevelArg) -> Self {
        match v {
            LevelArg::Patch => EvalLevel::Patch,
            LevelArg::Image => EvalLevel::Image,
        }
    }
}

#[derive(Args)]
struct EvaluateArgs {
    /// Dataset directory holding manifest.json and the JPEGs.
    #[arg(long, value_name = "DIR")]
    manifest_dir: PathBuf,
    /// Trained checkpoint (.jclm).
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Tally one entry per patch or one per image (majority vote).
    #[arg(long, value_enum, default_value_t = LevelArg::Image)]
    level: LevelArg,
    /// Which manifest rows to score.
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    split: SplitArg,
    /// Also write the confusion matrix as CSV.
    #[arg(long, value_name = "FILE")]
    out_csv: Option<PathBuf>,
    #[command(flatten)]
    schedule: ScheduleArgs,
}

#[derive(Args)]
struct ClassifyArgs {
    /// Trained checkpoint (.jclm).
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// JPEG file to classify.
    #[arg(long, value_name = "FILE")]
    image: PathBuf,
    #[command(flatten)]
    schedule: ScheduleArgs,
}

#[derive(Args)]
struct InspectJpegArgs {
    /// JPEG file to describe.
    #[arg(long, value_name = "FILE")]
    file: PathBuf,
    /// Also write the quantized-coefficient text dump to this file.
    #[arg(long, value_name = "FILE")]
    dump: Option<PathBuf>,
}

#[derive(Args)]
struct OverlayArgs {
    /// Trained checkpoint (.jclm).
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// JPEG file to classify and paint.
    #[arg(long, value_name = "FILE")]
    image: PathBuf,
    /// Output PPM path.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Ground-truth class; misclassified patches get its color. Without
    /// it the overlay is just the decompressed (grid-cropped) image.
    #[arg(long, value_name = "CLASS", value_parser = clap::value_parser!(u8).range(1..=255))]
    truth: Option<u8>,
    #[command(flatten)]
    schedule: ScheduleArgs,
}

#[derive(Args)]
struct RunExperimentArgs {
    /// Experiment description (JSON).
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
}

fn main() {
    // Die quietly when stdout closes early (`jcl ... | head`), like any
    // other Unix filter, instead of panicking on the broken pipe.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests land here too; only real usage
            // errors exit 1.
            let code = i32::from(err.use_stderr());
            let _ = err.print();
            std::process::exit(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("JCL_LOG", "info")).init();
    if cli.jobs > 0 {
        if let Err(err) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
            eprintln!("error: building the thread pool: {err}");
            std::process::exit(2);
        }
    }
    if let Err(err) = run(&cli) {
        match err.downcast_ref::<jcl_core::Error>() {
            Some(core) => {
                eprintln!("error: {core}");
                std::process::exit(core.exit_code());
            }
            None => {
                eprintln!("error: {err:#}");
                std::process::exit(2);
            }
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::GenCorpus(args) => cmd_gen_corpus(args, cli.json),
        Command::BuildDataset(args) => cmd_build_dataset(args, cli.json),
        Command::ExtractFeatures(args) => cmd_extract_features(args, cli.json),
        Command::Train(args) => cmd_train(args, cli.json),
        Command::Evaluate(args) => cmd_evaluate(args, cli.json),
        Command::Classify(args) => cmd_classify(args, cli.json),
        Command::InspectJpeg(args) => cmd_inspect_jpeg(args),
        Command::Overlay(args) => cmd_overlay(args, cli.json),
        Command::RunExperiment(args) => cmd_run_experiment(args, cli.json),
    }
}

fn emit(json: bool, value: serde_json::Value, human: String) -> anyhow::Result<()> {
    if json {
        println!("{}", serde_json::to_string_pretty(&value)?);
    } else {
        println!("{human}");
    }
    Ok(())
}

fn cmd_gen_corpus(args: &GenCorpusArgs, json: bool) -> anyhow::Result<()> {
    let spec = CorpusSpec {
        count: args.count,
        width: args.width,
        height: args.height,
        seed: args.seed,
    };
    let files = gen_corpus(&args.out, &spec)?;
    emit(
        json,
        json!({ "dir": args.out, "count": files.len(), "width": args.width, "height": args.height }),
        format!("wrote {} synthetic images to {}", files.len(), args.out.display()),
    )
}

fn cmd_build_dataset(args: &BuildDatasetArgs, json: bool) -> anyhow::Result<()> {
    let mut cfg =
        GenerationConfig::new(args.p, args.classes as usize, args.qf_last, args.seed);
    cfg.r = args.r;
    cfg.q_min = args.q_min;
    cfg.q_max = args.q_max;
    cfg.dq_min = args.dq_min;
    cfg.dq_max = args.dq_max;
    let manifest = build_dataset(&args.corpus, &args.out, &cfg, args.split.into())?;
    emit(
        json,
        json!({
            "manifest": args.out.join("manifest.json"),
            "rows": manifest.rows.len(),
            "rows_per_class": manifest.rows.len() / cfg.n_classes,
        }),
        format!(
            "built {} rows ({} per class) under {}",
            manifest.rows.len(),
            manifest.rows.len() / cfg.n_classes,
            args.out.display()
        ),
    )
}

fn cmd_extract_features(args: &ExtractFeaturesArgs, json: bool) -> anyhow::Result<()> {
    let schedule = args.schedule.schedule();
    let manifest = DatasetManifest::read_json(&args.manifest_dir.join("manifest.json"))?;
    let rows = extract_manifest_features(&args.manifest_dir, &manifest, &schedule)?;
    let dimension = feature_dimension(&schedule);
    write_store(&args.out, dimension, schedule.fingerprint(), &rows)?;
    emit(
        json,
        json!({
            "store": args.out,
            "rows": rows.len(),
            "dimension": dimension,
            "fingerprint": format!("{:016x}", schedule.fingerprint()),
        }),
        format!(
            "extracted {} patch rows (d={}) into {}",
            rows.len(),
            dimension,
            args.out.display()
        ),
    )
}

fn cmd_train(args: &TrainArgs, json: bool) -> anyhow::Result<()> {
    let (header, rows) = read_store(&args.features)?;
    let classes = args.classes as usize;
    let spec = match args.variant {
        Some(v) => build_model(v.into(), header.dimension, classes),
        None => ModelSpec::cnn(
            args.conv_blocks,
            args.filters,
            args.dense_units,
            args.dropout,
            header.dimension,
            classes,
        ),
    };
    let params = spec.param_count()?;
    let (fit_rows, val_rows) = split_patch_rows(rows, classes, derive_seed(args.seed, "split"))?;
    let cfg = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.learning_rate,
        seed: derive_seed(args.seed, "train"),
        ..Default::default()
    };
    let outcome = train(&spec, &fit_rows, &val_rows, header.fingerprint, &cfg)?;
    outcome.checkpoint.save(&args.out)?;
    if let Some(metrics) = &args.metrics {
        write_metrics_csv(metrics, &outcome.metrics)?;
    }
    emit(
        json,
        json!({
            "model": args.out,
            "parameters": params,
            "best_epoch": outcome.checkpoint.epoch,
            "val_accuracy": outcome.checkpoint.val_accuracy,
        }),
        format!(
            "trained {} parameters for {} epochs; best epoch {} at {:.2}% validation accuracy -> {}",
            params,
            args.epochs,
            outcome.checkpoint.epoch,
            100.0 * outcome.checkpoint.val_accuracy,
            args.out.display()
        ),
    )
}

fn matrix_text(matrix: &ConfusionMatrix) -> String {
    let mut out = String::from("     ");
    for j in 1..=matrix.classes {
        out.push_str(&format!("{:>9}", format!("C{j}")));
    }
    out.push('\n');
    for (i, row) in matrix.percentages().iter().enumerate() {
        out.push_str(&format!("C{:<4}", i + 1));
        for v in row {
            out.push_str(&format!("{v:>8.2}%"));
        }
        out.push('\n');
    }
    out.push_str(&format!("average accuracy: {:.2}%", matrix.average_accuracy()));
    out
}

fn cmd_evaluate(args: &EvaluateArgs, json: bool) -> anyhow::Result<()> {
    let schedule = args.schedule.schedule();
    let ckpt = Checkpoint::load(&args.model)?;
    let manifest = DatasetManifest::read_json(&args.manifest_dir.join("manifest.json"))?;
    let rows = manifest
        .rows
        .into_iter()
        .filter(|row| match args.split {
            SplitArg::Train => row.split == SplitTag::Train,
            SplitArg::Val => row.split == SplitTag::Val,
            SplitArg::Test => row.split == SplitTag::Test,
            SplitArg::All => true,
        })
        .collect::<Vec<_>>();
    if rows.is_empty() {
        return Err(jcl_core::Error::EmptyInput("no manifest rows in the requested split").into());
    }
    let filtered = DatasetManifest { config: manifest.config, rows };
    let decisions = decide_manifest(&args.manifest_dir, &filtered, &ckpt, &schedule)?;
    let matrix = confusion_from_decisions(&decisions, ckpt.classes(), args.level.into())?;
    if let Some(path) = &args.out_csv {
        matrix.write_csv(path)?;
    }
    let level = match args.level {
        LevelArg::Patch => "patch",
        LevelArg::Image => "image",
    };
    emit(
        json,
        json!({
            "level": level,
            "items": filtered.rows.len(),
            "counts": matrix.counts,
            "percentages": matrix.percentages(),
            "average_accuracy": matrix.average_accuracy(),
        }),
        format!("{level}-level confusion over {} rows\n{}", filtered.rows.len(), matrix_text(&matrix)),
    )
}

fn cmd_classify(args: &ClassifyArgs, json: bool) -> anyhow::Result<()> {
    let schedule = args.schedule.schedule();
    let ckpt = Checkpoint::load(&args.model)?;
    let bytes = std::fs::read(&args.image)
        .with_context(|| format!("reading {}", args.image.display()))?;
    let mut decision = classify_image(&bytes, &ckpt, &schedule)?;
    decision.path = args.image.display().to_string();
    let mut votes = vec![0usize; ckpt.classes()];
    for &label in &decision.patch_labels {
        votes[label as usize - 1] += 1;
    }
    let votes_text = votes
        .iter()
        .enumerate()
        .filter(|(_, &n)| n > 0)
        .map(|(c, n)| format!("C{}={}", c + 1, n))
        .collect::<Vec<_>>()
        .join(" ");
    emit(
        json,
        serde_json::to_value(&decision)?,
        format!(
            "{}: class C{} ({} patches, votes: {})",
            args.image.display(),
            decision.final_label,
            decision.patch_labels.len(),
            votes_text
        ),
    )
}

fn cmd_inspect_jpeg(args: &InspectJpegArgs) -> anyhow::Result<()> {
    let bytes =
        std::fs::read(&args.file).with_context(|| format!("reading {}", args.file.display()))?;
    let report = jpeg::inspect::inspect(&bytes)?;
    // The report is JSON in both modes; that's the subcommand's contract.
    println!("{}", serde_json::to_string_pretty(&report)?);
    match jpeg::decode_coefficients(&bytes) {
        Ok(planes) => {
            if let Some(path) = &args.dump {
                let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
                jpeg::inspect::dump_coefficients(&planes, &mut out)?;
            }
            Ok(())
        }
        // Structure was reported, but the file is outside the supported
        // profile (progressive, subsampled, ...): that's a data error.
        Err(err) => Err(err.into()),
    }
}

fn cmd_overlay(args: &OverlayArgs, json: bool) -> anyhow::Result<()> {
    let schedule = args.schedule.schedule();
    let ckpt = Checkpoint::load(&args.model)?;
    let bytes = std::fs::read(&args.image)
        .with_context(|| format!("reading {}", args.image.display()))?;
    let mut decision = classify_image(&bytes, &ckpt, &schedule)?;
    decision.path = args.image.display().to_string();
    decision.true_label = args.truth;
    emit_overlay(&bytes, &decision, schedule.patch_size, &args.out)?;
    let misses = match args.truth {
        Some(t) => decision.patch_labels.iter().filter(|&&l| l != t).count(),
        None => 0,
    };
    emit(
        json,
        json!({
            "out": args.out,
            "final_label": decision.final_label,
            "true_label": args.truth,
            "patches": decision.patch_labels.len(),
            "misclassified": misses,
        }),
        format!(
            "wrote {} (predicted C{}, {}/{} patches filled)",
            args.out.display(),
            decision.final_label,
            misses,
            decision.patch_labels.len()
        ),
    )
}

fn cmd_run_experiment(args: &RunExperimentArgs, json: bool) -> anyhow::Result<()> {
    let cfg = ExperimentConfig::read_json(&args.config)?;
    let report = run_experiment(&cfg)?;
    emit(
        json,
        serde_json::to_value(&report)?,
        format!(
            "experiment finished in {}\nbest epoch {} ({:.2}% val)\n\npatch level:\n{}\n\nimage level:\n{}",
            report.output_dir.display(),
            report.best_epoch,
            100.0 * report.val_accuracy,
            matrix_text(&report.patch_matrix),
            matrix_text(&report.image_matrix),
        ),
    )
}

//! `emogap` — hidden-emotion analysis over dual-annotated corpora.
//!
//! The pipeline stages (ingest, stats, split, train, evaluate, mine,
//! report) are exposed both individually and as one `run` command. Every
//! stage persists its output under the run directory, so stages can be
//! rerun or resumed independently; `run` additionally writes a manifest
//! with a content hash per artifact.
//!
//! Settings resolve in three layers: built-in defaults, then a `--config`
//! TOML file, then command-line flags. Two environment variables supply
//! external processes: `EMOGAP_SEGMENTER_CMD` (the morphological-analyzer
//! adapter for `--segmenter external-morphological`) and
//! `EMOGAP_ENCODER_CMD` (the training/scoring bridge for
//! `--backend encoder`).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use emogap::corpus::{self, AnnotatedPost, DatasetSplit, PostId};
use emogap::detector::{Backend, EncoderBridge, PredictionRecord, TrainedDetector};
use emogap::emotion::Emotion;
use emogap::error::{Error, Result};
use emogap::keyed;
use emogap::labels::{self, HiddenLabel};
use emogap::mining;
use emogap::pipeline::{self, MiningPool, PipelineConfig, artifact};
use emogap::segment::{CommandAdapter, Normalizer, SegmenterAdapter, SegmenterMode};
use emogap::{detector, metrics, synth};

const SEGMENTER_ENV: &str = "EMOGAP_SEGMENTER_CMD";
const ENCODER_ENV: &str = "EMOGAP_ENCODER_CMD";

#[derive(Parser)]
#[command(
    name = "emogap",
    version,
    about = "Detect hidden emotion from writer-reader annotation gaps and mine its expressions"
)]
struct Cli {
    /// TOML settings file; command-line flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the TSV corpus and derive hidden labels into the run directory.
    Ingest(Overrides),
    /// Strong-label counts and co-occurrence matrices.
    Stats(Overrides),
    /// Seeded train/test partition.
    Split(Overrides),
    /// Fit the detector on the train side and save the model.
    Train(Overrides),
    /// Score the test split: predictions, ROC curve, threshold metrics.
    Evaluate(Overrides),
    /// Mine expression rankings (both modes) and the intensity table.
    Mine(Overrides),
    /// Rebuild the report figures from the persisted artifacts.
    Report(Overrides),
    /// Run every stage end to end and write the hash manifest.
    Run(Overrides),
    /// Generate a synthetic planted-marker corpus for smoke testing.
    Synth(SynthArgs),
}

/// Flag-level overrides of the pipeline settings. Unset flags leave the
/// config-file (or default) values in place.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// TSV corpus to ingest.
    #[arg(long, value_name = "FILE")]
    corpus: Option<PathBuf>,
    /// Directory the run artifacts live in.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Emotion whose writer-reader gap defines the hidden label.
    #[arg(long)]
    emotion: Option<Emotion>,
    /// Minimum writer-minus-reader-average gap for a hidden label.
    #[arg(long, value_name = "X")]
    gap_threshold: Option<f64>,
    /// Minimum intensity counted as a strong label.
    #[arg(long, value_name = "X")]
    strong_threshold: Option<f64>,
    /// Train:test proportions.
    #[arg(long, value_name = "A:B")]
    split_ratio: Option<String>,
    /// Keep grouped posts on one side of the split.
    #[arg(long, value_name = "BOOL")]
    split_by_group: Option<bool>,
    /// Run seed; every stage's randomness derives from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Token segmentation: whitespace, char-ngram, or external-morphological.
    #[arg(long, value_name = "MODE")]
    segmenter: Option<SegmenterMode>,
    /// n for char-ngram segmentation (1-8).
    #[arg(long, value_name = "N")]
    ngram_n: Option<usize>,
    /// Text normalization: none or unicode-compatibility-fold.
    #[arg(long)]
    normalizer: Option<Normalizer>,
    /// Detector backend: baseline or encoder.
    #[arg(long)]
    backend: Option<Backend>,
    /// Pretrained checkpoint for the encoder backend.
    #[arg(long, value_name = "PATH")]
    encoder_checkpoint: Option<String>,
    /// Positive-decision score cutoff, strictly inside (0, 1).
    #[arg(long, value_name = "X")]
    threshold: Option<f64>,
    /// Ranking length for both mining modes.
    #[arg(long, value_name = "K")]
    top_k: Option<usize>,
    /// Support floor: tokens below this many hidden sentences are dropped.
    #[arg(long, value_name = "N")]
    min_hidden_count: Option<u64>,
    /// Unfiltered-mining pool: test-split or whole-corpus.
    #[arg(long, value_name = "POOL")]
    mining_pool: Option<MiningPool>,
    /// Most true-positive example sentences listed in the report.
    #[arg(long, value_name = "N")]
    example_limit: Option<usize>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Where to write the generated TSV corpus.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Number of posts.
    #[arg(long)]
    posts: Option<usize>,
    /// Fraction of posts that are hidden-anger (exact count, rounded).
    #[arg(long, value_name = "F")]
    hidden_fraction: Option<f64>,
    /// Comma-separated marker tokens planted in hidden posts.
    #[arg(long, value_name = "T1,T2,...")]
    markers: Option<String>,
    /// Per-marker presence rate in hidden posts.
    #[arg(long, value_name = "F")]
    marker_rate_hidden: Option<f64>,
    /// Per-marker presence rate in other posts.
    #[arg(long, value_name = "F")]
    marker_rate_other: Option<f64>,
    /// Size of the filler-token inventory.
    #[arg(long, value_name = "N")]
    filler_vocabulary: Option<usize>,
    /// Generation seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let config_file = cli.config.as_deref();
    match cli.command {
        Command::Ingest(ov) => cmd_ingest(&resolve_config(config_file, &ov)?),
        Command::Stats(ov) => cmd_stats(&resolve_config(config_file, &ov)?),
        Command::Split(ov) => cmd_split(&resolve_config(config_file, &ov)?),
        Command::Train(ov) => cmd_train(&resolve_config(config_file, &ov)?),
        Command::Evaluate(ov) => cmd_evaluate(&resolve_config(config_file, &ov)?),
        Command::Mine(ov) => cmd_mine(&resolve_config(config_file, &ov)?),
        Command::Report(ov) => {
            let explicit_limit = ov.example_limit;
            cmd_report(&resolve_config(config_file, &ov)?, explicit_limit)
        }
        Command::Run(ov) => cmd_run(&resolve_config(config_file, &ov)?),
        Command::Synth(args) => cmd_synth(&args),
    }
}

/// Defaults, overlaid by the config file, overlaid by flags.
fn resolve_config(config_file: Option<&Path>, ov: &Overrides) -> Result<PipelineConfig> {
    let mut config = match config_file {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|err| {
                Error::Config(format!("cannot read {}: {err}", path.display()))
            })?;
            toml::from_str(&text)
                .map_err(|err| Error::Config(format!("{}: {err}", path.display())))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(v) = &ov.corpus {
        config.corpus = v.clone();
    }
    if let Some(v) = &ov.out {
        config.out_dir = v.clone();
    }
    if let Some(v) = ov.emotion {
        config.emotion = v;
    }
    if let Some(v) = ov.gap_threshold {
        config.gap_threshold = v;
    }
    if let Some(v) = ov.strong_threshold {
        config.strong_threshold = v;
    }
    if let Some(raw) = &ov.split_ratio {
        config.split_ratio = parse_ratio(raw)?;
    }
    if let Some(v) = ov.split_by_group {
        config.split_by_group = v;
    }
    if let Some(v) = ov.seed {
        config.seed = v;
    }
    if let Some(v) = ov.segmenter {
        config.segmenter.mode = v;
    }
    if let Some(v) = ov.ngram_n {
        config.segmenter.ngram_n = v;
    }
    if let Some(v) = ov.normalizer {
        config.segmenter.normalizer = v;
    }
    if let Some(v) = ov.backend {
        config.detector.backend = v;
    }
    if let Some(v) = &ov.encoder_checkpoint {
        config.detector.encoder_checkpoint = Some(v.clone());
    }
    if let Some(v) = ov.threshold {
        config.classify_threshold = v;
    }
    if let Some(v) = ov.top_k {
        config.top_k = v;
    }
    if let Some(v) = ov.min_hidden_count {
        config.min_hidden_count = v;
    }
    if let Some(v) = ov.mining_pool {
        config.mining_pool = v;
    }
    if let Some(v) = ov.example_limit {
        config.example_limit = v;
    }
    Ok(config)
}

fn parse_ratio(raw: &str) -> Result<(u32, u32)> {
    let parsed = raw.split_once(':').and_then(|(a, b)| {
        Some((a.trim().parse::<u32>().ok()?, b.trim().parse::<u32>().ok()?))
    });
    parsed.ok_or_else(|| {
        Error::InvalidArgument(format!("split ratio `{raw}` is not of the form A:B"))
    })
}

fn segmenter_adapter_from_env() -> Result<Option<Arc<dyn SegmenterAdapter>>> {
    match std::env::var(SEGMENTER_ENV) {
        Ok(cmd) if !cmd.trim().is_empty() => {
            Ok(Some(Arc::new(CommandAdapter::from_command_line(&cmd)?)))
        }
        _ => Ok(None),
    }
}

fn encoder_from_env() -> Result<Option<EncoderBridge>> {
    match std::env::var(ENCODER_ENV) {
        Ok(cmd) if !cmd.trim().is_empty() => Ok(Some(EncoderBridge::from_command_line(&cmd)?)),
        _ => Ok(None),
    }
}

/// Fail fast, naming the missing environment variable, when the resolved
/// settings demand an external process that is not configured.
fn check_external_commands(config: &PipelineConfig) -> Result<()> {
    if config.segmenter.mode == SegmenterMode::ExternalMorphological
        && segmenter_adapter_from_env()?.is_none()
    {
        return Err(Error::Config(format!(
            "segmenter mode external-morphological needs {SEGMENTER_ENV} to point at a \
             tokenizer command"
        )));
    }
    if config.detector.backend == Backend::Encoder && encoder_from_env()?.is_none() {
        return Err(Error::Config(format!(
            "detector backend encoder needs {ENCODER_ENV} to point at a train/predict command"
        )));
    }
    Ok(())
}

fn require_out(config: &PipelineConfig) -> Result<&Path> {
    if config.out_dir.as_os_str().is_empty() {
        return Err(Error::Config(
            "output directory is not set (pass --out or set out_dir in the config file)".into(),
        ));
    }
    Ok(&config.out_dir)
}

fn require_corpus(config: &PipelineConfig) -> Result<&Path> {
    if config.corpus.as_os_str().is_empty() {
        return Err(Error::Config(
            "corpus path is not set (pass --corpus or set corpus in the config file)".into(),
        ));
    }
    Ok(&config.corpus)
}

fn print_pairs(pairs: &[(String, String)]) {
    for (key, value) in pairs {
        println!("{key}={value}");
    }
}

fn write_pairs(path: &Path, pairs: &[(String, String)]) -> Result<()> {
    let borrowed: Vec<(&str, String)> = pairs
        .iter()
        .map(|(k, v)| (k.as_str(), v.clone()))
        .collect();
    let mut buf = Vec::new();
    keyed::write_summary(&mut buf, &borrowed)?;
    fs::write(path, buf)?;
    Ok(())
}

/// Read a prior stage's artifact, pointing at the producing command when it
/// is missing.
fn read_stage_artifact(out_dir: &Path, rel: &str, produced_by: &str) -> Result<Vec<u8>> {
    fs::read(out_dir.join(rel))
        .map_err(|_| Error::MissingArtifact(format!("{rel} (run `emogap {produced_by}` first)")))
}

fn load_posts(out_dir: &Path) -> Result<Vec<AnnotatedPost>> {
    let bytes = read_stage_artifact(out_dir, artifact::CORPUS_RECORDS, "ingest")?;
    corpus::read_records(&bytes[..])
}

fn load_labels(out_dir: &Path) -> Result<Vec<HiddenLabel>> {
    let bytes = read_stage_artifact(out_dir, artifact::LABELS_TSV, "ingest")?;
    labels::read_labels_tsv(&bytes[..])
}

fn load_split(out_dir: &Path, posts: &[AnnotatedPost]) -> Result<DatasetSplit> {
    let path = out_dir.join(artifact::SPLIT_TXT);
    if !path.exists() {
        return Err(Error::MissingArtifact(format!(
            "{} (run `emogap split` first)",
            artifact::SPLIT_TXT
        )));
    }
    let all_ids: Vec<PostId> = posts.iter().map(|p| p.id).collect();
    DatasetSplit::read(&path, &all_ids)
}

fn load_predictions(out_dir: &Path) -> Result<Vec<PredictionRecord>> {
    let bytes = read_stage_artifact(out_dir, artifact::PREDICTIONS_TSV, "evaluate")?;
    detector::read_predictions_tsv(&bytes[..])
}

fn load_model(out_dir: &Path) -> Result<TrainedDetector> {
    if !out_dir.join(artifact::MODEL_CONFIG).exists() {
        return Err(Error::MissingArtifact(format!(
            "{} (run `emogap train` first)",
            artifact::MODEL_CONFIG
        )));
    }
    TrainedDetector::load(
        &out_dir.join(artifact::MODEL_DIR),
        segmenter_adapter_from_env()?,
        encoder_from_env()?.as_ref(),
    )
}

fn cmd_ingest(config: &PipelineConfig) -> Result<()> {
    let corpus_path = require_corpus(config)?;
    let out = require_out(config)?;
    config.validate_parameters()?;
    fs::create_dir_all(out)?;

    let posts = corpus::parse_corpus(corpus_path, &config.column_mapping)?;
    let mut buf = Vec::new();
    corpus::write_records(&mut buf, &posts)?;
    fs::write(out.join(artifact::CORPUS_RECORDS), &buf)?;

    let post_labels = labels::derive_hidden_labels(&posts, config.emotion, config.gap_threshold)?;
    buf.clear();
    labels::write_labels_tsv(&mut buf, &post_labels)?;
    fs::write(out.join(artifact::LABELS_TSV), &buf)?;

    let stage_pairs = vec![
        ("n_posts".to_string(), posts.len().to_string()),
        (
            "n_hidden".to_string(),
            post_labels.iter().filter(|l| l.hidden).count().to_string(),
        ),
    ];
    let mut merged = pipeline::config_summary(config);
    merged.extend(stage_pairs.iter().cloned());
    pipeline::merge_summary(out, &merged)?;
    print_pairs(&stage_pairs);
    Ok(())
}

fn cmd_stats(config: &PipelineConfig) -> Result<()> {
    let out = require_out(config)?;
    config.validate_parameters()?;
    let posts = load_posts(out)?;

    let (writer, reader, pairs) = pipeline::stats_artifacts(&posts, config.strong_threshold);
    let mut buf = Vec::new();
    writer.write_tsv(&mut buf)?;
    fs::write(out.join(artifact::COOCCURRENCE_WRITER_TSV), &buf)?;
    buf.clear();
    reader.write_tsv(&mut buf)?;
    fs::write(out.join(artifact::COOCCURRENCE_READER_TSV), &buf)?;
    write_pairs(&out.join(artifact::STATS_TXT), &pairs)?;

    pipeline::merge_summary(out, &pipeline::config_summary(config))?;
    print_pairs(&pairs);
    Ok(())
}

fn cmd_split(config: &PipelineConfig) -> Result<()> {
    let out = require_out(config)?;
    config.validate_parameters()?;
    let posts = load_posts(out)?;
    let post_labels = load_labels(out)?;

    let split = pipeline::make_split(&posts, config)?;
    let mut buf = Vec::new();
    split.write(&mut buf)?;
    fs::write(out.join(artifact::SPLIT_TXT), &buf)?;

    let hidden_of: BTreeMap<PostId, bool> =
        post_labels.iter().map(|l| (l.post_id, l.hidden)).collect();
    let count_hidden = |ids: &std::collections::BTreeSet<PostId>| {
        ids.iter()
            .filter(|id| hidden_of.get(id).copied().unwrap_or(false))
            .count()
    };
    let stage_pairs = vec![
        ("n_train".to_string(), split.train_ids.len().to_string()),
        ("n_test".to_string(), split.test_ids.len().to_string()),
        (
            "n_train_hidden".to_string(),
            count_hidden(&split.train_ids).to_string(),
        ),
        (
            "n_test_hidden".to_string(),
            count_hidden(&split.test_ids).to_string(),
        ),
    ];
    let mut merged = pipeline::config_summary(config);
    merged.extend(stage_pairs.iter().cloned());
    pipeline::merge_summary(out, &merged)?;
    print_pairs(&stage_pairs);
    Ok(())
}

fn cmd_train(config: &PipelineConfig) -> Result<()> {
    let out = require_out(config)?;
    config.validate_parameters()?;
    check_external_commands(config)?;
    let posts = load_posts(out)?;
    let post_labels = load_labels(out)?;
    let split = load_split(out, &posts)?;

    let segmenter = pipeline::build_segmenter(config, segmenter_adapter_from_env()?)?;
    let encoder = encoder_from_env()?;
    let model = pipeline::train_detector(
        config,
        &posts,
        &post_labels,
        &split,
        &segmenter,
        encoder.as_ref(),
    )?;
    model.save(&out.join(artifact::MODEL_DIR))?;

    let stage_pairs = vec![
        ("n_train".to_string(), split.train_ids.len().to_string()),
        (
            "model_fingerprint".to_string(),
            model.fingerprint().to_string(),
        ),
    ];
    let mut merged = pipeline::config_summary(config);
    merged.extend(stage_pairs.iter().cloned());
    pipeline::merge_summary(out, &merged)?;
    print_pairs(&stage_pairs);
    Ok(())
}

fn cmd_evaluate(config: &PipelineConfig) -> Result<()> {
    let out = require_out(config)?;
    config.validate_parameters()?;
    let posts = load_posts(out)?;
    let post_labels = load_labels(out)?;
    let split = load_split(out, &posts)?;
    let model = load_model(out)?;

    let evaluation = pipeline::evaluate_model(
        &model,
        &posts,
        &post_labels,
        &split,
        config.classify_threshold,
    )?;
    let mut buf = Vec::new();
    detector::write_predictions_tsv(&mut buf, &evaluation.predictions)?;
    fs::write(out.join(artifact::PREDICTIONS_TSV), &buf)?;
    buf.clear();
    metrics::write_roc_tsv(&mut buf, &evaluation.curve)?;
    fs::write(out.join(artifact::ROC_TSV), &buf)?;
    write_pairs(&out.join(artifact::METRICS_TXT), &evaluation.metrics_pairs)?;

    let mut merged = pipeline::config_summary(config);
    merged.extend(evaluation.summary_pairs.iter().cloned());
    pipeline::merge_summary(out, &merged)?;
    print_pairs(&evaluation.summary_pairs);
    Ok(())
}

fn cmd_mine(config: &PipelineConfig) -> Result<()> {
    let out = require_out(config)?;
    config.validate_parameters()?;
    check_external_commands(config)?;
    let posts = load_posts(out)?;
    let post_labels = load_labels(out)?;
    let split = load_split(out, &posts)?;
    let predictions = load_predictions(out)?;

    let segmenter = pipeline::build_segmenter(config, segmenter_adapter_from_env()?)?;
    let mined = pipeline::mine_all(
        &posts,
        &post_labels,
        &split,
        &predictions,
        &segmenter,
        config.emotion,
        config.mining_pool,
        config.top_k,
        config.min_hidden_count,
    )?;
    let mut buf = Vec::new();
    mining::write_ranking_tsv(&mut buf, &mined.unfiltered)?;
    fs::write(out.join(artifact::RANKING_UNFILTERED_TSV), &buf)?;
    buf.clear();
    mining::write_ranking_tsv(&mut buf, &mined.filtered)?;
    fs::write(out.join(artifact::RANKING_FILTERED_TSV), &buf)?;
    buf.clear();
    mining::write_intensity_tsv(&mut buf, &mined.intensity)?;
    fs::write(out.join(artifact::INTENSITY_TSV), &buf)?;

    let mut merged = pipeline::config_summary(config);
    merged.extend(mined.summary_pairs.iter().cloned());
    pipeline::merge_summary(out, &merged)?;

    let mut printed = mined.summary_pairs.clone();
    for (i, score) in mined.filtered.scores.iter().enumerate() {
        printed.push((format!("filtered_rank_{}", i + 1), score.token.clone()));
    }
    print_pairs(&printed);
    Ok(())
}

fn cmd_report(config: &PipelineConfig, explicit_limit: Option<usize>) -> Result<()> {
    let out = require_out(config)?;
    if let Some(limit) = explicit_limit {
        pipeline::merge_summary(out, &[("example_limit".to_string(), limit.to_string())])?;
    }
    let written = pipeline::emit_report(out)?;
    let pairs: Vec<(String, String)> = written
        .iter()
        .map(|path| ("wrote".to_string(), path.display().to_string()))
        .collect();
    print_pairs(&pairs);
    Ok(())
}

fn cmd_run(config: &PipelineConfig) -> Result<()> {
    check_external_commands(config)?;
    let manifest = pipeline::run_pipeline(
        config,
        segmenter_adapter_from_env()?,
        encoder_from_env()?.as_ref(),
    )?;
    let mut pairs: Vec<(String, String)> = manifest
        .summary
        .iter()
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    pairs.push((
        "manifest".to_string(),
        manifest
            .out_dir
            .join(artifact::MANIFEST_TSV)
            .display()
            .to_string(),
    ));
    print_pairs(&pairs);
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let mut spec = synth::PlantedCorpusSpec::default();
    if let Some(v) = args.posts {
        spec.posts = v;
    }
    if let Some(v) = args.hidden_fraction {
        spec.hidden_fraction = v;
    }
    if let Some(raw) = &args.markers {
        spec.markers = raw.split(',').map(|m| m.trim().to_string()).collect();
    }
    if let Some(v) = args.marker_rate_hidden {
        spec.marker_rate_hidden = v;
    }
    if let Some(v) = args.marker_rate_other {
        spec.marker_rate_other = v;
    }
    if let Some(v) = args.filler_vocabulary {
        spec.filler_vocabulary = v;
    }
    if let Some(v) = args.seed {
        spec.seed = v;
    }

    let planted = synth::generate_planted_corpus(&spec)?;
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut buf = Vec::new();
    synth::write_corpus_tsv(&mut buf, &planted.posts)?;
    fs::write(&args.out, buf)?;

    print_pairs(&[
        ("corpus".to_string(), args.out.display().to_string()),
        ("n_posts".to_string(), planted.posts.len().to_string()),
        ("n_hidden".to_string(), planted.hidden_ids.len().to_string()),
        ("markers".to_string(), planted.markers.join(",")),
    ]);
    Ok(())
}

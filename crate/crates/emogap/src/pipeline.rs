//! End-to-end run orchestration: one config in, a directory of artifacts
//! plus a content-hash manifest out.
//!
//! Stages run in a fixed order — ingest, labels, stats, split, train,
//! evaluate, mine, report — and every stage persists its output as a plain
//! file, so any stage can be rerun or inspected on its own. All randomness
//! derives from the single run seed, fanned out per stage by name hashing
//! ([`stage_seed`]), which keeps stage outcomes independent of execution
//! history. With the baseline detector backend the whole run is bitwise
//! deterministic: same config and seed, same manifest hashes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write as IoWrite;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{
    self, AnnotatedPost, ColumnMapping, DatasetSplit, PostId, split_dataset, split_dataset_grouped,
};
use crate::detector::{self, DetectorConfig, EncoderBridge, TrainExample};
use crate::emotion::Emotion;
use crate::error::{Error, Result};
use crate::keyed;
use crate::labels::{
    self, CooccurrenceMatrix, HiddenLabel, IntensitySource, ReaderStrongMode, cooccurrence_matrix,
    derive_hidden_labels, strong_label_counts,
};
use crate::metrics::{self, confusion_at, roc_curve, youden_optimal};
use crate::mining::{self, RankingResult, expression_ranking, true_positive_filter};
use crate::report;
use crate::segment::{Segmenter, SegmenterAdapter, SegmenterConfig};

/// File names of the run artifacts, relative to the output directory, in
/// the order they are produced.
pub mod artifact {
    pub const CORPUS_RECORDS: &str = "corpus.records";
    pub const LABELS_TSV: &str = "labels.tsv";
    pub const COOCCURRENCE_WRITER_TSV: &str = "cooccurrence_writer.tsv";
    pub const COOCCURRENCE_READER_TSV: &str = "cooccurrence_reader.tsv";
    pub const STATS_TXT: &str = "stats.txt";
    pub const SPLIT_TXT: &str = "split.txt";
    pub const MODEL_DIR: &str = "model";
    pub const MODEL_CONFIG: &str = "model/config.txt";
    pub const MODEL_PARAMS: &str = "model/params.bin";
    pub const MODEL_FINGERPRINT: &str = "model/fingerprint.txt";
    pub const MODEL_VOCABULARY: &str = "model/vocabulary.tsv";
    pub const PREDICTIONS_TSV: &str = "predictions.tsv";
    pub const ROC_TSV: &str = "roc.tsv";
    pub const METRICS_TXT: &str = "metrics.txt";
    pub const RANKING_UNFILTERED_TSV: &str = "ranking_unfiltered.tsv";
    pub const RANKING_FILTERED_TSV: &str = "ranking_filtered.tsv";
    pub const INTENSITY_TSV: &str = "intensity.tsv";
    pub const SUMMARY_TXT: &str = "summary.txt";
    pub const HEATMAP_WRITER_SVG: &str = "heatmap_writer.svg";
    pub const HEATMAP_READER_SVG: &str = "heatmap_reader.svg";
    pub const ROC_SVG: &str = "roc.svg";
    pub const RANKING_UNFILTERED_SVG: &str = "ranking_unfiltered.svg";
    pub const RANKING_FILTERED_SVG: &str = "ranking_filtered.svg";
    pub const EXAMPLES_TXT: &str = "examples.txt";
    pub const MANIFEST_TSV: &str = "manifest.tsv";
}

/// Which sentence pool unfiltered mining draws from. Filtered mining always
/// uses the test split, since detector decisions exist only there.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MiningPool {
    #[default]
    TestSplit,
    WholeCorpus,
}

impl fmt::Display for MiningPool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MiningPool::TestSplit => f.write_str("test-split"),
            MiningPool::WholeCorpus => f.write_str("whole-corpus"),
        }
    }
}

impl FromStr for MiningPool {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "test-split" => Ok(MiningPool::TestSplit),
            "whole-corpus" => Ok(MiningPool::WholeCorpus),
            other => Err(Error::InvalidArgument(format!(
                "unknown mining pool `{other}` (expected test-split or whole-corpus)"
            ))),
        }
    }
}

/// Everything a full run needs. Deserializes from a TOML or JSON config
/// file; every field has a default except the corpus and output paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// TSV corpus to ingest.
    pub corpus: PathBuf,
    /// Column names the corpus uses.
    pub column_mapping: ColumnMapping,
    /// Emotion whose writer-reader gap defines the hidden label.
    pub emotion: Emotion,
    /// Minimum writer-minus-reader-average gap for a hidden label.
    pub gap_threshold: f64,
    /// Minimum intensity that counts as a strong label in the stats stage.
    pub strong_threshold: f64,
    /// Train:test proportions.
    pub split_ratio: (u32, u32),
    /// Keep all posts of one group (e.g. one author) on the same side.
    pub split_by_group: bool,
    /// Run seed; stage seeds are derived from it by name hashing, so the
    /// `seed` fields of nested configs are ignored here.
    pub seed: u64,
    pub segmenter: SegmenterConfig,
    pub detector: DetectorConfig,
    /// Score cutoff for the positive decision, strictly inside (0, 1).
    pub classify_threshold: f64,
    /// Ranking length for both mining modes.
    pub top_k: usize,
    /// Support floor: tokens below this many hidden sentences are dropped.
    pub min_hidden_count: u64,
    /// Sentence pool for unfiltered mining.
    pub mining_pool: MiningPool,
    /// Most true-positive example sentences listed in the report.
    pub example_limit: usize,
    /// Directory all artifacts are written into.
    pub out_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus: PathBuf::new(),
            column_mapping: ColumnMapping::default(),
            emotion: Emotion::Anger,
            gap_threshold: labels::DEFAULT_GAP_THRESHOLD,
            strong_threshold: 2.0,
            split_ratio: (4, 1),
            split_by_group: false,
            seed: 1,
            segmenter: SegmenterConfig::default(),
            detector: DetectorConfig::default(),
            classify_threshold: 0.5,
            top_k: mining::DEFAULT_TOP_K,
            min_hidden_count: mining::DEFAULT_MIN_HIDDEN_COUNT,
            mining_pool: MiningPool::default(),
            example_limit: 5,
            out_dir: PathBuf::new(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.corpus.as_os_str().is_empty() {
            return Err(Error::Config("corpus path is not set".into()));
        }
        if self.out_dir.as_os_str().is_empty() {
            return Err(Error::Config("output directory is not set".into()));
        }
        self.validate_parameters()
    }

    /// Validate everything except the corpus and output paths — what a
    /// stage working on an existing run directory needs.
    pub fn validate_parameters(&self) -> Result<()> {
        if !(self.gap_threshold > 0.0 && self.gap_threshold <= 3.0) {
            return Err(Error::Config(format!(
                "gap_threshold {} outside (0, 3]",
                self.gap_threshold
            )));
        }
        if !(self.strong_threshold > 0.0 && self.strong_threshold <= 3.0) {
            return Err(Error::Config(format!(
                "strong_threshold {} outside (0, 3]",
                self.strong_threshold
            )));
        }
        if self.split_ratio.0 == 0 || self.split_ratio.1 == 0 {
            return Err(Error::Config(format!(
                "split ratio {}:{} has an empty side",
                self.split_ratio.0, self.split_ratio.1
            )));
        }
        if !(self.classify_threshold > 0.0 && self.classify_threshold < 1.0) {
            return Err(Error::Config(format!(
                "classify_threshold {} outside (0, 1)",
                self.classify_threshold
            )));
        }
        if self.top_k == 0 {
            return Err(Error::Config("top_k must be at least 1".into()));
        }
        self.segmenter.validate()?;
        self.detector.validate()?;
        Ok(())
    }
}

/// Derive a stage's seed from the run seed and the stage name, so a stage's
/// randomness does not depend on which stages ran before it.
pub fn stage_seed(run_seed: u64, stage: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(run_seed.to_le_bytes());
    hasher.update(stage.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest shorter than 8 bytes"))
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|byte| format!("{byte:02x}"))
        .collect()
}

/// One manifest row: an artifact's path relative to the output directory,
/// the SHA-256 of its bytes, and its size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArtifactEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// What a finished run hands back: where it wrote, what it wrote (with
/// content hashes), and the key numbers of the run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub out_dir: PathBuf,
    pub artifacts: Vec<ArtifactEntry>,
    pub summary: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn artifact(&self, path: &str) -> Option<&ArtifactEntry> {
        self.artifacts.iter().find(|entry| entry.path == path)
    }

    /// A summary value that must exist and parse; absence is an integrity
    /// failure because the pipeline always writes the full key set.
    pub fn summary_value<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self
            .summary
            .get(key)
            .ok_or_else(|| Error::Integrity(format!("summary is missing `{key}`")))?;
        raw.parse()
            .map_err(|_| Error::Integrity(format!("summary `{key}` = `{raw}` failed to parse")))
    }

    /// Rebuild a manifest from a run directory's manifest and summary files.
    pub fn read(out_dir: &Path) -> Result<RunManifest> {
        let manifest_path = out_dir.join(artifact::MANIFEST_TSV);
        let text = fs::read_to_string(&manifest_path)
            .map_err(|_| Error::MissingArtifact(artifact::MANIFEST_TSV.into()))?;
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "artifact\tsha256\tbytes")) => {}
            _ => {
                return Err(Error::Integrity(format!(
                    "{} does not start with the manifest header",
                    manifest_path.display()
                )));
            }
        }
        let mut artifacts = Vec::new();
        for (i, line) in lines {
            let mut fields = line.split('\t');
            let (path, sha256, bytes) = match (fields.next(), fields.next(), fields.next()) {
                (Some(p), Some(h), Some(b)) if fields.next().is_none() => (p, h, b),
                _ => {
                    return Err(Error::Integrity(format!(
                        "{}:{}: manifest row does not have 3 fields",
                        manifest_path.display(),
                        i + 1
                    )));
                }
            };
            let bytes = bytes.parse().map_err(|_| {
                Error::Integrity(format!(
                    "{}:{}: byte count is not an integer",
                    manifest_path.display(),
                    i + 1
                ))
            })?;
            artifacts.push(ArtifactEntry {
                path: path.to_string(),
                sha256: sha256.to_string(),
                bytes,
            });
        }
        let summary = keyed::read_summary(&out_dir.join(artifact::SUMMARY_TXT))
            .map_err(|_| Error::MissingArtifact(artifact::SUMMARY_TXT.into()))?;
        Ok(RunManifest {
            out_dir: out_dir.to_path_buf(),
            artifacts,
            summary,
        })
    }
}

/// Tracks everything a run writes so a failed run can remove its partial
/// output, and records content hashes for the manifest.
struct RunDir {
    out_dir: PathBuf,
    artifacts: Vec<ArtifactEntry>,
    written: Vec<PathBuf>,
}

impl RunDir {
    fn new(out_dir: &Path) -> Result<RunDir> {
        fs::create_dir_all(out_dir)?;
        Ok(RunDir {
            out_dir: out_dir.to_path_buf(),
            artifacts: Vec::new(),
            written: Vec::new(),
        })
    }

    /// Register a path for cleanup without hashing it — used for files some
    /// other writer is about to produce, so they are removed even when that
    /// writer fails halfway.
    fn expect(&mut self, rel: &str) {
        self.written.push(self.out_dir.join(rel));
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.out_dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        self.written.push(path.clone());
        fs::write(&path, bytes)?;
        self.record(rel, bytes);
        Ok(())
    }

    /// Hash a file already on disk (written by a model save) into the
    /// manifest. The path must have been `expect`ed beforehand.
    fn adopt(&mut self, rel: &str) -> Result<()> {
        let bytes = fs::read(self.out_dir.join(rel))?;
        self.record(rel, &bytes);
        Ok(())
    }

    fn record(&mut self, rel: &str, bytes: &[u8]) {
        self.artifacts.push(ArtifactEntry {
            path: rel.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
    }

    fn cleanup(&self) {
        for path in self.written.iter().rev() {
            let _ = fs::remove_file(path);
        }
        let _ = fs::remove_dir(self.out_dir.join(artifact::MODEL_DIR));
    }
}

/// Run the whole framework: derive hidden labels from the annotation gap,
/// train and evaluate the detector on a held-out split, mine expressions in
/// both modes, and render the report bundle. Returns the manifest of every
/// artifact written. On any stage error the partial artifacts are removed
/// and the error carries the stage name.
///
/// `adapter` is required when the segmenter mode is external-morphological;
/// `encoder` when the detector backend is encoder.
pub fn run_pipeline(
    config: &PipelineConfig,
    adapter: Option<Arc<dyn SegmenterAdapter>>,
    encoder: Option<&EncoderBridge>,
) -> Result<RunManifest> {
    config.validate()?;
    let mut dir = RunDir::new(&config.out_dir)?;
    match run_stages(config, adapter, encoder, &mut dir) {
        Ok(summary) => {
            let mut rows = Vec::new();
            writeln!(rows, "artifact\tsha256\tbytes")?;
            for entry in &dir.artifacts {
                writeln!(rows, "{}\t{}\t{}", entry.path, entry.sha256, entry.bytes)?;
            }
            dir.expect(artifact::MANIFEST_TSV);
            if let Err(err) = fs::write(dir.out_dir.join(artifact::MANIFEST_TSV), &rows) {
                dir.cleanup();
                return Err(err.into());
            }
            Ok(RunManifest {
                out_dir: dir.out_dir.clone(),
                artifacts: dir.artifacts.clone(),
                summary,
            })
        }
        Err(err) => {
            dir.cleanup();
            Err(err)
        }
    }
}

fn run_stages(
    config: &PipelineConfig,
    adapter: Option<Arc<dyn SegmenterAdapter>>,
    encoder: Option<&EncoderBridge>,
    dir: &mut RunDir,
) -> Result<BTreeMap<String, String>> {
    let mut summary: Vec<(String, String)> = config_summary(config);

    // Ingest: parse and persist the corpus in a mapping-free record form,
    // so later stages and reports no longer depend on the input schema.
    let posts = (|| -> Result<Vec<AnnotatedPost>> {
        let posts = corpus::parse_corpus(&config.corpus, &config.column_mapping)?;
        let mut buf = Vec::new();
        corpus::write_records(&mut buf, &posts)?;
        dir.write(artifact::CORPUS_RECORDS, &buf)?;
        Ok(posts)
    })()
    .map_err(|e| e.in_stage("ingest"))?;
    summary.push(("n_posts".into(), posts.len().to_string()));

    // Labels: the writer-minus-reader-average gap rule.
    let post_labels = (|| -> Result<Vec<HiddenLabel>> {
        let post_labels = derive_hidden_labels(&posts, config.emotion, config.gap_threshold)?;
        let mut buf = Vec::new();
        labels::write_labels_tsv(&mut buf, &post_labels)?;
        dir.write(artifact::LABELS_TSV, &buf)?;
        Ok(post_labels)
    })()
    .map_err(|e| e.in_stage("labels"))?;
    let n_hidden = post_labels.iter().filter(|l| l.hidden).count();
    summary.push(("n_hidden".into(), n_hidden.to_string()));

    // Stats: strong-label co-occurrence matrices and per-emotion counts.
    (|| -> Result<()> {
        let (writer, reader, pairs) = stats_artifacts(&posts, config.strong_threshold);
        let mut buf = Vec::new();
        writer.write_tsv(&mut buf)?;
        dir.write(artifact::COOCCURRENCE_WRITER_TSV, &buf)?;
        buf.clear();
        reader.write_tsv(&mut buf)?;
        dir.write(artifact::COOCCURRENCE_READER_TSV, &buf)?;
        buf.clear();
        write_owned_summary(&mut buf, &pairs)?;
        dir.write(artifact::STATS_TXT, &buf)
    })()
    .map_err(|e| e.in_stage("stats"))?;

    // Split: seeded random partition, optionally keeping groups whole.
    let split = (|| -> Result<DatasetSplit> {
        let split = make_split(&posts, config)?;
        let mut buf = Vec::new();
        split.write(&mut buf)?;
        dir.write(artifact::SPLIT_TXT, &buf)?;
        Ok(split)
    })()
    .map_err(|e| e.in_stage("split"))?;

    let hidden_of = hidden_map(&post_labels)?;
    summary.push(("n_train".into(), split.train_ids.len().to_string()));
    summary.push(("n_test".into(), split.test_ids.len().to_string()));
    let n_train_hidden = split.train_ids.iter().filter(|id| hidden_of[id]).count();
    let n_test_hidden = split.test_ids.iter().filter(|id| hidden_of[id]).count();
    summary.push(("n_train_hidden".into(), n_train_hidden.to_string()));
    summary.push(("n_test_hidden".into(), n_test_hidden.to_string()));

    // Train: fit the detector on the train side only and persist the model.
    let segmenter = build_segmenter(config, adapter)?;
    let model = (|| -> Result<detector::TrainedDetector> {
        let model = train_detector(config, &posts, &post_labels, &split, &segmenter, encoder)?;
        for rel in [
            artifact::MODEL_CONFIG,
            artifact::MODEL_PARAMS,
            artifact::MODEL_FINGERPRINT,
            artifact::MODEL_VOCABULARY,
        ] {
            dir.expect(rel);
        }
        model.save(&dir.out_dir.join(artifact::MODEL_DIR))?;
        for rel in [
            artifact::MODEL_CONFIG,
            artifact::MODEL_PARAMS,
            artifact::MODEL_FINGERPRINT,
            artifact::MODEL_VOCABULARY,
        ] {
            if dir.out_dir.join(rel).exists() {
                dir.adopt(rel)?;
            }
        }
        Ok(model)
    })()
    .map_err(|e| e.in_stage("train"))?;
    summary.push(("model_fingerprint".into(), model.fingerprint().to_string()));

    // Evaluate: score the held-out posts, persist per-post predictions, the
    // ROC curve, and threshold metrics.
    let evaluation = (|| -> Result<EvaluationOutput> {
        let evaluation =
            evaluate_model(&model, &posts, &post_labels, &split, config.classify_threshold)?;
        let mut buf = Vec::new();
        detector::write_predictions_tsv(&mut buf, &evaluation.predictions)?;
        dir.write(artifact::PREDICTIONS_TSV, &buf)?;
        buf.clear();
        metrics::write_roc_tsv(&mut buf, &evaluation.curve)?;
        dir.write(artifact::ROC_TSV, &buf)?;
        buf.clear();
        write_owned_summary(&mut buf, &evaluation.metrics_pairs)?;
        dir.write(artifact::METRICS_TXT, &buf)?;
        Ok(evaluation)
    })()
    .map_err(|e| e.in_stage("evaluate"))?;
    summary.extend(evaluation.summary_pairs.iter().cloned());

    // Mine: gold-label (unfiltered) and detector-confirmed (filtered)
    // expression rankings, plus the intensity table for the mined tokens.
    (|| -> Result<()> {
        let mined = mine_all(
            &posts,
            &post_labels,
            &split,
            &evaluation.predictions,
            &segmenter,
            config.emotion,
            config.mining_pool,
            config.top_k,
            config.min_hidden_count,
        )?;
        let mut buf = Vec::new();
        mining::write_ranking_tsv(&mut buf, &mined.unfiltered)?;
        dir.write(artifact::RANKING_UNFILTERED_TSV, &buf)?;
        buf.clear();
        mining::write_ranking_tsv(&mut buf, &mined.filtered)?;
        dir.write(artifact::RANKING_FILTERED_TSV, &buf)?;
        buf.clear();
        mining::write_intensity_tsv(&mut buf, &mined.intensity)?;
        dir.write(artifact::INTENSITY_TSV, &buf)?;
        summary.extend(mined.summary_pairs);
        Ok(())
    })()
    .map_err(|e| e.in_stage("mine"))?;

    // Report: summary first (figures read it back), then every figure is
    // rebuilt from the persisted artifacts — never from in-memory state —
    // so the bundle is reproducible from the manifest alone.
    (|| -> Result<()> {
        let mut buf = Vec::new();
        write_owned_summary(&mut buf, &summary)?;
        dir.write(artifact::SUMMARY_TXT, &buf)?;
        for (rel, bytes) in build_report_files(&dir.out_dir)? {
            dir.write(rel, &bytes)?;
        }
        Ok(())
    })()
    .map_err(|e| e.in_stage("report"))?;

    Ok(summary.into_iter().collect())
}

/// Strong-label co-occurrence matrices (writer and reader-average) plus the
/// per-emotion strong-count pairs that make up the stats artifact.
pub fn stats_artifacts(
    posts: &[AnnotatedPost],
    strong_threshold: f64,
) -> (CooccurrenceMatrix, CooccurrenceMatrix, Vec<(String, String)>) {
    let writer = cooccurrence_matrix(posts, IntensitySource::Writer, strong_threshold);
    let reader = cooccurrence_matrix(posts, IntensitySource::ReaderAverage, strong_threshold);
    let mut pairs = vec![("strong_threshold".to_string(), strong_threshold.to_string())];
    for emotion in Emotion::ALL {
        let avg = strong_label_counts(posts, emotion, strong_threshold, ReaderStrongMode::Average);
        let each =
            strong_label_counts(posts, emotion, strong_threshold, ReaderStrongMode::PerReader);
        let name = emotion.name();
        pairs.push((format!("writer_strong_{name}"), avg.writer.to_string()));
        pairs.push((format!("reader_strong_avg_{name}"), avg.reader.to_string()));
        pairs.push((format!("reader_strong_each_{name}"), each.reader.to_string()));
    }
    (writer, reader, pairs)
}

/// Partition the corpus with the split stage's derived seed and check the
/// result is a usable partition.
pub fn make_split(posts: &[AnnotatedPost], config: &PipelineConfig) -> Result<DatasetSplit> {
    let seed = stage_seed(config.seed, "split");
    let split = if config.split_by_group {
        split_dataset_grouped(posts, config.split_ratio, seed)?
    } else {
        split_dataset(posts, config.split_ratio, seed)?
    };
    if split.train_ids.is_empty() || split.test_ids.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "split leaves {} train and {} test posts; both sides must be non-empty",
            split.train_ids.len(),
            split.test_ids.len()
        )));
    }
    if !split.train_ids.is_disjoint(&split.test_ids)
        || split.train_ids.len() + split.test_ids.len() != posts.len()
    {
        return Err(Error::Integrity(
            "split does not partition the corpus".into(),
        ));
    }
    Ok(split)
}

/// The run's segmenter: the configured mode, with `adapter` backing the
/// external-morphological mode when one is supplied.
pub fn build_segmenter(
    config: &PipelineConfig,
    adapter: Option<Arc<dyn SegmenterAdapter>>,
) -> Result<Segmenter> {
    match adapter {
        Some(adapter) => Segmenter::with_adapter(config.segmenter.clone(), adapter),
        None => Segmenter::new(config.segmenter.clone()),
    }
}

/// Fit the detector on the train side of the split. The detector seed is
/// derived from the run seed (the nested config's own seed is ignored), and
/// the fitted model is checked against the test ids for split leakage.
pub fn train_detector(
    config: &PipelineConfig,
    posts: &[AnnotatedPost],
    labels: &[HiddenLabel],
    split: &DatasetSplit,
    segmenter: &Segmenter,
    encoder: Option<&EncoderBridge>,
) -> Result<detector::TrainedDetector> {
    let mut detector_config = config.detector.clone();
    detector_config.seed = stage_seed(config.seed, "train");
    let examples = train_examples(posts, labels, split)?;
    let model = detector::train(&detector_config, segmenter, encoder, &examples)?;
    if detector::fingerprint_of_ids(split.test_ids.iter().copied()) == model.fingerprint() {
        return Err(Error::Integrity(
            "model fingerprint matches the test ids; the split leaked".into(),
        ));
    }
    Ok(model)
}

/// Index labels by post id, rejecting duplicates.
fn hidden_map(labels: &[HiddenLabel]) -> Result<BTreeMap<PostId, bool>> {
    let map: BTreeMap<PostId, bool> = labels.iter().map(|l| (l.post_id, l.hidden)).collect();
    if map.len() != labels.len() {
        return Err(Error::Integrity("duplicate post id in labels".into()));
    }
    Ok(map)
}

/// A label for every post and no label without a post — guards stage-wise
/// runs against a corpus that changed after the labels were derived.
fn check_label_coverage(
    posts: &[AnnotatedPost],
    hidden_of: &BTreeMap<PostId, bool>,
) -> Result<()> {
    if posts.len() == hidden_of.len() && posts.iter().all(|p| hidden_of.contains_key(&p.id)) {
        return Ok(());
    }
    Err(Error::Integrity(format!(
        "labels cover {} posts but the corpus has {}; re-derive the labels",
        hidden_of.len(),
        posts.len()
    )))
}

/// The train-side posts paired with their hidden labels, in corpus order.
pub fn train_examples(
    posts: &[AnnotatedPost],
    labels: &[HiddenLabel],
    split: &DatasetSplit,
) -> Result<Vec<TrainExample>> {
    let hidden_of = hidden_map(labels)?;
    check_label_coverage(posts, &hidden_of)?;
    Ok(posts
        .iter()
        .filter(|p| split.train_ids.contains(&p.id))
        .map(|p| TrainExample {
            post_id: p.id,
            text: p.text.clone(),
            hidden: hidden_of[&p.id],
        })
        .collect())
}

/// Everything the evaluate stage produces: per-post predictions at the
/// operating threshold, the ROC curve, the full metrics listing, and the
/// subset of pairs that belongs in the run summary.
pub struct EvaluationOutput {
    pub predictions: Vec<detector::PredictionRecord>,
    pub curve: metrics::RocCurve,
    pub metrics_pairs: Vec<(String, String)>,
    pub summary_pairs: Vec<(String, String)>,
}

/// Score the test split and compute threshold metrics against the gold
/// hidden labels. Test posts are taken in corpus order.
pub fn evaluate_model(
    model: &detector::TrainedDetector,
    posts: &[AnnotatedPost],
    labels: &[HiddenLabel],
    split: &DatasetSplit,
    classify_threshold: f64,
) -> Result<EvaluationOutput> {
    let hidden_of = hidden_map(labels)?;
    check_label_coverage(posts, &hidden_of)?;
    let test_posts: Vec<&AnnotatedPost> = posts
        .iter()
        .filter(|p| split.test_ids.contains(&p.id))
        .collect();
    let texts: Vec<String> = test_posts.iter().map(|p| p.text.clone()).collect();
    let ids: Vec<PostId> = test_posts.iter().map(|p| p.id).collect();
    let gold: Vec<bool> = test_posts.iter().map(|p| hidden_of[&p.id]).collect();
    let scores = model.predict_scores(&texts)?;
    let predictions = detector::classify(&ids, &scores, classify_threshold)?;

    let curve = roc_curve(&scores, &gold)?;
    let auc_rank = metrics::auc_rank(&scores, &gold)?;
    let operating = confusion_at(&scores, &gold, classify_threshold)?;
    let best = youden_optimal(&curve);
    let youden = confusion_at(&scores, &gold, best.threshold)?;

    let mut metrics_pairs = vec![
        ("auc_trapezoid".to_string(), curve.auc.to_string()),
        ("auc_rank".to_string(), auc_rank.to_string()),
        ("roc_points".to_string(), curve.points.len().to_string()),
        ("test_positives".to_string(), curve.positives.to_string()),
        ("test_negatives".to_string(), curve.negatives.to_string()),
    ];
    metrics_pairs.extend(operating.summary_pairs("operating"));
    metrics_pairs.extend(youden.summary_pairs("youden"));

    let mut summary_pairs = vec![("auc".to_string(), curve.auc.to_string())];
    summary_pairs.extend(operating.summary_pairs("operating"));
    summary_pairs.push(("youden_threshold".into(), youden.threshold.to_string()));
    summary_pairs.push(("youden_tp".into(), youden.true_positives.to_string()));

    Ok(EvaluationOutput {
        predictions,
        curve,
        metrics_pairs,
        summary_pairs,
    })
}

/// Both mining modes plus the intensity table over the mined tokens.
pub struct MiningOutput {
    pub unfiltered: RankingResult,
    pub filtered: RankingResult,
    pub intensity: mining::IntensityTable,
    pub summary_pairs: Vec<(String, String)>,
}

/// Mine expressions in both modes. Unfiltered ranks gold hidden against
/// gold non-hidden over `pool`; filtered ranks detector-confirmed true
/// positives against the rest of the test split. The intensity table covers
/// the filtered ranking's tokens over the whole corpus.
#[allow(clippy::too_many_arguments)]
pub fn mine_all(
    posts: &[AnnotatedPost],
    labels: &[HiddenLabel],
    split: &DatasetSplit,
    predictions: &[detector::PredictionRecord],
    segmenter: &Segmenter,
    emotion: Emotion,
    pool: MiningPool,
    top_k: usize,
    min_hidden_count: u64,
) -> Result<MiningOutput> {
    let hidden_of = hidden_map(labels)?;
    check_label_coverage(posts, &hidden_of)?;
    let all_texts: Vec<String> = posts.iter().map(|p| p.text.clone()).collect();
    let all_tokens = segmenter.segment_batch(&all_texts)?;

    let unfiltered_indices: Vec<usize> = match pool {
        MiningPool::TestSplit => posts
            .iter()
            .enumerate()
            .filter(|(_, p)| split.test_ids.contains(&p.id))
            .map(|(i, _)| i)
            .collect(),
        MiningPool::WholeCorpus => (0..posts.len()).collect(),
    };
    let (gold_hidden, gold_other): (Vec<usize>, Vec<usize>) = unfiltered_indices
        .iter()
        .partition(|&&i| hidden_of[&posts[i].id]);
    let unfiltered = rank_or_empty(
        &take_tokens(&all_tokens, &gold_hidden),
        &take_tokens(&all_tokens, &gold_other),
        top_k,
        min_hidden_count,
    )?;

    let test_labels: Vec<HiddenLabel> = labels
        .iter()
        .filter(|l| split.test_ids.contains(&l.post_id))
        .cloned()
        .collect();
    let confirmed = true_positive_filter(&test_labels, predictions)?;
    let (tp_indices, rest_indices): (Vec<usize>, Vec<usize>) = posts
        .iter()
        .enumerate()
        .filter(|(_, p)| split.test_ids.contains(&p.id))
        .map(|(i, _)| i)
        .partition(|&i| confirmed.contains(&posts[i].id));
    let filtered = rank_or_empty(
        &take_tokens(&all_tokens, &tp_indices),
        &take_tokens(&all_tokens, &rest_indices),
        top_k,
        min_hidden_count,
    )?;

    let mined_tokens: Vec<String> = filtered.scores.iter().map(|s| s.token.clone()).collect();
    let intensity = mining::intensity_table(posts, &all_tokens, &mined_tokens, emotion)?;

    let summary_pairs = vec![
        ("unfiltered_hidden".into(), gold_hidden.len().to_string()),
        ("unfiltered_other".into(), gold_other.len().to_string()),
        (
            "unfiltered_qualifying".into(),
            unfiltered.qualifying_tokens.to_string(),
        ),
        (
            "unfiltered_shortfall".into(),
            unfiltered.shortfall.to_string(),
        ),
        ("filtered_tp".into(), tp_indices.len().to_string()),
        ("filtered_other".into(), rest_indices.len().to_string()),
        (
            "filtered_qualifying".into(),
            filtered.qualifying_tokens.to_string(),
        ),
        ("filtered_shortfall".into(), filtered.shortfall.to_string()),
    ];
    Ok(MiningOutput {
        unfiltered,
        filtered,
        intensity,
        summary_pairs,
    })
}

/// Merge key/value pairs into the run directory's summary file, creating it
/// if absent. Stage-wise runs use this so each stage contributes its keys;
/// merged summaries are written in sorted-key order.
pub fn merge_summary(out_dir: &Path, pairs: &[(String, String)]) -> Result<()> {
    let path = out_dir.join(artifact::SUMMARY_TXT);
    let mut map = if path.exists() {
        keyed::read_summary(&path)?
    } else {
        BTreeMap::new()
    };
    for (key, value) in pairs {
        map.insert(key.clone(), value.clone());
    }
    let merged: Vec<(String, String)> = map.into_iter().collect();
    let mut buf = Vec::new();
    write_owned_summary(&mut buf, &merged)?;
    fs::write(path, buf)?;
    Ok(())
}

/// Config fields echoed into the run summary.
pub fn config_summary(config: &PipelineConfig) -> Vec<(String, String)> {
    vec![
        ("corpus".into(), config.corpus.display().to_string()),
        ("emotion".into(), config.emotion.name().to_string()),
        ("gap_threshold".into(), config.gap_threshold.to_string()),
        (
            "strong_threshold".into(),
            config.strong_threshold.to_string(),
        ),
        (
            "split_ratio".into(),
            format!("{}:{}", config.split_ratio.0, config.split_ratio.1),
        ),
        ("split_by_group".into(), config.split_by_group.to_string()),
        ("seed".into(), config.seed.to_string()),
        ("segmenter_mode".into(), config.segmenter.mode.to_string()),
        ("segmenter_ngram_n".into(), config.segmenter.ngram_n.to_string()),
        ("normalizer".into(), config.segmenter.normalizer.to_string()),
        ("backend".into(), config.detector.backend.to_string()),
        (
            "classify_threshold".into(),
            config.classify_threshold.to_string(),
        ),
        ("top_k".into(), config.top_k.to_string()),
        (
            "min_hidden_count".into(),
            config.min_hidden_count.to_string(),
        ),
        ("mining_pool".into(), config.mining_pool.to_string()),
        ("example_limit".into(), config.example_limit.to_string()),
    ]
}

fn write_owned_summary<W: IoWrite>(w: W, pairs: &[(String, String)]) -> Result<()> {
    let borrowed: Vec<(&str, String)> = pairs
        .iter()
        .map(|(k, v)| (k.as_str(), v.clone()))
        .collect();
    keyed::write_summary(w, &borrowed)
}

fn take_tokens(all_tokens: &[Vec<String>], indices: &[usize]) -> Vec<Vec<String>> {
    indices.iter().map(|&i| all_tokens[i].clone()).collect()
}

/// Rank expressions, or return an empty shortfall ranking when either side
/// of the pool is empty (e.g. the detector confirmed nothing); a degenerate
/// pool is reported, not a crash.
fn rank_or_empty(
    hidden: &[Vec<String>],
    other: &[Vec<String>],
    k: usize,
    min_hidden_count: u64,
) -> Result<RankingResult> {
    if hidden.is_empty() || other.is_empty() {
        return Ok(RankingResult {
            scores: Vec::new(),
            requested_k: k,
            min_hidden_count,
            qualifying_tokens: 0,
            shortfall: true,
        });
    }
    expression_ranking(hidden, other, k, min_hidden_count)
}

fn read_artifact(out_dir: &Path, rel: &str) -> Result<Vec<u8>> {
    fs::read(out_dir.join(rel)).map_err(|_| Error::MissingArtifact(rel.to_string()))
}

/// Rebuild the report bundle from a run directory's raw artifacts. Returns
/// (relative path, bytes) pairs in a fixed order; nothing is computed from
/// state outside the artifacts, so the bundle is reproducible after the
/// fact. Fails with the artifact's name when an input is missing.
fn build_report_files(out_dir: &Path) -> Result<Vec<(&'static str, Vec<u8>)>> {
    let summary_path = out_dir.join(artifact::SUMMARY_TXT);
    if !summary_path.exists() {
        return Err(Error::MissingArtifact(artifact::SUMMARY_TXT.into()));
    }
    let summary = keyed::read_summary(&summary_path)?;
    let need = |key: &str| keyed::require(&summary, key, &summary_path);
    let parse_err =
        |key: &str, raw: &str| Error::Integrity(format!("summary `{key}` = `{raw}` is malformed"));

    let emotion: Emotion = need("emotion")?
        .parse()
        .map_err(|_| parse_err("emotion", need("emotion").unwrap_or("?")))?;
    let strong_threshold: f64 = {
        let raw = need("strong_threshold")?;
        raw.parse()
            .map_err(|_| parse_err("strong_threshold", raw))?
    };
    let top_k: usize = {
        let raw = need("top_k")?;
        raw.parse().map_err(|_| parse_err("top_k", raw))?
    };
    let min_hidden_count: u64 = {
        let raw = need("min_hidden_count")?;
        raw.parse().map_err(|_| parse_err("min_hidden_count", raw))?
    };
    let example_limit: usize = {
        let raw = need("example_limit")?;
        raw.parse().map_err(|_| parse_err("example_limit", raw))?
    };

    let posts = corpus::read_records(&read_artifact(out_dir, artifact::CORPUS_RECORDS)?[..])?;
    let post_labels = labels::read_labels_tsv(&read_artifact(out_dir, artifact::LABELS_TSV)?[..])?;
    let writer_matrix = CooccurrenceMatrix::read_tsv(
        &read_artifact(out_dir, artifact::COOCCURRENCE_WRITER_TSV)?[..],
        IntensitySource::Writer,
        strong_threshold,
    )?;
    let reader_matrix = CooccurrenceMatrix::read_tsv(
        &read_artifact(out_dir, artifact::COOCCURRENCE_READER_TSV)?[..],
        IntensitySource::ReaderAverage,
        strong_threshold,
    )?;
    let curve = metrics::read_roc_tsv(&read_artifact(out_dir, artifact::ROC_TSV)?[..])?;
    let predictions =
        detector::read_predictions_tsv(&read_artifact(out_dir, artifact::PREDICTIONS_TSV)?[..])?;
    let rebuild_ranking = |rel: &str, prefix: &str| -> Result<RankingResult> {
        let scores = mining::read_ranking_tsv(&read_artifact(out_dir, rel)?[..])?;
        let qualifying_key = format!("{prefix}_qualifying");
        let shortfall_key = format!("{prefix}_shortfall");
        let qualifying: usize = {
            let raw = need(&qualifying_key)?;
            raw.parse().map_err(|_| parse_err(&qualifying_key, raw))?
        };
        let shortfall: bool = {
            let raw = need(&shortfall_key)?;
            raw.parse().map_err(|_| parse_err(&shortfall_key, raw))?
        };
        Ok(RankingResult {
            scores,
            requested_k: top_k,
            min_hidden_count,
            qualifying_tokens: qualifying,
            shortfall,
        })
    };
    let unfiltered = rebuild_ranking(artifact::RANKING_UNFILTERED_TSV, "unfiltered")?;
    let filtered = rebuild_ranking(artifact::RANKING_FILTERED_TSV, "filtered")?;
    if !out_dir.join(artifact::INTENSITY_TSV).exists() {
        return Err(Error::MissingArtifact(artifact::INTENSITY_TSV.into()));
    }

    let pred_ids: BTreeSet<PostId> = predictions.iter().map(|p| p.post_id).collect();
    let test_labels: Vec<HiddenLabel> = post_labels
        .iter()
        .filter(|l| pred_ids.contains(&l.post_id))
        .cloned()
        .collect();
    let confirmed = true_positive_filter(&test_labels, &predictions)?;

    let emotion_name = emotion.name();
    let mut files: Vec<(&'static str, Vec<u8>)> = Vec::new();
    files.push((
        artifact::HEATMAP_WRITER_SVG,
        report::heatmap_svg(
            &writer_matrix,
            &format!("Writer strong-label co-occurrence (intensity >= {strong_threshold})"),
        )
        .into_bytes(),
    ));
    files.push((
        artifact::HEATMAP_READER_SVG,
        report::heatmap_svg(
            &reader_matrix,
            &format!(
                "Reader-average strong-label co-occurrence (intensity >= {strong_threshold})"
            ),
        )
        .into_bytes(),
    ));
    files.push((
        artifact::ROC_SVG,
        report::roc_svg(
            &curve,
            &format!("Hidden-{emotion_name} detector, held-out test split"),
        )
        .into_bytes(),
    ));
    files.push((
        artifact::RANKING_UNFILTERED_SVG,
        report::ranking_bars_svg(
            &unfiltered,
            &format!("Hidden-{emotion_name} expressions, gold labels (unfiltered)"),
        )
        .into_bytes(),
    ));
    files.push((
        artifact::RANKING_FILTERED_SVG,
        report::ranking_bars_svg(
            &filtered,
            &format!("Hidden-{emotion_name} expressions, detector-confirmed (filtered)"),
        )
        .into_bytes(),
    ));
    let mut examples = Vec::new();
    report::write_true_positive_examples(&mut examples, &posts, &confirmed, example_limit)?;
    files.push((artifact::EXAMPLES_TXT, examples));
    Ok(files)
}

/// Regenerate the report bundle (figures and example listing) in a finished
/// run directory. Raw artifacts are read back from disk; a missing one is
/// an error naming it. Returns the paths written.
pub fn emit_report(out_dir: &Path) -> Result<Vec<PathBuf>> {
    let files = build_report_files(out_dir)?;
    let mut written = Vec::with_capacity(files.len());
    for (rel, bytes) in files {
        let path = out_dir.join(rel);
        fs::write(&path, &bytes)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{self, PlantedCorpusSpec};

    fn planted_corpus_file(dir: &Path, spec: &PlantedCorpusSpec) -> PathBuf {
        let planted = synth::generate_planted_corpus(spec).expect("generate");
        let path = dir.join("corpus.tsv");
        let mut buf = Vec::new();
        synth::write_corpus_tsv(&mut buf, &planted.posts).expect("serialize corpus");
        fs::write(&path, buf).expect("write corpus");
        path
    }

    fn small_spec() -> PlantedCorpusSpec {
        PlantedCorpusSpec {
            posts: 160,
            filler_vocabulary: 40,
            seed: 7,
            ..PlantedCorpusSpec::default()
        }
    }

    fn small_config(dir: &Path) -> PipelineConfig {
        PipelineConfig {
            corpus: planted_corpus_file(dir, &small_spec()),
            out_dir: dir.join("run"),
            seed: 11,
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn full_run_writes_every_artifact_with_matching_hashes() {
        let tmp = tempfile::tempdir().expect("tempdir");
        let config = small_config(tmp.path());
        let manifest = run_pipeline(&config, None, None).expect("pipeline");

        let expected = [
            artifact::CORPUS_RECORDS,
            artifact::LABELS_TSV,
            artifact::COOCCURRENCE_WRITER_TSV,
            artifact::COOCCURRENCE_READER_TSV,
            artifact::STATS_TXT,
            artifact::SPLIT_TXT,
            artifact::MODEL_CONFIG,
            artifact::MODEL_PARAMS,
            artifact::MODEL_FINGERPRINT,
            artifact::MODEL_VOCABULARY,
            artifact::PREDICTIONS_TSV,
            artifact::ROC_TSV,
            artifact::METRICS_TXT,
            artifact::RANKING_UNFILTERED_TSV,
            artifact::RANKING_FILTERED_TSV,
            artifact::INTENSITY_TSV,
            artifact::SUMMARY_TXT,
            artifact::HEATMAP_WRITER_SVG,
            artifact::HEATMAP_READER_SVG,
            artifact::ROC_SVG,
            artifact::RANKING_UNFILTERED_SVG,
            artifact::RANKING_FILTERED_SVG,
            artifact::EXAMPLES_TXT,
        ];
        let listed: Vec<&str> = manifest.artifacts.iter().map(|a| a.path.as_str()).collect();
        assert_eq!(listed, expected);

        for entry in &manifest.artifacts {
            let bytes = fs::read(manifest.out_dir.join(&entry.path)).expect("artifact readable");
            assert_eq!(sha256_hex(&bytes), entry.sha256, "hash of {}", entry.path);
            assert_eq!(bytes.len() as u64, entry.bytes, "size of {}", entry.path);
        }

        let reread = RunManifest::read(&manifest.out_dir).expect("manifest readable");
        assert_eq!(reread, manifest);
        assert_eq!(
            manifest.summary.get("n_posts"),
            Some(&"160".to_string()),
            "summary echoes the corpus size"
        );
        // The operating-point true positives and the filtered mining pool
        // are the same set by definition.
        assert_eq!(
            manifest.summary.get("operating_tp"),
            manifest.summary.get("filtered_tp")
        );
    }

    #[test]
    fn rerun_reproduces_manifest_hashes_bitwise() {
        let tmp = tempfile::tempdir().expect("tempdir");
        let corpus = planted_corpus_file(tmp.path(), &small_spec());
        let run = |out: PathBuf| {
            let config = PipelineConfig {
                corpus: corpus.clone(),
                out_dir: out,
                seed: 11,
                ..PipelineConfig::default()
            };
            run_pipeline(&config, None, None).expect("pipeline")
        };
        let first = run(tmp.path().join("a"));
        let second = run(tmp.path().join("b"));
        assert_eq!(first.artifacts, second.artifacts);
        assert_eq!(first.summary, second.summary);
        let manifest_a = fs::read(tmp.path().join("a").join(artifact::MANIFEST_TSV)).unwrap();
        let manifest_b = fs::read(tmp.path().join("b").join(artifact::MANIFEST_TSV)).unwrap();
        assert_eq!(manifest_a, manifest_b, "manifest files are byte-identical");
    }

    #[test]
    fn different_seed_changes_the_split_artifact() {
        let tmp = tempfile::tempdir().expect("tempdir");
        let corpus = planted_corpus_file(tmp.path(), &small_spec());
        let run = |out: PathBuf, seed: u64| {
            let config = PipelineConfig {
                corpus: corpus.clone(),
                out_dir: out,
                seed,
                ..PipelineConfig::default()
            };
            run_pipeline(&config, None, None).expect("pipeline")
        };
        let first = run(tmp.path().join("a"), 11);
        let second = run(tmp.path().join("b"), 12);
        assert_ne!(
            first.artifact(artifact::SPLIT_TXT).unwrap().sha256,
            second.artifact(artifact::SPLIT_TXT).unwrap().sha256
        );
        // Ingest-stage outputs precede any randomness and stay identical.
        assert_eq!(
            first.artifact(artifact::CORPUS_RECORDS).unwrap().sha256,
            second.artifact(artifact::CORPUS_RECORDS).unwrap().sha256
        );
    }

    #[test]
    fn stage_seeds_differ_by_stage_and_follow_the_run_seed() {
        assert_eq!(stage_seed(1, "split"), stage_seed(1, "split"));
        assert_ne!(stage_seed(1, "split"), stage_seed(1, "train"));
        assert_ne!(stage_seed(1, "split"), stage_seed(2, "split"));
    }

    #[test]
    fn missing_corpus_fails_in_the_ingest_stage_and_leaves_nothing() {
        let tmp = tempfile::tempdir().expect("tempdir");
        let config = PipelineConfig {
            corpus: tmp.path().join("no-such-corpus.tsv"),
            out_dir: tmp.path().join("run"),
            ..PipelineConfig::default()
        };
        let err = run_pipeline(&config, None, None).unwrap_err();
        match err {
            Error::Stage { stage, .. } => assert_eq!(stage, "ingest"),
            other => panic!("expected a stage error, got {other}"),
        }
        let leftover: Vec<_> = fs::read_dir(tmp.path().join("run"))
            .map(|dir| dir.collect::<std::result::Result<Vec<_>, _>>().unwrap())
            .unwrap_or_default();
        assert!(leftover.is_empty(), "partial artifacts remain: {leftover:?}");
    }

    #[test]
    fn single_class_corpus_fails_in_train_and_removes_partial_artifacts() {
        let tmp = tempfile::tempdir().expect("tempdir");
        // Writer and readers agree everywhere, so no post is hidden and the
        // training data has a single class.
        let mut posts = synth::generate_planted_corpus(&small_spec())
            .expect("generate")
            .posts;
        for post in &mut posts {
            post.writer = post.readers[0];
            post.readers[1] = post.readers[0];
            post.readers[2] = post.readers[0];
        }
        let corpus_path = tmp.path().join("flat.tsv");
        let mut buf = Vec::new();
        synth::write_corpus_tsv(&mut buf, &posts).expect("serialize");
        fs::write(&corpus_path, buf).expect("write");

        let out_dir = tmp.path().join("run");
        let config = PipelineConfig {
            corpus: corpus_path,
            out_dir: out_dir.clone(),
            ..PipelineConfig::default()
        };
        let err = run_pipeline(&config, None, None).unwrap_err();
        match err {
            Error::Stage { stage, .. } => assert_eq!(stage, "train"),
            other => panic!("expected a stage error, got {other}"),
        }
        for rel in [
            artifact::CORPUS_RECORDS,
            artifact::LABELS_TSV,
            artifact::SPLIT_TXT,
            artifact::MANIFEST_TSV,
        ] {
            assert!(
                !out_dir.join(rel).exists(),
                "{rel} survived a failed run"
            );
        }
    }

    #[test]
    fn signal_free_corpus_reports_mining_shortfall_instead_of_crashing() {
        let tmp = tempfile::tempdir().expect("tempdir");
        // Markers occur at the same rate in both classes: nothing for the
        // detector to learn, and (with a high cutoff) nothing confirmed.
        let spec = PlantedCorpusSpec {
            posts: 120,
            marker_rate_hidden: 0.05,
            filler_vocabulary: 30,
            seed: 3,
            ..PlantedCorpusSpec::default()
        };
        let config = PipelineConfig {
            corpus: planted_corpus_file(tmp.path(), &spec),
            out_dir: tmp.path().join("run"),
            classify_threshold: 0.99,
            seed: 5,
            ..PipelineConfig::default()
        };
        let manifest = run_pipeline(&config, None, None).expect("pipeline");
        assert_eq!(manifest.summary.get("filtered_tp"), Some(&"0".to_string()));
        assert_eq!(
            manifest.summary.get("filtered_shortfall"),
            Some(&"true".to_string())
        );
        let svg = fs::read_to_string(
            manifest.out_dir.join(artifact::RANKING_FILTERED_SVG),
        )
        .expect("ranking svg");
        assert!(svg.contains("support floor"), "shortfall notice missing");
        let intensity = fs::read_to_string(manifest.out_dir.join(artifact::INTENSITY_TSV))
            .expect("intensity table");
        assert_eq!(
            intensity.lines().count(),
            2,
            "header plus the all-sentences row"
        );
    }

    #[test]
    fn emit_report_rebuilds_deleted_figures_bitwise() {
        let tmp = tempfile::tempdir().expect("tempdir");
        let config = small_config(tmp.path());
        let manifest = run_pipeline(&config, None, None).expect("pipeline");
        let roc_path = manifest.out_dir.join(artifact::ROC_SVG);
        let original = fs::read(&roc_path).expect("roc svg");
        fs::remove_file(&roc_path).expect("delete");
        emit_report(&manifest.out_dir).expect("report");
        assert_eq!(fs::read(&roc_path).expect("rebuilt"), original);
    }

    #[test]
    fn emit_report_names_the_missing_artifact() {
        let tmp = tempfile::tempdir().expect("tempdir");
        let config = small_config(tmp.path());
        let manifest = run_pipeline(&config, None, None).expect("pipeline");
        fs::remove_file(manifest.out_dir.join(artifact::ROC_TSV)).expect("delete");
        let err = emit_report(&manifest.out_dir).unwrap_err();
        match err {
            Error::MissingArtifact(name) => assert_eq!(name, artifact::ROC_TSV),
            other => panic!("expected a missing-artifact error, got {other}"),
        }
    }

    #[test]
    fn invalid_config_is_rejected_before_any_stage_runs() {
        let tmp = tempfile::tempdir().expect("tempdir");
        let config = PipelineConfig {
            corpus: tmp.path().join("corpus.tsv"),
            out_dir: tmp.path().join("run"),
            classify_threshold: 1.5,
            ..PipelineConfig::default()
        };
        assert!(matches!(
            run_pipeline(&config, None, None),
            Err(Error::Config(_))
        ));
        let config = PipelineConfig::default();
        assert!(matches!(config.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn whole_corpus_pool_mines_over_every_post() {
        let tmp = tempfile::tempdir().expect("tempdir");
        let mut config = small_config(tmp.path());
        config.mining_pool = MiningPool::WholeCorpus;
        let manifest = run_pipeline(&config, None, None).expect("pipeline");
        let hidden: usize = manifest.summary_value("unfiltered_hidden").unwrap();
        let other: usize = manifest.summary_value("unfiltered_other").unwrap();
        let n_posts: usize = manifest.summary_value("n_posts").unwrap();
        let n_hidden: usize = manifest.summary_value("n_hidden").unwrap();
        assert_eq!(hidden, n_hidden);
        assert_eq!(hidden + other, n_posts);
    }

    #[test]
    fn pipeline_config_round_trips_through_toml_shaped_json() {
        // The config derives plain serde; spot-check defaults fill gaps.
        let config: PipelineConfig =
            serde_json::from_str(r#"{"corpus": "c.tsv", "out_dir": "out", "top_k": 3}"#)
                .expect("deserialize");
        assert_eq!(config.top_k, 3);
        assert_eq!(config.emotion, Emotion::Anger);
        assert_eq!(config.gap_threshold, 2.0);
        assert_eq!(config.split_ratio, (4, 1));
        assert_eq!(config.classify_threshold, 0.5);
        assert_eq!(config.mining_pool, MiningPool::TestSplit);
    }
}

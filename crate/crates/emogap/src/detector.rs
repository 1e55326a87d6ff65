//! Stage (i): train a binary detector of hidden-emotion sentences and score
//! unseen text.
//!
//! Two backends share one contract. The `encoder` backend drives an external
//! fine-tuning command around a pretrained masked-language-model checkpoint
//! (treated as an opaque input). The `baseline` backend is a seed-free,
//! fully deterministic regularized logistic regression over bag-of-token
//! counts, so the whole pipeline and its acceptance properties run at desk
//! scale with no checkpoint.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write as IoWrite};
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::PostId;
use crate::error::{Error, Result};
use crate::keyed;
use crate::par;
use crate::segment::{Segmenter, SegmenterAdapter, SegmenterConfig, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    /// External fine-tuned pretrained-encoder command.
    Encoder,
    /// In-process deterministic linear model.
    #[default]
    Baseline,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Backend::Encoder => f.write_str("encoder"),
            Backend::Baseline => f.write_str("baseline"),
        }
    }
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "encoder" => Ok(Backend::Encoder),
            "baseline" => Ok(Backend::Baseline),
            other => Err(Error::InvalidArgument(format!("unknown backend `{other}`"))),
        }
    }
}

/// Training loss. Fixed: binary cross-entropy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Loss {
    #[default]
    CrossEntropy,
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("cross-entropy")
    }
}

/// Optimizer family for the encoder backend. Fixed: adaptive-moment (Adam).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    #[default]
    AdaptiveMoment,
}

impl fmt::Display for Optimizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("adaptive-moment")
    }
}

/// Knobs of the in-process baseline, separate from the encoder fine-tuning
/// protocol fields: the baseline fits full-batch (so `batch_size` and
/// `epochs` do not govern it) from a zero initialization (so no random
/// state is consumed).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineHyperparams {
    /// Minimum document frequency for a token to become a feature.
    pub min_df: u64,
    /// L2 penalty on the weights (bias exempt).
    pub l2: f64,
    /// Gradient-descent step size.
    pub step_size: f64,
    /// Full-batch gradient-descent iterations.
    pub iterations: u32,
}

impl Default for BaselineHyperparams {
    fn default() -> Self {
        BaselineHyperparams {
            min_df: 2,
            l2: 1e-4,
            step_size: 0.5,
            iterations: 300,
        }
    }
}

impl BaselineHyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.min_df == 0 {
            return Err(Error::InvalidArgument("baseline min_df must be >= 1".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::InvalidArgument("baseline l2 must be finite and >= 0".into()));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidArgument("baseline step_size must be positive".into()));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("baseline iterations must be >= 1".into()));
        }
        Ok(())
    }
}

/// Detector configuration. The training-protocol defaults (batch size 32,
/// dropout 0.1, learning rate 2e-5, 3 epochs, Adam, cross-entropy) describe
/// the encoder fine-tuning run; see [`BaselineHyperparams`] for the
/// baseline's own knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub backend: Backend,
    pub loss: Loss,
    pub optimizer: Optimizer,
    pub batch_size: u32,
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub epochs: u32,
    pub seed: u64,
    /// Local path or registry identifier of the pretrained encoder
    /// checkpoint (encoder backend only; opaque to the toolkit).
    pub encoder_checkpoint: Option<String>,
    /// Balanced class reweighting of the loss. Off by default: the rarity
    /// of the hidden class is deliberately left unweighted.
    pub class_weighting: bool,
    pub baseline: BaselineHyperparams,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            backend: Backend::Baseline,
            loss: Loss::CrossEntropy,
            optimizer: Optimizer::AdaptiveMoment,
            batch_size: 32,
            dropout_rate: 0.1,
            learning_rate: 2e-5,
            epochs: 3,
            seed: 0,
            encoder_checkpoint: None,
            class_weighting: false,
            baseline: BaselineHyperparams::default(),
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        if self.epochs < 1 {
            return Err(Error::InvalidArgument("epochs must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout_rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning_rate must be positive".into()));
        }
        self.baseline.validate()
    }
}

/// One training example: the sentence and its derived hidden flag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainExample {
    pub post_id: PostId,
    pub text: String,
    pub hidden: bool,
}

/// Detector output for one post at a stated threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub post_id: PostId,
    /// Positive-class probability in [0, 1].
    pub score: f64,
    /// `score >= threshold`.
    pub decision: bool,
}

/// External fine-tuning command for the encoder backend.
///
/// Wire protocol, both subcommands reading stdin and writing stdout:
///  - `<cmd> train --checkpoint C --batch-size N --dropout R --learning-rate R
///    --epochs N --seed N`: stdin carries one `label<TAB>text` line per
///    example (label 0/1, text with tabs/newlines replaced by spaces);
///    stdout is the learned parameter blob, opaque bytes.
///  - `<cmd> predict --checkpoint C --params FILE`: stdin carries one text
///    per line; stdout one decimal score in [0,1] per line.
///
/// Input truncation to the encoder's native length limit is the command's
/// responsibility.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderBridge {
    program: String,
    args: Vec<String>,
}

impl EncoderBridge {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        EncoderBridge {
            program: program.into(),
            args,
        }
    }

    /// Parse a shell-free command line: program plus whitespace-separated
    /// arguments.
    pub fn from_command_line(line: &str) -> Result<Self> {
        let mut parts = line.split_whitespace().map(str::to_string);
        let program = parts
            .next()
            .ok_or_else(|| Error::Config("empty encoder command line".into()))?;
        Ok(EncoderBridge::new(program, parts.collect()))
    }

    fn run(&self, extra_args: &[String], stdin_payload: &[u8]) -> Result<Vec<u8>> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .args(extra_args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| {
                Error::Config(format!(
                    "failed to spawn encoder command `{}`: {e}",
                    self.program
                ))
            })?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        let mut stdout = child.stdout.take().expect("piped stdout");
        let output = std::thread::scope(|scope| -> Result<Vec<u8>> {
            let writer = scope.spawn(move || -> std::io::Result<()> {
                stdin.write_all(stdin_payload)?;
                Ok(())
            });
            let mut output = Vec::new();
            stdout
                .read_to_end(&mut output)
                .map_err(|e| Error::Training(format!("encoder read failed: {e}")))?;
            writer
                .join()
                .expect("stdin writer panicked")
                .map_err(|e| Error::Training(format!("encoder write failed: {e}")))?;
            Ok(output)
        })?;
        let status = child
            .wait()
            .map_err(|e| Error::Training(format!("encoder wait failed: {e}")))?;
        if !status.success() {
            let mut stderr = String::new();
            if let Some(mut pipe) = child.stderr.take() {
                let _ = pipe.read_to_string(&mut stderr);
            }
            return Err(Error::Training(format!(
                "encoder command exited with {status}: {}",
                stderr.trim()
            )));
        }
        Ok(output)
    }

    fn train(&self, config: &DetectorConfig, examples: &[TrainExample]) -> Result<Vec<u8>> {
        let checkpoint = config
            .encoder_checkpoint
            .as_deref()
            .ok_or_else(|| Error::Config("encoder backend requires encoder_checkpoint".into()))?;
        let args = vec![
            "train".to_string(),
            "--checkpoint".to_string(),
            checkpoint.to_string(),
            "--batch-size".to_string(),
            config.batch_size.to_string(),
            "--dropout".to_string(),
            config.dropout_rate.to_string(),
            "--learning-rate".to_string(),
            config.learning_rate.to_string(),
            "--epochs".to_string(),
            config.epochs.to_string(),
            "--seed".to_string(),
            config.seed.to_string(),
        ];
        let payload: String = examples
            .iter()
            .map(|ex| {
                format!(
                    "{}\t{}\n",
                    ex.hidden as u8,
                    ex.text.replace(['\t', '\n', '\r'], " ")
                )
            })
            .collect();
        let blob = self.run(&args, payload.as_bytes())?;
        if blob.is_empty() {
            return Err(Error::Training("encoder command produced no parameters".into()));
        }
        Ok(blob)
    }

    fn predict(
        &self,
        config: &DetectorConfig,
        params_path: &Path,
        texts: &[String],
    ) -> Result<Vec<f64>> {
        let checkpoint = config
            .encoder_checkpoint
            .as_deref()
            .ok_or_else(|| Error::Config("encoder backend requires encoder_checkpoint".into()))?;
        let args = vec![
            "predict".to_string(),
            "--checkpoint".to_string(),
            checkpoint.to_string(),
            "--params".to_string(),
            params_path.display().to_string(),
        ];
        let payload: String = texts
            .iter()
            .map(|t| t.replace(['\t', '\n', '\r'], " ") + "\n")
            .collect();
        let output = self.run(&args, payload.as_bytes())?;
        let text = String::from_utf8(output)
            .map_err(|_| Error::Integrity("encoder scores are not UTF-8".into()))?;
        let scores: Vec<f64> = text
            .lines()
            .map(|line| {
                line.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Integrity(format!("bad encoder score `{line}`")))
            })
            .collect::<Result<_>>()?;
        if scores.len() != texts.len() {
            return Err(Error::Integrity(format!(
                "expected {} encoder scores, got {}",
                texts.len(),
                scores.len()
            )));
        }
        for &score in &scores {
            if !(0.0..=1.0).contains(&score) {
                return Err(Error::Integrity(format!(
                    "encoder score {score} outside [0, 1]"
                )));
            }
        }
        Ok(scores)
    }
}

/// SHA-256 over the sorted post ids, one per line — the model's statement
/// of exactly which posts it saw. The split's leakage guard compares this
/// against the train/test sides.
pub fn fingerprint_of_ids<I: IntoIterator<Item = PostId>>(ids: I) -> String {
    let mut sorted: Vec<PostId> = ids.into_iter().collect();
    sorted.sort_unstable();
    let mut hasher = Sha256::new();
    for id in sorted {
        hasher.update(id.to_string().as_bytes());
        hasher.update(b"\n");
    }
    hasher
        .finalize()
        .iter()
        .map(|byte| format!("{byte:02x}"))
        .collect()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Sparse bag-of-token counts, sorted by feature index so every float
/// accumulation over them runs in one fixed order.
fn token_counts(vocabulary: &Vocabulary, tokens: &[String]) -> Vec<(usize, f64)> {
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for token in tokens {
        if let Some(index) = vocabulary.index_of(token) {
            *counts.entry(index).or_insert(0.0) += 1.0;
        }
    }
    counts.into_iter().collect()
}

/// A trained detector plus everything needed to score new text: the
/// segmenter it was trained with and, for the encoder backend, the bridge
/// to the external command.
pub struct TrainedDetector {
    config: DetectorConfig,
    segmenter: Segmenter,
    fingerprint: String,
    params: Params,
}

enum Params {
    Baseline {
        vocabulary: Vocabulary,
        /// One weight per vocabulary token, bias last.
        weights: Vec<f64>,
    },
    Encoder {
        blob: Vec<u8>,
        bridge: EncoderBridge,
    },
}

impl fmt::Debug for TrainedDetector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TrainedDetector")
            .field("backend", &self.config.backend)
            .field("fingerprint", &self.fingerprint)
            .finish_non_exhaustive()
    }
}

/// Fit a detector. Baseline: deterministic full-batch gradient descent on
/// regularized logistic loss over bag-of-token counts, zero-initialized, so
/// retraining on the same inputs reproduces the parameters bitwise.
/// Encoder: delegate the fine-tuning run to `encoder` per the §-protocol
/// fields of `config`.
pub fn train(
    config: &DetectorConfig,
    segmenter: &Segmenter,
    encoder: Option<&EncoderBridge>,
    examples: &[TrainExample],
) -> Result<TrainedDetector> {
    config.validate()?;
    let positives = examples.iter().filter(|ex| ex.hidden).count();
    if positives == 0 || positives == examples.len() {
        return Err(Error::Training(format!(
            "training data has a single class ({positives} of {} positive)",
            examples.len()
        )));
    }
    let fingerprint = fingerprint_of_ids(examples.iter().map(|ex| ex.post_id));

    let params = match config.backend {
        Backend::Baseline => train_baseline(config, segmenter, examples)?,
        Backend::Encoder => {
            let bridge = encoder.ok_or_else(|| {
                Error::Config("encoder backend requires an encoder command bridge".into())
            })?;
            if config.encoder_checkpoint.is_none() {
                return Err(Error::Config(
                    "encoder backend requires encoder_checkpoint".into(),
                ));
            }
            Params::Encoder {
                blob: bridge.train(config, examples)?,
                bridge: bridge.clone(),
            }
        }
    };
    Ok(TrainedDetector {
        config: config.clone(),
        segmenter: segmenter.clone(),
        fingerprint,
        params,
    })
}

fn train_baseline(
    config: &DetectorConfig,
    segmenter: &Segmenter,
    examples: &[TrainExample],
) -> Result<Params> {
    let texts: Vec<String> = examples.iter().map(|ex| ex.text.clone()).collect();
    let token_lists = segmenter.segment_batch(&texts)?;
    let vocabulary =
        crate::segment::build_vocabulary_from_tokens(&token_lists, config.baseline.min_df)?;

    let features: Vec<Vec<(usize, f64)>> = token_lists
        .iter()
        .map(|tokens| token_counts(&vocabulary, tokens))
        .collect();
    let labels: Vec<f64> = examples.iter().map(|ex| ex.hidden as u8 as f64).collect();

    // Optional balanced reweighting; weights sum to the example count either
    // way, keeping the gradient scale comparable.
    let m = examples.len() as f64;
    let positives = labels.iter().sum::<f64>();
    let (weight_pos, weight_neg) = if config.class_weighting {
        (m / (2.0 * positives), m / (2.0 * (m - positives)))
    } else {
        (1.0, 1.0)
    };

    let dim = vocabulary.len() + 1; // bias last
    let mut weights = vec![0.0f64; dim];
    let indices: Vec<usize> = (0..examples.len()).collect();
    for _ in 0..config.baseline.iterations {
        // Per-chunk partial gradients folded in fixed chunk order keep the
        // float accumulation bitwise identical across thread counts.
        let partials = par::chunk_partials(&indices, |chunk| {
            let mut grad = vec![0.0f64; dim];
            for &i in chunk {
                let mut z = weights[dim - 1];
                for &(j, count) in &features[i] {
                    z += weights[j] * count;
                }
                let weight = if labels[i] > 0.5 { weight_pos } else { weight_neg };
                let residual = weight * (sigmoid(z) - labels[i]);
                for &(j, count) in &features[i] {
                    grad[j] += residual * count;
                }
                grad[dim - 1] += residual;
            }
            grad
        });
        let mut grad = vec![0.0f64; dim];
        for partial in partials {
            for (g, p) in grad.iter_mut().zip(partial) {
                *g += p;
            }
        }
        let step = config.baseline.step_size;
        let l2 = config.baseline.l2;
        for j in 0..dim - 1 {
            weights[j] -= step * (grad[j] / m + l2 * weights[j]);
        }
        weights[dim - 1] -= step * grad[dim - 1] / m;
    }
    Ok(Params::Baseline {
        vocabulary,
        weights,
    })
}

static PARAMS_FILE_COUNTER: AtomicU64 = AtomicU64::new(0);

impl TrainedDetector {
    pub fn backend(&self) -> Backend {
        self.config.backend
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    /// SHA-256 over the sorted training post ids.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Serialized learned parameters: little-endian f64 weights for the
    /// baseline, the external command's opaque blob for the encoder.
    pub fn params_blob(&self) -> Vec<u8> {
        match &self.params {
            Params::Baseline { weights, .. } => {
                weights.iter().flat_map(|w| w.to_le_bytes()).collect()
            }
            Params::Encoder { blob, .. } => blob.clone(),
        }
    }

    /// Score texts with the positive-class probability, order-aligned with
    /// the input. Deterministic; scores always in [0, 1].
    pub fn predict_scores(&self, texts: &[String]) -> Result<Vec<f64>> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        match &self.params {
            Params::Baseline {
                vocabulary,
                weights,
            } => {
                let token_lists = self.segmenter.segment_batch(texts)?;
                let dim = weights.len();
                Ok(par::map_collect(&token_lists, |tokens| {
                    let mut z = weights[dim - 1];
                    for (j, count) in token_counts(vocabulary, tokens) {
                        z += weights[j] * count;
                    }
                    sigmoid(z)
                }))
            }
            Params::Encoder { blob, bridge } => {
                // The predict protocol hands parameters over as a file; use
                // a scratch file when the model has not been saved.
                let path = std::env::temp_dir().join(format!(
                    "emogap-params-{}-{}.bin",
                    std::process::id(),
                    PARAMS_FILE_COUNTER.fetch_add(1, Ordering::Relaxed),
                ));
                std::fs::write(&path, blob)?;
                let result = bridge.predict(&self.config, &path, texts);
                let _ = std::fs::remove_file(&path);
                result
            }
        }
    }

    /// Write the model artifact: `config.txt` (keyed snapshot),
    /// `params.bin`, `fingerprint.txt`, and for the baseline
    /// `vocabulary.tsv`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut pairs = vec![
            ("backend".to_string(), self.config.backend.to_string()),
            ("loss".to_string(), self.config.loss.to_string()),
            ("optimizer".to_string(), self.config.optimizer.to_string()),
            ("batch_size".to_string(), self.config.batch_size.to_string()),
            ("dropout_rate".to_string(), self.config.dropout_rate.to_string()),
            ("learning_rate".to_string(), self.config.learning_rate.to_string()),
            ("epochs".to_string(), self.config.epochs.to_string()),
            ("seed".to_string(), self.config.seed.to_string()),
            ("class_weighting".to_string(), self.config.class_weighting.to_string()),
            ("baseline_min_df".to_string(), self.config.baseline.min_df.to_string()),
            ("baseline_l2".to_string(), self.config.baseline.l2.to_string()),
            ("baseline_step_size".to_string(), self.config.baseline.step_size.to_string()),
            ("baseline_iterations".to_string(), self.config.baseline.iterations.to_string()),
            ("segmenter_mode".to_string(), self.segmenter.config().mode.to_string()),
            ("segmenter_ngram_n".to_string(), self.segmenter.config().ngram_n.to_string()),
            ("segmenter_normalizer".to_string(), self.segmenter.config().normalizer.to_string()),
        ];
        if let Some(checkpoint) = &self.config.encoder_checkpoint {
            pairs.push(("encoder_checkpoint".to_string(), checkpoint.clone()));
        }
        let pairs: Vec<(&str, String)> = pairs.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
        let mut config_file = std::fs::File::create(dir.join("config.txt"))?;
        keyed::write_summary(&mut config_file, &pairs)?;

        std::fs::write(dir.join("params.bin"), self.params_blob())?;
        std::fs::write(dir.join("fingerprint.txt"), format!("{}\n", self.fingerprint))?;
        if let Params::Baseline { vocabulary, .. } = &self.params {
            let mut vocab_file = std::fs::File::create(dir.join("vocabulary.tsv"))?;
            vocabulary.write_tsv(&mut vocab_file)?;
        }
        Ok(())
    }

    /// Load a model artifact. External-mode segmentation needs `adapter`;
    /// the encoder backend needs `encoder` to score.
    pub fn load(
        dir: &Path,
        adapter: Option<Arc<dyn SegmenterAdapter>>,
        encoder: Option<&EncoderBridge>,
    ) -> Result<TrainedDetector> {
        let config_path = dir.join("config.txt");
        let map = keyed::read_summary(&config_path)?;
        let get = |key: &str| keyed::require(&map, key, &config_path);
        let parse_f64 = |key: &str| -> Result<f64> {
            get(key)?.parse().map_err(|_| {
                Error::Integrity(format!(
                    "bad float for `{key}` in {}",
                    config_path.display()
                ))
            })
        };
        let parse_u64 = |key: &str| -> Result<u64> {
            get(key)?.parse().map_err(|_| {
                Error::Integrity(format!(
                    "bad integer for `{key}` in {}",
                    config_path.display()
                ))
            })
        };

        let backend: Backend = get("backend")?.parse()?;
        let segmenter_config = SegmenterConfig {
            mode: get("segmenter_mode")?.parse()?,
            ngram_n: parse_u64("segmenter_ngram_n")? as usize,
            normalizer: get("segmenter_normalizer")?.parse()?,
        };
        let segmenter = match adapter {
            Some(adapter) => Segmenter::with_adapter(segmenter_config, adapter)?,
            None => Segmenter::new(segmenter_config)?,
        };

        let config = DetectorConfig {
            backend,
            loss: Loss::CrossEntropy,
            optimizer: Optimizer::AdaptiveMoment,
            batch_size: parse_u64("batch_size")? as u32,
            dropout_rate: parse_f64("dropout_rate")?,
            learning_rate: parse_f64("learning_rate")?,
            epochs: parse_u64("epochs")? as u32,
            seed: parse_u64("seed")?,
            encoder_checkpoint: map.get("encoder_checkpoint").cloned(),
            class_weighting: get("class_weighting")? == "true",
            baseline: BaselineHyperparams {
                min_df: parse_u64("baseline_min_df")?,
                l2: parse_f64("baseline_l2")?,
                step_size: parse_f64("baseline_step_size")?,
                iterations: parse_u64("baseline_iterations")? as u32,
            },
        };
        config.validate()?;

        let fingerprint = std::fs::read_to_string(dir.join("fingerprint.txt"))?
            .trim()
            .to_string();
        let blob = std::fs::read(dir.join("params.bin"))?;
        let params = match backend {
            Backend::Baseline => {
                let vocab_file = std::fs::File::open(dir.join("vocabulary.tsv"))?;
                let vocabulary = Vocabulary::read_tsv(vocab_file)?;
                if blob.len() % 8 != 0 {
                    return Err(Error::Integrity(format!(
                        "params.bin length {} is not a multiple of 8",
                        blob.len()
                    )));
                }
                let weights: Vec<f64> = blob
                    .chunks_exact(8)
                    .map(|chunk| f64::from_le_bytes(chunk.try_into().expect("8-byte chunk")))
                    .collect();
                if weights.len() != vocabulary.len() + 1 {
                    return Err(Error::Integrity(format!(
                        "expected {} weights for {} tokens, found {}",
                        vocabulary.len() + 1,
                        vocabulary.len(),
                        weights.len()
                    )));
                }
                Params::Baseline {
                    vocabulary,
                    weights,
                }
            }
            Backend::Encoder => {
                let bridge = encoder.ok_or_else(|| {
                    Error::Config("loading an encoder model requires the encoder bridge".into())
                })?;
                Params::Encoder {
                    blob,
                    bridge: bridge.clone(),
                }
            }
        };
        Ok(TrainedDetector {
            config,
            segmenter,
            fingerprint,
            params,
        })
    }
}

/// Apply the `score >= threshold` rule. The threshold must sit strictly
/// inside (0, 1) so both decisions stay reachable.
pub fn classify(
    post_ids: &[PostId],
    scores: &[f64],
    threshold: f64,
) -> Result<Vec<PredictionRecord>> {
    if post_ids.len() != scores.len() {
        return Err(Error::InvalidArgument(format!(
            "{} post ids but {} scores",
            post_ids.len(),
            scores.len()
        )));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "classification threshold {threshold} outside (0, 1)"
        )));
    }
    Ok(post_ids
        .iter()
        .zip(scores)
        .map(|(&post_id, &score)| PredictionRecord {
            post_id,
            score,
            decision: score >= threshold,
        })
        .collect())
}

/// Predictions artifact: TSV of post_id, score, decision.
pub fn write_predictions_tsv<W: IoWrite>(
    mut w: W,
    records: &[PredictionRecord],
) -> Result<()> {
    writeln!(w, "post_id\tscore\tdecision")?;
    for r in records {
        writeln!(w, "{}\t{}\t{}", r.post_id, r.score, r.decision)?;
    }
    Ok(())
}

pub fn read_predictions_tsv<R: Read>(reader: R) -> Result<Vec<PredictionRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .from_reader(reader);
    let mut records = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let field = |idx: usize| -> Result<&str> {
            record
                .get(idx)
                .ok_or_else(|| Error::row(row + 1, "short prediction row"))
        };
        records.push(PredictionRecord {
            post_id: field(0)?.parse()?,
            score: field(1)?
                .parse()
                .map_err(|_| Error::row(row + 1, "bad score"))?,
            decision: field(2)? == "true",
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics;
    use std::path::PathBuf;

    fn whitespace() -> Segmenter {
        Segmenter::new(SegmenterConfig::default()).unwrap()
    }

    /// 20 linearly separable texts: positives carry "grr", negatives "calm".
    fn separable_examples() -> Vec<TrainExample> {
        (0..20)
            .map(|i| {
                let hidden = i % 2 == 0;
                TrainExample {
                    post_id: PostId(i),
                    text: if hidden {
                        format!("grr token{} filler", i % 5)
                    } else {
                        format!("calm token{} filler", i % 5)
                    },
                    hidden,
                }
            })
            .collect()
    }

    #[test]
    fn baseline_fits_a_separable_toy_set_perfectly() {
        let config = DetectorConfig::default();
        let examples = separable_examples();
        let model = train(&config, &whitespace(), None, &examples).unwrap();
        let texts: Vec<String> = examples.iter().map(|ex| ex.text.clone()).collect();
        let scores = model.predict_scores(&texts).unwrap();
        let correct = examples
            .iter()
            .zip(&scores)
            .filter(|(ex, &s)| (s >= 0.5) == ex.hidden)
            .count();
        assert_eq!(correct, examples.len(), "scores: {scores:?}");
        for &score in &scores {
            assert!((0.0..=1.0).contains(&score));
        }
    }

    #[test]
    fn retraining_reproduces_the_parameter_blob_bitwise() {
        let config = DetectorConfig::default();
        let examples = separable_examples();
        let a = train(&config, &whitespace(), None, &examples).unwrap();
        let b = train(&config, &whitespace(), None, &examples).unwrap();
        assert_eq!(a.params_blob(), b.params_blob());
        assert_eq!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn single_class_training_data_is_rejected() {
        let config = DetectorConfig::default();
        let examples: Vec<TrainExample> = (0..4)
            .map(|i| TrainExample {
                post_id: PostId(i),
                text: format!("text {i}"),
                hidden: true,
            })
            .collect();
        assert!(matches!(
            train(&config, &whitespace(), None, &examples),
            Err(Error::Training(_))
        ));
    }

    #[test]
    fn encoder_backend_without_checkpoint_or_bridge_is_config_error() {
        let examples = separable_examples();
        let mut config = DetectorConfig {
            backend: Backend::Encoder,
            ..DetectorConfig::default()
        };
        // No bridge registered at all.
        assert!(matches!(
            train(&config, &whitespace(), None, &examples),
            Err(Error::Config(_))
        ));
        // Bridge present but no checkpoint named.
        let bridge = EncoderBridge::new("true", vec![]);
        assert!(matches!(
            train(&config, &whitespace(), Some(&bridge), &examples),
            Err(Error::Config(_))
        ));
        // Checkpoint named but the command does not exist.
        config.encoder_checkpoint = Some("some-checkpoint".into());
        let missing = EncoderBridge::new("/nonexistent/encoder-command", vec![]);
        assert!(matches!(
            train(&config, &whitespace(), Some(&missing), &examples),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn predicting_nothing_returns_nothing() {
        let model = train(
            &DetectorConfig::default(),
            &whitespace(),
            None,
            &separable_examples(),
        )
        .unwrap();
        assert!(model.predict_scores(&[]).unwrap().is_empty());
    }

    #[test]
    fn repeated_text_gets_the_same_score() {
        let model = train(
            &DetectorConfig::default(),
            &whitespace(),
            None,
            &separable_examples(),
        )
        .unwrap();
        let texts: Vec<String> = vec!["grr something".into(), "grr something".into()];
        let scores = model.predict_scores(&texts).unwrap();
        assert_eq!(scores[0].to_bits(), scores[1].to_bits());
    }

    #[test]
    fn defaults_follow_the_training_protocol() {
        let config = DetectorConfig::default();
        assert_eq!(config.batch_size, 32);
        assert_eq!(config.dropout_rate, 0.1);
        assert_eq!(config.learning_rate, 2e-5);
        assert_eq!(config.epochs, 3);
        assert_eq!(config.loss, Loss::CrossEntropy);
        assert_eq!(config.optimizer, Optimizer::AdaptiveMoment);
        assert!(!config.class_weighting);
        config.validate().unwrap();
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for config in [
            DetectorConfig {
                epochs: 0,
                ..DetectorConfig::default()
            },
            DetectorConfig {
                batch_size: 0,
                ..DetectorConfig::default()
            },
            DetectorConfig {
                dropout_rate: 1.0,
                ..DetectorConfig::default()
            },
            DetectorConfig {
                learning_rate: 0.0,
                ..DetectorConfig::default()
            },
        ] {
            assert!(config.validate().is_err(), "accepted {config:?}");
        }
    }

    #[test]
    fn save_and_load_reproduce_scores_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let examples = separable_examples();
        let model = train(&DetectorConfig::default(), &whitespace(), None, &examples).unwrap();
        model.save(dir.path()).unwrap();
        let loaded = TrainedDetector::load(dir.path(), None, None).unwrap();
        assert_eq!(loaded.fingerprint(), model.fingerprint());
        let texts: Vec<String> = vec!["grr filler".into(), "calm filler".into(), "".into()];
        let original = model.predict_scores(&texts).unwrap();
        let reloaded = loaded.predict_scores(&texts).unwrap();
        for (a, b) in original.iter().zip(&reloaded) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn corrupt_params_blob_is_an_integrity_error() {
        let dir = tempfile::tempdir().unwrap();
        let model = train(
            &DetectorConfig::default(),
            &whitespace(),
            None,
            &separable_examples(),
        )
        .unwrap();
        model.save(dir.path()).unwrap();
        let params = dir.path().join("params.bin");
        let mut blob = std::fs::read(&params).unwrap();
        blob.truncate(blob.len() - 3); // no longer a multiple of 8
        std::fs::write(&params, &blob).unwrap();
        assert!(matches!(
            TrainedDetector::load(dir.path(), None, None),
            Err(Error::Integrity(_))
        ));
    }

    #[test]
    fn classify_applies_the_inclusive_threshold() {
        let ids = [PostId(1), PostId(2), PostId(3)];
        let scores = [0.5, 0.49, 0.0];
        let records = classify(&ids, &scores, 0.5).unwrap();
        assert!(records[0].decision);
        assert!(!records[1].decision);
        assert!(!records[2].decision);

        let all_zero = classify(&ids, &[0.0; 3], 0.5).unwrap();
        assert!(all_zero.iter().all(|r| !r.decision));
    }

    #[test]
    fn classify_threshold_bounds() {
        let ids = [PostId(1)];
        assert!(classify(&ids, &[0.5], 0.0).is_err());
        assert!(classify(&ids, &[0.5], 1.0).is_err());
        assert!(classify(&ids, &[0.5, 0.6], 0.5).is_err()); // length mismatch
    }

    #[test]
    fn predictions_tsv_round_trips() {
        let records = classify(&[PostId(7), PostId(8)], &[0.25, 0.75], 0.5).unwrap();
        let mut buf = Vec::new();
        write_predictions_tsv(&mut buf, &records).unwrap();
        let parsed = read_predictions_tsv(buf.as_slice()).unwrap();
        assert_eq!(parsed, records);
    }

    #[test]
    fn fingerprint_is_order_independent_and_id_sensitive() {
        let a = fingerprint_of_ids([PostId(1), PostId(2), PostId(3)]);
        let b = fingerprint_of_ids([PostId(3), PostId(1), PostId(2)]);
        let c = fingerprint_of_ids([PostId(1), PostId(2), PostId(4)]);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn class_weighting_shifts_scores_toward_the_rare_class() {
        // 2 positives, 18 negatives, overlapping vocabulary.
        let examples: Vec<TrainExample> = (0..20)
            .map(|i| TrainExample {
                post_id: PostId(i),
                text: if i < 2 {
                    "shared rare".to_string()
                } else {
                    "shared common".to_string()
                },
                hidden: i < 2,
            })
            .collect();
        let plain = train(&DetectorConfig::default(), &whitespace(), None, &examples).unwrap();
        let weighted = train(
            &DetectorConfig {
                class_weighting: true,
                ..DetectorConfig::default()
            },
            &whitespace(),
            None,
            &examples,
        )
        .unwrap();
        let text = vec!["shared rare".to_string()];
        let plain_score = plain.predict_scores(&text).unwrap()[0];
        let weighted_score = weighted.predict_scores(&text).unwrap()[0];
        assert!(
            weighted_score > plain_score,
            "weighted {weighted_score} <= plain {plain_score}"
        );
    }

    /// An encoder bridge stub: `train` emits a fixed blob; `predict` emits
    /// 0.5 per input line. Exercises the full subprocess protocol.
    fn stub_encoder_script(dir: &Path) -> PathBuf {
        let path = dir.join("stub-encoder.sh");
        let script = r#"#!/bin/sh
mode="$1"
if [ "$mode" = "train" ]; then
  cat > /dev/null
  printf 'stub-params'
else
  while IFS= read -r _line; do
    printf '0.5\n'
  done
fi
"#;
        std::fs::write(&path, script).unwrap();
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(&path, std::fs::Permissions::from_mode(0o755)).unwrap();
        path
    }

    #[test]
    fn encoder_bridge_round_trips_through_a_stub_command() {
        let dir = tempfile::tempdir().unwrap();
        let script = stub_encoder_script(dir.path());
        let bridge = EncoderBridge::new(script.display().to_string(), vec![]);
        let config = DetectorConfig {
            backend: Backend::Encoder,
            encoder_checkpoint: Some("stub-checkpoint".into()),
            ..DetectorConfig::default()
        };
        let examples = separable_examples();
        let model = train(&config, &whitespace(), Some(&bridge), &examples).unwrap();
        assert_eq!(model.params_blob(), b"stub-params");

        let texts: Vec<String> = vec!["first".into(), "second".into()];
        let scores = model.predict_scores(&texts).unwrap();
        assert_eq!(scores, vec![0.5, 0.5]);

        // Artifact round trip keeps the opaque blob intact.
        let model_dir = dir.path().join("model");
        model.save(&model_dir).unwrap();
        let loaded = TrainedDetector::load(&model_dir, None, Some(&bridge)).unwrap();
        assert_eq!(loaded.params_blob(), b"stub-params");
        assert_eq!(loaded.predict_scores(&texts).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn duplicating_one_example_barely_moves_held_out_scores() {
        // Stability smoke test at unit scale: AUC on a held-out slice moves
        // by less than 0.02 when one training text is duplicated.
        let examples = separable_examples();
        let held_out: Vec<TrainExample> = (100..140)
            .map(|i| {
                let hidden = i % 2 == 0;
                TrainExample {
                    post_id: PostId(i),
                    text: if hidden {
                        format!("grr token{}", i % 7)
                    } else {
                        format!("calm token{}", i % 7)
                    },
                    hidden,
                }
            })
            .collect();
        let texts: Vec<String> = held_out.iter().map(|ex| ex.text.clone()).collect();
        let labels: Vec<bool> = held_out.iter().map(|ex| ex.hidden).collect();

        let base_model =
            train(&DetectorConfig::default(), &whitespace(), None, &examples).unwrap();
        let base_auc = metrics::auc_rank(
            &base_model.predict_scores(&texts).unwrap(),
            &labels,
        )
        .unwrap();

        let mut duplicated = examples.clone();
        duplicated.push(TrainExample {
            post_id: PostId(999),
            ..duplicated[0].clone()
        });
        let dup_model =
            train(&DetectorConfig::default(), &whitespace(), None, &duplicated).unwrap();
        let dup_auc = metrics::auc_rank(
            &dup_model.predict_scores(&texts).unwrap(),
            &labels,
        )
        .unwrap();

        assert!(
            (base_auc - dup_auc).abs() < 0.02,
            "base {base_auc}, duplicated {dup_auc}"
        );
    }
}

//! Tokenization for the frequency-difference miner and the baseline detector:
//! whitespace and character-ngram modes built in, morphological analyzers
//! pluggable through an adapter contract.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader, Write as IoWrite};
use std::process::{Command, Stdio};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SegmenterMode {
    /// Split on Unicode whitespace runs.
    #[default]
    Whitespace,
    /// All contiguous character n-grams of the normalized text.
    CharNgram,
    /// Delegate to a registered morphological-analyzer adapter.
    ExternalMorphological,
}

impl fmt::Display for SegmenterMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SegmenterMode::Whitespace => f.write_str("whitespace"),
            SegmenterMode::CharNgram => f.write_str("char-ngram"),
            SegmenterMode::ExternalMorphological => f.write_str("external-morphological"),
        }
    }
}

impl std::str::FromStr for SegmenterMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "whitespace" => Ok(SegmenterMode::Whitespace),
            "char-ngram" => Ok(SegmenterMode::CharNgram),
            "external-morphological" => Ok(SegmenterMode::ExternalMorphological),
            other => Err(Error::InvalidArgument(format!(
                "unknown segmenter mode `{other}` (expected whitespace, char-ngram, \
                 or external-morphological)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Normalizer {
    /// Leave text untouched.
    #[default]
    None,
    /// Unicode compatibility fold (NFKC); collapses width variants common
    /// in SNS text (ｱ/ア, Ａ/A).
    UnicodeCompatibilityFold,
}

impl fmt::Display for Normalizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Normalizer::None => f.write_str("none"),
            Normalizer::UnicodeCompatibilityFold => f.write_str("unicode-compatibility-fold"),
        }
    }
}

impl std::str::FromStr for Normalizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Normalizer::None),
            "unicode-compatibility-fold" => Ok(Normalizer::UnicodeCompatibilityFold),
            other => Err(Error::InvalidArgument(format!(
                "unknown normalizer `{other}` (expected none or unicode-compatibility-fold)"
            ))),
        }
    }
}

pub const MIN_NGRAM_N: usize = 1;
pub const MAX_NGRAM_N: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmenterConfig {
    pub mode: SegmenterMode,
    /// Window length for [`SegmenterMode::CharNgram`]; ignored otherwise.
    pub ngram_n: usize,
    pub normalizer: Normalizer,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        SegmenterConfig {
            mode: SegmenterMode::Whitespace,
            ngram_n: 2,
            normalizer: Normalizer::None,
        }
    }
}

impl SegmenterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(MIN_NGRAM_N..=MAX_NGRAM_N).contains(&self.ngram_n) {
            return Err(Error::InvalidArgument(format!(
                "ngram_n {} outside {MIN_NGRAM_N}..={MAX_NGRAM_N}",
                self.ngram_n
            )));
        }
        Ok(())
    }
}

/// Pluggable tokenizer contract. Implementations must be safe for concurrent
/// calls; batch work is routed through [`SegmenterAdapter::segment_batch`]
/// so process-backed adapters can serialize into one subprocess invocation.
pub trait SegmenterAdapter: Send + Sync {
    fn name(&self) -> &str;

    /// Tokenize one text.
    fn segment(&self, text: &str) -> Result<Vec<String>>;

    /// Tokenize a batch; the default forwards to [`SegmenterAdapter::segment`]
    /// per text.
    fn segment_batch(&self, texts: &[String]) -> Result<Vec<Vec<String>>> {
        texts.iter().map(|t| self.segment(t)).collect()
    }
}

/// Adapter that shells out to an external tokenizer command.
///
/// Wire protocol: each input text is written to the child's stdin on its own
/// line, with embedded tabs, carriage returns, and newlines replaced by
/// spaces (all are token separators to any reasonable segmenter). The child
/// must reply with exactly one line per input: the tokens, tab-separated;
/// an empty line means no tokens.
pub struct CommandAdapter {
    name: String,
    program: String,
    args: Vec<String>,
}

impl CommandAdapter {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        let program = program.into();
        CommandAdapter {
            name: format!("command:{program}"),
            program,
            args,
        }
    }

    /// Parse a shell-free command line: program followed by
    /// whitespace-separated arguments.
    pub fn from_command_line(line: &str) -> Result<Self> {
        let mut parts = line.split_whitespace().map(str::to_string);
        let program = parts
            .next()
            .ok_or_else(|| Error::Config("empty segmenter command line".into()))?;
        Ok(CommandAdapter::new(program, parts.collect()))
    }

    fn adapter_error(&self, message: impl Into<String>) -> Error {
        Error::Adapter {
            name: self.name.clone(),
            message: message.into(),
        }
    }
}

fn sanitize_for_line_protocol(text: &str) -> String {
    text.replace(['\t', '\n', '\r'], " ")
}

impl SegmenterAdapter for CommandAdapter {
    fn name(&self) -> &str {
        &self.name
    }

    fn segment(&self, text: &str) -> Result<Vec<String>> {
        let mut out = self.segment_batch(std::slice::from_ref(&text.to_string()))?;
        Ok(out.pop().expect("one output per input"))
    }

    fn segment_batch(&self, texts: &[String]) -> Result<Vec<Vec<String>>> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| self.adapter_error(format!("failed to spawn `{}`: {e}", self.program)))?;

        let mut stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let payload: String = texts
            .iter()
            .map(|t| sanitize_for_line_protocol(t) + "\n")
            .collect();

        // Feed stdin from a second thread so a child that interleaves
        // reading and writing cannot deadlock against a full pipe.
        let lines = std::thread::scope(|scope| -> Result<Vec<String>> {
            let writer = scope.spawn(move || -> std::io::Result<()> {
                stdin.write_all(payload.as_bytes())?;
                Ok(()) // dropping stdin closes the pipe
            });
            let mut lines = Vec::with_capacity(texts.len());
            for line in BufReader::new(stdout).lines() {
                lines.push(line.map_err(|e| self.adapter_error(format!("read failed: {e}")))?);
            }
            writer
                .join()
                .expect("stdin writer panicked")
                .map_err(|e| self.adapter_error(format!("write failed: {e}")))?;
            Ok(lines)
        })?;

        let status = child
            .wait()
            .map_err(|e| self.adapter_error(format!("wait failed: {e}")))?;
        if !status.success() {
            let mut stderr = String::new();
            if let Some(mut pipe) = child.stderr.take() {
                use std::io::Read;
                let _ = pipe.read_to_string(&mut stderr);
            }
            return Err(self.adapter_error(format!(
                "exited with {status}: {}",
                stderr.trim()
            )));
        }
        if lines.len() != texts.len() {
            return Err(self.adapter_error(format!(
                "expected {} output lines, got {}",
                texts.len(),
                lines.len()
            )));
        }
        Ok(lines
            .into_iter()
            .map(|line| {
                line.split('\t')
                    .filter(|t| !t.is_empty())
                    .map(str::to_string)
                    .collect()
            })
            .collect())
    }
}

/// A configured tokenizer, carrying the adapter when the mode needs one.
#[derive(Clone)]
pub struct Segmenter {
    config: SegmenterConfig,
    adapter: Option<Arc<dyn SegmenterAdapter>>,
}

impl fmt::Debug for Segmenter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Segmenter")
            .field("config", &self.config)
            .field(
                "adapter",
                &self.adapter.as_ref().map(|a| a.name().to_string()),
            )
            .finish()
    }
}

impl Segmenter {
    /// Build a segmenter for the pure modes. External-morphological mode
    /// requires [`Segmenter::with_adapter`].
    pub fn new(config: SegmenterConfig) -> Result<Self> {
        config.validate()?;
        if config.mode == SegmenterMode::ExternalMorphological {
            return Err(Error::Config(
                "external-morphological mode requires a registered segmenter adapter".into(),
            ));
        }
        Ok(Segmenter {
            config,
            adapter: None,
        })
    }

    pub fn with_adapter(
        config: SegmenterConfig,
        adapter: Arc<dyn SegmenterAdapter>,
    ) -> Result<Self> {
        config.validate()?;
        Ok(Segmenter {
            config,
            adapter: Some(adapter),
        })
    }

    pub fn config(&self) -> &SegmenterConfig {
        &self.config
    }

    fn normalize(&self, text: &str) -> String {
        match self.config.normalizer {
            Normalizer::None => text.to_string(),
            Normalizer::UnicodeCompatibilityFold => text.nfkc().collect(),
        }
    }

    /// Tokenize one text. Deterministic and pure in the built-in modes.
    pub fn segment(&self, text: &str) -> Result<Vec<String>> {
        let normalized = self.normalize(text);
        match self.config.mode {
            SegmenterMode::Whitespace => Ok(normalized
                .split_whitespace()
                .map(str::to_string)
                .collect()),
            SegmenterMode::CharNgram => {
                let chars: Vec<char> = normalized.chars().collect();
                let n = self.config.ngram_n;
                if chars.len() < n {
                    return Ok(Vec::new());
                }
                Ok(chars.windows(n).map(|w| w.iter().collect()).collect())
            }
            SegmenterMode::ExternalMorphological => match &self.adapter {
                Some(adapter) => adapter.segment(&normalized),
                None => Err(Error::Config(
                    "external-morphological mode requires a registered segmenter adapter".into(),
                )),
            },
        }
    }

    /// Tokenize a batch, preserving order. Built-in modes fan out across the
    /// worker pool; adapter-backed segmentation goes through one serialized
    /// [`SegmenterAdapter::segment_batch`] call.
    pub fn segment_batch(&self, texts: &[String]) -> Result<Vec<Vec<String>>> {
        match self.config.mode {
            SegmenterMode::ExternalMorphological => {
                let adapter = self.adapter.as_ref().ok_or_else(|| {
                    Error::Config(
                        "external-morphological mode requires a registered segmenter adapter"
                            .into(),
                    )
                })?;
                let normalized: Vec<String> =
                    texts.iter().map(|t| self.normalize(t)).collect();
                adapter.segment_batch(&normalized)
            }
            _ => par::map_collect(texts, |t| self.segment(t)).into_iter().collect(),
        }
    }
}

/// Dense token inventory with per-token training-set document frequency.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    doc_freq: Vec<u64>,
}

impl Vocabulary {
    fn from_ordered(entries: Vec<(String, u64)>) -> Self {
        let mut tokens = Vec::with_capacity(entries.len());
        let mut doc_freq = Vec::with_capacity(entries.len());
        let mut index = HashMap::with_capacity(entries.len());
        for (token, df) in entries {
            index.insert(token.clone(), tokens.len());
            tokens.push(token);
            doc_freq.push(df);
        }
        Vocabulary {
            tokens,
            index,
            doc_freq,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn doc_freq(&self, index: usize) -> u64 {
        self.doc_freq[index]
    }

    /// TSV artifact: index, token, document frequency.
    pub fn write_tsv<W: IoWrite>(&self, mut w: W) -> Result<()> {
        writeln!(w, "index\ttoken\tdoc_freq")?;
        for (i, token) in self.tokens.iter().enumerate() {
            if token.contains(['\t', '\n', '\r']) {
                return Err(Error::Integrity(format!(
                    "token at index {i} contains a TSV separator"
                )));
            }
            writeln!(w, "{i}\t{token}\t{}", self.doc_freq[i])?;
        }
        Ok(())
    }

    pub fn read_tsv<R: std::io::Read>(reader: R) -> Result<Vocabulary> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(b'\t')
            .quoting(false)
            .from_reader(reader);
        let mut entries = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() < 3 {
                return Err(Error::Integrity(format!("short vocabulary row {row}")));
            }
            let index: usize = record[0]
                .parse()
                .map_err(|_| Error::Integrity(format!("bad index `{}`", &record[0])))?;
            if index != row {
                return Err(Error::Integrity(format!(
                    "vocabulary indices not dense: expected {row}, found {index}"
                )));
            }
            let df: u64 = record[2]
                .parse()
                .map_err(|_| Error::Integrity(format!("bad doc_freq `{}`", &record[2])))?;
            entries.push((record[1].to_string(), df));
        }
        let vocab = Vocabulary::from_ordered(entries);
        if vocab.index.len() != vocab.tokens.len() {
            return Err(Error::Integrity("duplicate token in vocabulary".into()));
        }
        Ok(vocab)
    }
}

/// Build the detector feature inventory: tokens appearing in at least
/// `min_df` training texts, ordered by (descending document frequency,
/// token lexicographic) so indices are stable across runs and platforms.
pub fn build_vocabulary(
    texts: &[String],
    segmenter: &Segmenter,
    min_df: u64,
) -> Result<Vocabulary> {
    if texts.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot build a vocabulary from zero texts".into(),
        ));
    }
    if min_df == 0 {
        return Err(Error::InvalidArgument("min_df must be at least 1".into()));
    }
    let token_lists = segmenter.segment_batch(texts)?;
    build_vocabulary_from_tokens(&token_lists, min_df)
}

/// Same as [`build_vocabulary`], over already-segmented texts.
pub fn build_vocabulary_from_tokens(
    token_lists: &[Vec<String>],
    min_df: u64,
) -> Result<Vocabulary> {
    let mut df: BTreeMap<&str, u64> = BTreeMap::new();
    for tokens in token_lists {
        let unique: BTreeSet<&str> = tokens.iter().map(String::as_str).collect();
        for token in unique {
            *df.entry(token).or_insert(0) += 1;
        }
    }
    let mut entries: Vec<(String, u64)> = df
        .into_iter()
        .filter(|&(_, count)| count >= min_df)
        .map(|(token, count)| (token.to_string(), count))
        .collect();
    if entries.is_empty() {
        return Err(Error::EmptyVocabulary(format!(
            "no token reaches document frequency {min_df}"
        )));
    }
    // BTreeMap iteration is already lexicographic; the stable sort keeps
    // that order inside each frequency class.
    entries.sort_by(|a, b| b.1.cmp(&a.1));
    Ok(Vocabulary::from_ordered(entries))
}
